"""Tilting geometry: L_Lambda and its derivatives, tilt solvers, G~, a*, Wulff shape.

L_Lambda(H) = int_0^1 L(x h0 + h1) dx on the strip where both |h1| and
|h0 + h1| stay below beta/2.  All integrals go through one adaptive
Gauss-Legendre routine that handles a stack of integrands at once.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .law import DomainError, WalkLaw, log_gamma_factor

QUAD_TOL = 1e-12
DOMAIN_MARGIN = 1e-9
NEWTON_MAX_ITER = 80
N_FLOOR = 8

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


class PhaseError(ValueError):
    """Raised when a collapsed-phase object is requested with Gamma >= 1."""


class TiltSolverError(RuntimeError):
    pass


def integrate(f, a: float, b: float, tol: float = QUAD_TOL, max_depth: int = 60,
              right: float | None = None) -> np.ndarray:
    """Adaptive Gauss-Legendre for a vectorised f(x) -> array (k, len(x)).

    A panel is accepted when its 24-point rule and the sum over its two
    halves agree to within the panel's share of ``tol``, or to round-off.
    With ``right`` set, f is called as f(x, right - x) where the second
    argument is formed without cancellation; integrands with a pole just
    past ``right`` use it to keep full relative accuracy there.
    """
    def rule(lo, hi):
        half = 0.5 * (hi - lo)
        xs = lo + half * (_GL_X + 1.0)
        if right is None:
            vals = f(xs)
        else:
            vals = f(xs, (right - hi) + half * (1.0 - _GL_X))
        return half * (np.atleast_2d(vals) @ _GL_W)

    total = 0.0
    first = rule(a, b)
    # round-off floor tied to the size of the whole integral: once a panel's
    # disagreement is below what double precision can resolve in the final
    # sum, splitting further only chases noise in f
    scale = 16 * np.finfo(float).eps * max(float(np.max(np.abs(first))), 1.0)
    stack = [(a, b, first, 0)]
    while stack:
        lo, hi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right_half = rule(lo, mid), rule(mid, hi)
        refined = left + right_half
        err = np.max(np.abs(refined - whole))
        floor = max(64 * np.finfo(float).eps * np.max(np.abs(refined)), scale)
        if err <= max(tol * (hi - lo) / (b - a), floor) or depth >= max_depth:
            total = total + refined
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right_half, depth + 1))
    return total


def _pole_distances(law: WalkLaw, slope: float, offset: float, x, d):
    """t = beta/2 - h and s = beta/2 + h for h = slope x + offset on [0, 1], with d = 1 - x.

    Each is built from whichever end of [0, 1] is closer, so the distance to
    a pole near an end carries relative, not absolute, rounding error.
    """
    half = law.beta / 2
    near_right = d < 0.5
    t = np.where(near_right, (half - slope - offset) + slope * d, (half - offset) - slope * x)
    s = np.where(near_right, (half + slope + offset) - slope * d, (half + offset) + slope * x)
    return t, s


def check_domain(law: WalkLaw, H, margin: float = DOMAIN_MARGIN):
    h0, h1 = H
    lim = law.beta / 2 - margin
    if not (abs(h1) <= lim and abs(h0 + h1) <= lim):
        raise DomainError(f"H = ({h0}, {h1}) outside the tilt domain (margin {margin})")


def _stack(law: WalkLaw, H, kinds):
    h0, h1 = H

    def f(x, d):
        t, s = _pole_distances(law, h0, h1, x, d)
        cache = {}
        rows = []
        for order, power in kinds:
            if order not in cache:
                cache[order] = law.log_mgf_edge(t, s, order)
            rows.append(cache[order] * x ** power)
        return np.vstack(rows)

    return f


def L_Lambda(law: WalkLaw, H) -> float:
    check_domain(law, H)
    return float(integrate(_stack(law, H, [(0, 0)]), 0.0, 1.0, right=1.0)[0])


def grad_L_Lambda(law: WalkLaw, H) -> np.ndarray:
    check_domain(law, H)
    return integrate(_stack(law, H, [(1, 1), (1, 0)]), 0.0, 1.0, right=1.0)


def hessian_B(law: WalkLaw, H) -> np.ndarray:
    check_domain(law, H)
    b00, b01, b11 = integrate(_stack(law, H, [(2, 2), (2, 1), (2, 0)]), 0.0, 1.0, right=1.0)
    return np.array([[b00, b01], [b01, b11]])


@dataclass
class TiltPoint:
    law: WalkLaw
    H: tuple
    value: float = field(init=False)
    grad: np.ndarray = field(init=False)
    B: np.ndarray = field(init=False)

    def __post_init__(self):
        check_domain(self.law, self.H)
        vals = integrate(_stack(self.law, self.H, [(0, 0), (1, 1), (1, 0), (2, 2), (2, 1), (2, 0)]),
                         0.0, 1.0, right=1.0)
        self.value = float(vals[0])
        self.grad = vals[1:3].copy()
        self.B = np.array([[vals[3], vals[4]], [vals[4], vals[5]]])

    @property
    def h0(self) -> float:
        return self.H[0]

    @property
    def h1(self) -> float:
        return self.H[1]


def R_reduced(law: WalkLaw, u: float, order: int = 0) -> float:
    """R(u) = int_0^1 x L'((x - 1/2) u) dx, or its u-derivative for order=1."""
    if order == 0:
        f = lambda x, d: x * law.log_mgf_edge(*_pole_distances(law, u, -u / 2, x, d), 1)
    else:
        f = lambda x, d: x * (x - 0.5) * law.log_mgf_edge(*_pole_distances(law, u, -u / 2, x, d), 2)
    return float(integrate(f, 0.0, 1.0, right=1.0)[0])


def _solve_u(law: WalkLaw, q: float) -> float:
    lo, hi = 0.0, law.beta - 2 * DOMAIN_MARGIN
    if R_reduced(law, hi) < q:
        raise TiltSolverError(f"q = {q} needs u beyond the tilt domain")
    u = min(0.5 * hi, q / max(R_reduced(law, 0.0, 1), 1e-300))
    for _ in range(NEWTON_MAX_ITER):
        f = R_reduced(law, u) - q
        if abs(f) <= 1e-14 * max(1.0, q):
            return u
        if f > 0:
            hi = u
        else:
            lo = u
        step = f / R_reduced(law, u, 1)
        cand = u - step
        if not lo < cand < hi:
            cand = 0.5 * (lo + hi)
        if abs(cand - u) <= 1e-16 * max(1.0, u):
            return cand
        u = cand
    raise TiltSolverError(f"R(u) = {q} did not converge (last u = {u})")


def _newton2(F, J, H0, domain, tol: float, label: str):
    """Damped Newton; returns (H, residual) once |F| <= tol or no step reduces |F|.

    Stalling above tol is not an error here: the caller decides whether the
    residual reached is good enough.
    """
    H = np.array(H0, dtype=float)
    r = F(H)
    path = [H.copy()]
    for _ in range(NEWTON_MAX_ITER):
        if np.linalg.norm(r) <= tol:
            return H, r
        step = np.linalg.solve(J(H), r)
        t = 1.0
        cand, rc = None, None
        while t >= 1e-12:
            trial = H - t * step
            if domain(trial):
                rt = F(trial)
                if np.linalg.norm(rt) < np.linalg.norm(r):
                    cand, rc = trial, rt
                    break
            t *= 0.5
        if cand is None:
            return H, r
        H, r = cand, rc
        path.append(H.copy())
    if np.linalg.norm(r) <= tol:
        return H, r
    raise TiltSolverError(f"{label}: Newton did not converge; iterates {path[-3:]}")


def solve_tilt(law: WalkLaw, q: float, tol: float = 1e-10) -> TiltPoint:
    """H~(q, 0): gradient of L_Lambda equal to (q, 0).

    The symmetric ansatz H = (u, -u/2) turns the second equation into an
    identity and the first into R(u) = q; a 2-D Newton pass then confirms.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    u = _solve_u(law, q)
    target = np.array([q, 0.0])

    def inside(H):
        try:
            check_domain(law, H)
            return True
        except DomainError:
            return False

    H, _ = _newton2(lambda H: grad_L_Lambda(law, H) - target, lambda H: hessian_B(law, H),
                    (u, -u / 2), inside, tol * 1e-2, "solve_tilt")
    tp = TiltPoint(law, (float(H[0]), float(H[1])))
    if np.linalg.norm(tp.grad - target) > tol:
        raise TiltSolverError(f"residual {np.linalg.norm(tp.grad - target)} above {tol}")
    return tp


def h0_tilde(law: WalkLaw, q: float) -> float:
    """h~_0(q, 0) from the one-dimensional reduction alone."""
    return _solve_u(law, q)


def finite_system(law: WalkLaw, n: int, H):
    """(F_1, F_2) = grad of (1/n) L_{Lambda_n} and its Jacobian."""
    x = np.arange(n) / n
    h = x * H[0] + H[1]
    d1, d2 = law.log_mgf(h, 1), law.log_mgf(h, 2)
    F = np.array([np.mean(x * d1), np.mean(d1)])
    J = np.array([[np.mean(x * x * d2), np.mean(x * d2)], [np.mean(x * d2), np.mean(d2)]])
    return F, J


def L_Lambda_n(law: WalkLaw, n: int, H) -> float:
    """sum_{i=1}^n L((1 - i/n) h0 + h1)."""
    x = np.arange(n) / n
    return float(np.sum(law.log_mgf(x * H[0] + H[1])))


def solve_tilt_finite(law: WalkLaw, n: int, q: float, tol: float = 1e-10, n_floor: int = N_FLOOR):
    """H_n^q: gradient of (1/n) L_{Lambda_n} equal to (q, 0)."""
    if n < n_floor:
        raise ValueError(f"n must be >= {n_floor}")
    if not q > 0:
        raise ValueError("q must be positive")
    seed = solve_tilt(law, q).H
    target = np.array([q, 0.0])
    lim = law.beta / 2

    def inside(H):
        return abs(H[1]) < lim and abs((1 - 1 / n) * H[0] + H[1]) < lim

    H, r = _newton2(lambda H: finite_system(law, n, H)[0] - target,
                    lambda H: finite_system(law, n, H)[1], seed, inside, tol, "solve_tilt_finite")
    if np.linalg.norm(r) > tol:
        raise TiltSolverError(f"solve_tilt_finite: residual {np.linalg.norm(r):.3e} above {tol} "
                              f"at H = {tuple(H)} (n = {n}, q = {q})")
    return float(H[0]), float(H[1])


def decay_rate(law: WalkLaw, q: float) -> float:
    """L_Lambda(H~) - h~_0 q, the exponential rate of P(Y_n = nq, V_n = 0)."""
    tp = solve_tilt(law, q)
    return tp.value - tp.h0 * q


def decay_rate_finite(law: WalkLaw, n: int, q: float) -> float:
    H = solve_tilt_finite(law, n, q)
    return L_Lambda_n(law, n, H) / n - H[0] * q


def _require_collapsed(law: WalkLaw, m) -> float:
    lg = log_gamma_factor(law.beta, m)
    if lg >= 0:
        raise PhaseError(f"Gamma >= 1 at beta = {law.beta}: no collapsed-phase maximiser")
    return lg


def G_tilde(law: WalkLaw, m, a: float) -> float:
    """a log Gamma - h~_0(1/a^2, 0)/a + a L_Lambda(H~(1/a^2, 0))."""
    if not a > 0:
        raise ValueError("a must be positive")
    tp = solve_tilt(law, 1.0 / a ** 2)
    return a * log_gamma_factor(law.beta, m) - tp.h0 / a + a * tp.value


def dG_tilde(law: WalkLaw, m, a: float) -> float:
    tp = solve_tilt(law, 1.0 / a ** 2)
    return log_gamma_factor(law.beta, m) + tp.h0 / a ** 2 + tp.value


def d2G_tilde(law: WalkLaw, m, a: float) -> float:
    """-2u/a^3 - 4/(a^5 R'(u)), using dh~_0/dq = 1/R'(u)."""
    u = _solve_u(law, 1.0 / a ** 2)
    return -2 * u / a ** 3 - 4 / (a ** 5 * R_reduced(law, u, 1))


def a_star(law: WalkLaw, m, tol: float = 1e-10) -> float:
    """Unique zero of dG~/da: bracket, bisect, then Newton."""
    _require_collapsed(law, m)
    f = lambda a: dG_tilde(law, m, a)
    lo = hi = 1.0
    while f(lo) <= 0:
        lo *= 0.8
    while f(hi) >= 0:
        hi *= 1.5
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    a = 0.5 * (lo + hi)
    for _ in range(NEWTON_MAX_ITER):
        g = f(a)
        if abs(g) <= tol * 1e-2:
            break
        a_new = a - g / d2G_tilde(law, m, a)
        if not lo - 1e-6 < a_new < hi + 1e-6:
            break
        if a_new == a:
            break
        a = a_new
    if abs(f(a)) > tol:
        raise TiltSolverError(f"dG residual {f(a)} above {tol}")
    return a


def legendre_Lstar(law: WalkLaw, v):
    """L*(v) = sup_h (h v - L(h)), solving L'(h) = v by bracketed Newton."""
    v = np.asarray(v, dtype=float)
    half = law.beta / 2
    av = np.abs(v)
    lo = np.zeros_like(av)
    hi = np.full_like(av, half)
    # L'(h) ~ 1/(beta/2 - h) near the edge, which gives a good start
    h = np.where(av > 0, half - 1.0 / (av + 2.0 / half), 0.0)
    h = np.clip(h, 0.0, half * (1 - 1e-15))
    for _ in range(200):
        g = law.log_mgf(h, 1) - av
        lo = np.where(g < 0, h, lo)
        hi = np.where(g > 0, h, hi)
        step = g / law.log_mgf(h, 2)
        cand = h - step
        bad = ~((cand > lo) & (cand < hi))
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        done = np.abs(cand - h) <= 4e-16 * np.maximum(1.0, np.abs(h))
        h = cand
        if np.all(done):
            break
    out = h * av - law.log_mgf(h)
    return float(out) if out.ndim == 0 else out


def rate_J(law: WalkLaw, gamma, grid=None) -> float:
    """sum over grid cells of L*(slope) dt for a piecewise linear profile."""
    g = np.asarray(gamma, dtype=float)
    t = np.linspace(0.0, 1.0, g.size) if grid is None else np.asarray(grid, dtype=float)
    dt = np.diff(t)
    return float(np.sum(legendre_Lstar(law, np.diff(g) / dt) * dt))


@dataclass
class WulffShape:
    law: WalkLaw
    a_star: float
    u: float
    s: np.ndarray
    gamma: np.ndarray
    J: float

    def __call__(self, s):
        """gamma*(s) = (L(u/2) - L((1/2 - s) u)) / u, exact antiderivative."""
        s = np.asarray(s, dtype=float)
        return (self.law.log_mgf(self.u / 2) - self.law.log_mgf((0.5 - s) * self.u)) / self.u

    def area(self) -> float:
        from scipy.integrate import simpson
        return float(simpson(self.gamma, x=self.s))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "gamma_star"])
            for s, g in zip(self.s, self.gamma):
                w.writerow([repr(float(s)), repr(float(g))])


def wulff_shape(law: WalkLaw, m, grid_size: int = 1025, a: float | None = None) -> WulffShape:
    """Cumulative quadrature of L'((1/2 - x) u), u = h~_0(1/a*^2, 0)."""
    if grid_size < 2:
        raise ValueError("grid needs at least two points")
    a = a_star(law, m) if a is None else a
    u = _solve_u(law, 1.0 / a ** 2)
    s = np.linspace(0.0, 1.0, grid_size)
    f = lambda x, d: law.log_mgf_edge(*_pole_distances(law, -u, u / 2, x, d), 1)
    pieces = np.array([integrate(f, s[j], s[j + 1], tol=1e-15, right=1.0)[0]
                       for j in range(grid_size - 1)])
    gamma = np.concatenate(([0.0], np.cumsum(pieces)))
    # J(gamma*) = int L*(gamma*'(t)) dt with the slope known in closed form
    slope = lambda t, d: law.log_mgf_edge(*_pole_distances(law, -u, u / 2, t, d), 1)
    J = float(integrate(lambda t, d: legendre_Lstar(law, slope(t, d)), 0.0, 1.0, right=1.0)[0])
    return WulffShape(law, a, u, s, gamma, J)


def gaussian_density(B, X) -> float:
    """(2 pi sqrt(det B))^{-1} exp(-<B^{-1} X, X>/2) for SPD B."""
    B = np.asarray(B, dtype=float)
    if B.shape != (2, 2) or not np.allclose(B, B.T, rtol=0, atol=1e-14 * np.abs(B).max()):
        raise ValueError("B must be a symmetric 2x2 matrix")
    try:
        C = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise ValueError("B is not positive definite") from exc
    X = np.asarray(X, dtype=float)
    z = np.linalg.solve(C, X)
    det = float(np.prod(np.diag(C))) ** 2
    return float(np.exp(-0.5 * z @ z) / (2 * math.pi * math.sqrt(det)))


@dataclass
class CLTRow:
    N: int
    scaled_prob: float
    density: float
    ratio: float
    mean_offset: float
    truncated: float


def local_clt_check(law: WalkLaw, q: float, N_list) -> list:
    """N^2 P_{N, H_N^q}(N Y_N = round(N^2 q), V_N = 0) against f_{H~(q,0)}(0, 0)."""
    from .areadp import tilted_joint_pmf

    f0 = gaussian_density(solve_tilt(law, q).B, (0.0, 0.0))
    rows = []
    for N in N_list:
        H = solve_tilt_finite(law, N, q)
        tab = tilted_joint_pmf(law, N, H)
        s_target = int(round(N * N * q))
        p = tab.prob(s_target, 0)
        es, _ = tab.mean()
        rows.append(CLTRow(N, N * N * p, f0, N * N * p / f0, es - N * N * q, tab.truncated))
    return rows
