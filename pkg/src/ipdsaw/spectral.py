"""h_beta(delta) as the log Perron eigenvalue of the area-discounted kernel.

K(x, y) = exp(-delta |y|) pmf(y - x) on [-M, M].  With D = diag(exp(-delta|x|))
the matrix D^{1/2} P D^{1/2} is symmetric and similar to K, so power iteration
on it gives a Rayleigh quotient that converges at twice the usual rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .law import WalkLaw

M_HARD_CAP = 1 << 21


class SpectralConvergenceError(RuntimeError):
    pass


def initial_half_width(delta: float) -> int:
    return max(32, int(math.ceil(6 * delta ** (-2.0 / 3.0))))


@dataclass
class DiscountKernel:
    law: WalkLaw
    delta: float
    M: int

    @property
    def positions(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def dense(self) -> np.ndarray:
        """Explicit matrix, for small M in tests."""
        x = self.positions
        return np.exp(-self.delta * np.abs(x))[None, :] * self.law.pmf(x[None, :] - x[:, None])

    def apply(self, f: np.ndarray) -> np.ndarray:
        """(f K)(y) = exp(-delta|y|) sum_x f(x) pmf(y - x)."""
        out = np.empty((1, f.size))
        kernels.geom_conv(np.ascontiguousarray(f.reshape(1, -1)), self.law.x, self.law.x, out)
        return out[0] * np.exp(-self.delta * np.abs(self.positions)) / self.law.c


@dataclass
class EigenResult:
    log_lambda: float
    vector: np.ndarray
    iterations: int


def _airy_guess(law: WalkLaw, delta: float, M: int) -> np.ndarray:
    # ground state of -(sigma^2/2) psi'' + delta |x| psi decays like exp(-(2/3)(|x|/ell)^{3/2})
    ell = (law.sigma2 / (2 * delta)) ** (1.0 / 3.0)
    x = np.abs(np.arange(-M, M + 1))
    return np.exp(-(2.0 / 3.0) * (x / ell) ** 1.5)


def perron_log_eigenvalue(law: WalkLaw, delta: float, M: int, tol: float = 1e-12,
                          start: np.ndarray | None = None, max_iter: int = 200000) -> EigenResult:
    """Power iteration on D^{1/2} P D^{1/2}.

    Stops once successive Rayleigh quotients differ by less than tol/10 and
    the geometric-tail estimate of the remaining error (from the ratio of
    consecutive differences) is below tol/10 as well.
    """
    x = np.arange(-M, M + 1)
    half = np.exp(-0.5 * delta * np.abs(x))
    u = _airy_guess(law, delta, M) if start is None else start.astype(float).copy()
    u /= np.linalg.norm(u)
    buf = np.empty((1, u.size))
    r, inv_c = law.x, 1.0 / law.c
    prev_q, prev_d = None, None
    for it in range(1, max_iter + 1):
        kernels.geom_conv((half * u).reshape(1, -1), r, r, buf)
        w = half * buf[0] * inv_c
        q = float(u @ w)
        u = w / np.linalg.norm(w)
        if prev_q is not None:
            d = abs(q - prev_q)
            if d <= 8 * np.finfo(float).eps * q:
                return EigenResult(math.log(q), u, it)
            if d < tol / 10 * q:
                rho = d / prev_d if prev_d else 0.0
                tail = d * rho / (1 - rho) if rho < 1 else math.inf
                if tail < tol / 10 * q:
                    return EigenResult(math.log(q), u, it)
            prev_d = d
        prev_q = q
    raise SpectralConvergenceError(f"power iteration did not settle at M={M} after {max_iter} steps")


@dataclass
class HBetaResult:
    value: float
    M: int
    iterations: int
    history: list


def h_beta_details(law: WalkLaw, delta: float, tol: float = 1e-10) -> HBetaResult:
    if delta < 0 or not tol > 0:
        raise ValueError("need delta >= 0 and tol > 0")
    if delta == 0:
        return HBetaResult(0.0, 0, 0, [])
    M = initial_half_width(delta)
    res = perron_log_eigenvalue(law, delta, M, tol)
    hist = [(M, res.log_lambda)]
    its = res.iterations
    while True:
        M2 = 2 * M
        if M2 > M_HARD_CAP:
            raise SpectralConvergenceError(f"M exceeded {M_HARD_CAP}; last iterates {hist[-2:]}")
        start = np.zeros(2 * M2 + 1)
        start[M2 - M: M2 + M + 1] = res.vector
        start += 1e-300
        res2 = perron_log_eigenvalue(law, delta, M2, tol, start=start)
        its += res2.iterations
        hist.append((M2, res2.log_lambda))
        if abs(res2.log_lambda - res.log_lambda) < tol:
            return HBetaResult(min(res2.log_lambda, 0.0), M2, its, hist)
        M, res = M2, res2


def h_beta(law: WalkLaw, delta: float, tol: float = 1e-10) -> float:
    """lim (1/N) log E[exp(-delta A_N) 1{V_N = 0}], always <= 0."""
    return h_beta_details(law, delta, tol).value


def h_beta_finite(law: WalkLaw, delta: float, N: int, M: int | None = None) -> float:
    """(1/N) log of the (0, 0) entry of K^N on [-M, M]."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if M is None:
        M = int(math.ceil(10 * math.sqrt(law.sigma2 * N))) + 50
    kern = DiscountKernel(law, delta, M)
    f = np.zeros(2 * M + 1)
    f[M] = 1.0
    log_acc = 0.0
    for _ in range(N):
        f = kern.apply(f)
        s = f.max()
        f /= s
        log_acc += math.log(s)
    return (log_acc + math.log(f[M])) / N


@dataclass
class ScalingRow:
    delta: float
    h: float
    ratio: float


def critical_scaling_scan(law: WalkLaw, delta_grid, tol: float = 1e-10) -> list:
    """h(delta) / delta^{2/3} along a descending grid in (0, 0.2]."""
    grid = [float(d) for d in delta_grid]
    if any(not 0 < d <= 0.2 for d in grid) or grid != sorted(grid, reverse=True):
        raise ValueError("delta grid must be descending inside (0, 0.2]")
    rows = []
    for d in grid:
        h = h_beta(law, d, tol)
        rows.append(ScalingRow(d, h, h / d ** (2.0 / 3.0)))
    return rows


def cauchy_spread(rows, last: int = 3) -> float:
    """Relative spread max|r_i - r_j| / |r_last| over the final grid points."""
    r = np.array([row.ratio for row in rows[-last:]])
    return float((r.max() - r.min()) / abs(r[-1]))
