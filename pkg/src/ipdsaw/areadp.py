"""Exact dynamic programming for the auxiliary walk under area/endpoint constraints.

The forward weight D_i(x, a) is the probability that the first i positions of
the walk end at x with geometric area a = |V_1| + ... + |V_i|.  One step is

    D_i(y, a) = sum_x D_{i-1}(x, a - |y|) pmf(y - x),

and because pmf(k) is proportional to r^|k| (r = exp(-beta/2)) the sum over x
is two first-order recursions.  All polymer partition functions below are
sums of D_n(0, k) with the right weights, and the same tables drive an exact
backward sampler.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .law import DomainError, WalkLaw, log_gamma_factor
from .polymer import StretchConfig, walk_to_stretches

SAMPLING_L_CEILING = 2000
_DEFAULT_BUDGET = 2 * 1024 ** 3


class MemoryBudgetError(MemoryError):
    def __init__(self, n: int, k: int, needed: int, budget: int):
        super().__init__(f"area table with n={n}, k={k} needs {needed / 2**20:.0f} MiB, "
                         f"budget is {budget / 2**20:.0f} MiB")
        self.n, self.k, self.needed, self.budget = n, k, needed, budget


class OutOfTableError(IndexError):
    pass


class TiltDomainError(DomainError):
    pass


def memory_budget() -> int:
    return int(os.environ.get("IPDSAW_MEMORY_BUDGET", _DEFAULT_BUDGET))


def default_x_cap(k: int) -> int:
    if k <= 1:
        return k
    return int(min(k, math.floor(4 * math.sqrt(k) * math.log(k) + 64)))


@dataclass
class AreaTable:
    """Forward area tables; immutable once built.

    ``log_ret[n, k]`` is log P(A_n = k, V_n = 0) (or the excursion version
    when ``positive``).  Stored layers keep only x >= 0 and are rescaled by
    ``exp(log_scale[i])``.
    """

    law: WalkLaw
    n_max: int
    k_max: int
    positive: bool
    x_cap: int
    diag: int | None
    log_ret: np.ndarray
    log_mass: np.ndarray
    truncation: float
    layers: list = field(default_factory=list, repr=False)
    log_scale: np.ndarray | None = field(default=None, repr=False)

    def a_hi(self, i: int) -> int:
        return self.k_max if self.diag is None else min(self.k_max, self.diag - i)

    def _check(self, n: int, k: int):
        if not (0 <= n <= self.n_max and 0 <= k <= self.a_hi(n)):
            raise OutOfTableError(f"(n={n}, k={k}) outside table (n_max={self.n_max}, "
                                  f"k_max={self.k_max}, diag={self.diag})")

    def log_prob_return(self, n: int, k: int) -> float:
        self._check(n, k)
        return float(self.log_ret[n, k])

    def prob_return(self, n: int, k: int) -> float:
        return math.exp(self.log_prob_return(n, k))

    def layer(self, i: int) -> np.ndarray:
        """D_i as an array indexed [a, x + w] for |x| <= w (true scale)."""
        if not self.layers or i >= len(self.layers):
            raise OutOfTableError(f"layer {i} was not stored")
        half = self.layers[i] * math.exp(self.log_scale[i])
        if self.positive:
            return half
        return np.concatenate([half[:, :0:-1], half], axis=1)

    def D(self, i: int, x: int, a: int) -> float:
        lay = self.layers[i]
        if self.positive and x < 0:
            return 0.0
        ax = abs(x)
        if a >= lay.shape[0] or ax >= lay.shape[1]:
            return 0.0
        return float(lay[a, ax] * math.exp(self.log_scale[i]))


def _layer_bytes(a_hi: int, w: int) -> int:
    return 8 * (a_hi + 1) * (w + 1)


def build_area_table(law: WalkLaw, n_max: int, k_max: int, positive: bool = False,
                     x_cap: int | None = None, store_layers: bool | int = False,
                     diag: int | None = None, budget: int | None = None) -> AreaTable:
    """Run the forward recursion for i = 1..n_max with areas up to k_max.

    ``diag`` restricts layer i to areas a <= diag - i, which is all that the
    partition sums need (n + k = L + 1).  ``store_layers`` keeps layers
    0..n_max (True) or 0..store_layers (int) for sampling.
    """
    if n_max < 1 or k_max < 0:
        raise ValueError("need n_max >= 1 and k_max >= 0")
    X = default_x_cap(k_max) if x_cap is None else int(min(x_cap, k_max))
    A, W = k_max + 1, 2 * X + 1
    budget = memory_budget() if budget is None else budget
    if store_layers is True:
        keep = n_max
    elif store_layers is False or store_layers is None:
        keep = -1
    else:
        keep = int(store_layers)
    needed = 2 * 8 * A * W
    aa = lambda i: k_max if diag is None else min(k_max, diag - i)
    for i in range(0, keep + 1):
        if aa(i) >= 0:
            needed += _layer_bytes(aa(i), min(X, aa(i)))
    if needed > budget:
        raise MemoryBudgetError(n_max, k_max, needed, budget)

    r, inv_c = law.x, 1.0 / law.c
    prev = np.zeros((A, W))
    new = np.zeros((A, W))
    ret = np.zeros(A)
    prev[0, X] = 1.0
    log_ret = np.full((n_max + 1, k_max + 1), -np.inf)
    log_ret[0, 0] = 0.0
    log_mass = np.full(n_max + 1, -np.inf)
    log_mass[0] = 0.0
    log_scale = np.zeros(n_max + 1)
    layers = [prev[:1, X:X + 1].copy()] if keep >= 0 else []
    scale, lost = 0.0, 0.0
    with np.errstate(divide="ignore"):
        for i in range(1, n_max + 1):
            a_hi = aa(i)
            if a_hi < 0:
                break
            lost += kernels.area_layer(prev, new, ret, r, inv_c, X, a_hi, bool(positive)) * math.exp(scale)
            log_ret[i, : a_hi + 1] = np.log(ret[: a_hi + 1]) + scale
            top = new.max()
            if top <= 0.0:
                log_scale[i:] = scale
                break
            log_mass[i] = math.log(new.sum()) + scale
            new *= 1.0 / top
            scale += math.log(top)
            log_scale[i] = scale
            if i <= keep:
                w = min(X, a_hi)
                layers.append(new[: a_hi + 1, X: X + w + 1].copy())
            prev, new = new, prev
    return AreaTable(law, n_max, k_max, bool(positive), X, diag, log_ret, log_mass, lost,
                     layers, log_scale if keep >= 0 else None)


@lru_cache(maxsize=16)
def _small_table(beta: float, n: int, k: int, positive: bool) -> AreaTable:
    return build_area_table(WalkLaw(beta), max(n, 1), k, positive=positive, x_cap=k)


def prob_area_return(law: WalkLaw, n: int, k: int) -> float:
    """P(A_n = k, V_n = 0)."""
    return _small_table(law.beta, n, k, False).prob_return(n, k)


def prob_area_excursion(law: WalkLaw, n: int, k: int) -> float:
    """P(A_n = k, V_n = 0, V_i > 0 for 0 < i < n)."""
    return _small_table(law.beta, n, k, True).prob_return(n, k)


def conditional_positive_prob(law: WalkLaw, n: int, k: int, table: AreaTable | None = None,
                              table_pos: AreaTable | None = None) -> float:
    """P(V_i > 0 for 0 < i < n | A_n = k, V_n = 0).

    On {V_n = 0} the signed sum of the positions equals A_n exactly when the
    walk stays positive, so this is the excursion share of the bridges.
    """
    table = table or _small_table(law.beta, n, k, False)
    table_pos = table_pos or _small_table(law.beta, n, k, True)
    den = table.log_prob_return(n, k)
    if den == -math.inf:
        raise ZeroDivisionError(f"P(A_n = k, V_n = 0) vanishes at n={n}, k={k}")
    num = table_pos.log_prob_return(n, k)
    return 0.0 if num == -math.inf else math.exp(num - den)


def _logsumexp(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    top = np.max(v)
    if not np.isfinite(top):
        return float(top)
    return float(top + math.log(math.fsum(np.exp(v - top))))


def partition_table(law: WalkLaw, L_max: int, positive: bool = False, **kw) -> AreaTable:
    """Table covering every (N + 1, L - N) with L <= L_max."""
    return build_area_table(law, L_max + 1, max(L_max - 1, 0), positive=positive,
                            diag=L_max + 1, **kw)


def log_excess_terms(table: AreaTable, m, L: int) -> np.ndarray:
    """log of Gamma^N P(V_{N+1, L-N}) for N = 1..L (index N - 1)."""
    lg = log_gamma_factor(table.law.beta, m)
    N = np.arange(1, L + 1)
    return N * lg + np.array([table.log_prob_return(n + 1, L - n) for n in N])


def excess_partition_curve(law: WalkLaw, m, L_max: int, table: AreaTable | None = None) -> np.ndarray:
    """log Z~_L for L = 1..L_max from one table (entry L - 1)."""
    table = table or partition_table(law, L_max)
    return np.array([_logsumexp(log_excess_terms(table, m, L)) for L in range(1, L_max + 1)])


def excess_partition(law: WalkLaw, m, L: int) -> float:
    """log Z~^m_L = log sum_N Gamma^N P(V_{N+1, L-N})."""
    if L < 1:
        raise ValueError("L must be >= 1")
    return float(excess_partition_curve(law, m, L)[-1])


def one_bead_partition_curve(law: WalkLaw, m, L_max: int, table_pos: AreaTable | None = None) -> np.ndarray:
    """log Z~^o_L for L = 1..L_max (entry L - 1).

    For L >= 2 each one-bead configuration is a strictly positive or strictly
    negative walk, hence the factor 2.  The single configuration of length 1
    (one empty stretch) is a bead on its own but has no positive image, so
    that entry equals log Z~_1.
    """
    table_pos = table_pos or partition_table(law, L_max, positive=True)
    lg = log_gamma_factor(law.beta, m)
    out = np.empty(L_max)
    out[0] = lg - 2 * law.log_c
    for L in range(2, L_max + 1):
        N = np.arange(1, L + 1)
        terms = N * lg + np.array([table_pos.log_prob_return(n + 1, L - n) for n in N])
        out[L - 1] = math.log(2.0) + _logsumexp(terms)
    return out


def one_bead_partition(law: WalkLaw, m, L: int) -> float:
    return float(one_bead_partition_curve(law, m, L)[-1])


class PolymerSampler:
    """Exact draws from the polymer measure of length L.

    N is drawn with weight Gamma^N P(V_{N+1, L-N}); the walk is then drawn
    backwards from (V_{N+1} = 0, A = L - N) through the stored layers and
    mapped to stretches by l_i = (-1)^{i-1} V_i.  Each draw j uses its own
    Philox stream spawned from (seed, j), so a draw does not depend on how
    many others are requested.
    """

    def __init__(self, law: WalkLaw, m, L: int, x_cap: int | None = None, budget: int | None = None,
                 ret_table: AreaTable | None = None):
        if not 1 <= L <= SAMPLING_L_CEILING:
            raise ValueError(f"sampling supports 1 <= L <= {SAMPLING_L_CEILING}, got {L}")
        self.law, self.m, self.L = law, m, L
        self.x_cap, self.budget = x_cap, budget
        if ret_table is not None and (ret_table.law.beta != law.beta or ret_table.n_max < L + 1
                                      or ret_table.positive):
            raise ValueError("ret_table does not cover this sampler")
        self._ret = ret_table or partition_table(law, L, x_cap=x_cap, budget=budget)
        terms = log_excess_terms(self._ret, m, L)
        self.log_Z = _logsumexp(terms)
        self.N_weights = np.exp(terms - self.log_Z)
        self.N_weights /= self.N_weights.sum()
        self._cdf = np.cumsum(self.N_weights)
        self._table = None
        self.max_step_defect = 0.0

    def _rng(self, seed: int, j: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(j,))))

    def _draw_N(self, rng) -> int:
        return int(np.searchsorted(self._cdf, rng.random() * self._cdf[-1], side="right")) + 1

    def _ensure_layers(self, n_top: int):
        if self._table is None or len(self._table.layers) <= n_top:
            self._table = build_area_table(self.law, min(n_top + 1, self.L + 1), max(self.L - 1, 0),
                                           x_cap=self.x_cap, store_layers=n_top,
                                           diag=self.L + 1, budget=self.budget)

    def _walk(self, rng, N: int) -> np.ndarray:
        tab, r = self._table, self.law.x
        y, a = 0, self.L - N
        V = np.zeros(N, dtype=np.int64)
        target = tab.log_ret[N + 1, a]
        for i in range(N + 1, 0, -1):
            b = a - abs(y)
            lay = tab.layers[i - 1]
            w = lay.shape[1] - 1
            if b >= lay.shape[0]:
                raise OutOfTableError("backward step left the stored table")
            row = lay[b]
            xs = np.arange(-w, w + 1)
            vals = np.concatenate([row[:0:-1], row]) if not tab.positive else row
            wts = vals * r ** np.abs(y - xs)
            tot = wts.sum()
            # the normalisation must reproduce the forward weight of the current state
            log_tot = math.log(tot) + tab.log_scale[i - 1] - self.law.log_c
            self.max_step_defect = max(self.max_step_defect, abs(math.expm1(log_tot - target)))
            cdf = np.cumsum(wts)
            x = int(xs[min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(xs) - 1)])
            if i > 1:
                V[i - 2] = x
                target = math.log(max(tab.D(i - 1, x, b), 1e-320))
            y, a = x, b
        return V

    def sample(self, n_draws: int, seed: int) -> list:
        if seed is None:
            raise ValueError("a seed is mandatory for sampling")
        rngs = [self._rng(seed, j) for j in range(n_draws)]
        Ns = [self._draw_N(g) for g in rngs]
        self._ensure_layers(max(Ns))
        return [walk_to_stretches(self._walk(g, N)) for g, N in zip(rngs, Ns)]


def sample_polymer(law: WalkLaw, m, L: int, seed: int, n_draws: int = 1):
    """One draw (or a list of n_draws) from the polymer law of length L."""
    out = PolymerSampler(law, m, L).sample(n_draws, seed)
    return out[0] if n_draws == 1 else out


def discounted_area_profile(law: WalkLaw, delta: float, n: int, x_cap: int):
    """E_x[exp(-delta A_n)] for every start |x| <= x_cap, plus exit mass.

    Backward recursion f_{m+1}(x) = sum_y pmf(y - x) e^{-delta |y|} f_m(y).
    Paths that leave the window are dropped; the same recursion at delta = 0
    measures that dropped probability, which bounds the error (integrand <= 1).
    """
    if delta < 0 or n < 0:
        raise ValueError("need delta >= 0 and n >= 0")
    xs = np.arange(-x_cap, x_cap + 1)
    disc = np.exp(-delta * np.abs(xs))
    f = np.ones((2, xs.size))
    tmp = np.empty_like(f)
    r, inv_c = law.x, 1.0 / law.c
    for _ in range(n):
        src = np.ascontiguousarray(f * np.vstack([disc, np.ones_like(disc)]))
        kernels.geom_conv(src, r, r, tmp)
        f = tmp * inv_c
    return xs, f[0], 1.0 - f[1]


def discounted_area_expectation(law: WalkLaw, delta: float, n: int, x0: int = 0,
                                x_cap: int | None = None, return_residual: bool = False):
    if x_cap is None:
        x_cap = abs(x0) + int(math.ceil(12 * math.sqrt(law.sigma2 * max(n, 1)))) + 64
    if abs(x0) > x_cap:
        raise ValueError("start point outside the window")
    xs, val, lost = discounted_area_profile(law, delta, n, x_cap)
    i = int(x0) + x_cap
    return (float(val[i]), float(lost[i])) if return_residual else float(val[i])


def tilt_sequence(N: int, H) -> np.ndarray:
    """h_N^i = (1 - i/N) h0 + h1 for i = 1..N."""
    h0, h1 = H
    i = np.arange(1, N + 1)
    return (1.0 - i / N) * h0 + h1


def _tilt_ratios(law: WalkLaw, h: float):
    if not abs(h) < law.beta / 2:
        raise TiltDomainError(f"tilt {h} outside (-beta/2, beta/2)")
    rho_r = math.exp(h - law.beta / 2)
    rho_l = math.exp(-h - law.beta / 2)
    return rho_r, rho_l, 1.0 / (law.c * math.exp(law.log_mgf(h)))


def tilted_moments(law: WalkLaw, N: int, H):
    """Means and variances of (S_i, V_i), i = 0..N, under the tilted laws."""
    h = tilt_sequence(N, H)
    m1, m2 = law.log_mgf(h, 1), law.log_mgf(h, 2)
    mv = np.concatenate(([0.0], np.cumsum(m1)))
    vv = np.concatenate(([0.0], np.cumsum(m2)))
    ms = np.concatenate(([0.0], np.cumsum(mv[:-1])))
    vs = np.zeros(N + 1)
    for i in range(1, N + 1):
        k = np.arange(1, i)
        vs[i] = np.sum(m2[: i - 1] * (i - k) ** 2)
    return ms, vs, mv, vv


@dataclass
class TiltedJointTable:
    """Law of (S_N, V_N) = (N Y_N, V_N) under the tilted walk, on a window."""

    N: int
    H: tuple
    s_values: np.ndarray
    v_values: np.ndarray
    weights: np.ndarray
    truncated: float

    def prob(self, s: int, v: int) -> float:
        i, j = s - self.s_values[0], v - self.v_values[0]
        if 0 <= i < len(self.s_values) and 0 <= j < len(self.v_values):
            return float(self.weights[i, j])
        return 0.0

    def marginal_v(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def mean(self):
        """E[(S_N, V_N)] over the window, renormalised by the retained mass."""
        tot = self.weights.sum()
        es = float(self.s_values @ self.weights.sum(axis=1)) / tot
        ev = float(self.v_values @ self.weights.sum(axis=0)) / tot
        return es, ev


def _default_windows(law, N, H, width=8.0):
    ms, vs, mv, vv = tilted_moments(law, N, H)
    s_lo = int(math.floor(np.min(ms - width * np.sqrt(vs)))) - 4
    s_hi = int(math.ceil(np.max(ms + width * np.sqrt(vs)))) + 4
    v_lo = int(math.floor(np.min(mv - width * np.sqrt(vv)))) - 4
    v_hi = int(math.ceil(np.max(mv + width * np.sqrt(vv)))) + 4
    return (min(s_lo, 0), max(s_hi, 0)), (min(v_lo, 0), max(v_hi, 0))


def tilted_joint_pmf(law: WalkLaw, N: int, H, s_window=None, v_window=None) -> TiltedJointTable:
    """Exact joint law of (sum_{j<N} V_j, V_N) under increments p_i ~ pmf e^{h^i v}."""
    H = (float(H[0]), float(H[1]))
    ratios = [_tilt_ratios(law, h) for h in tilt_sequence(N, H)]
    dw_s, dw_v = _default_windows(law, N, H)
    s_lo, s_hi = s_window or dw_s
    v_lo, v_hi = v_window or dw_v
    if not (s_lo <= 0 <= s_hi and v_lo <= 0 <= v_hi):
        raise ValueError("windows must contain the origin")
    T = np.zeros((s_hi - s_lo + 1, v_hi - v_lo + 1))
    T[-s_lo, -v_lo] = 1.0
    U = np.empty_like(T)
    for rho_r, rho_l, norm in ratios:
        kernels.skew_shift(T, U, v_lo)      # S <- S + V
        kernels.geom_conv(U, rho_r, rho_l, T)  # V <- V + v
        T *= norm
    return TiltedJointTable(N, H, np.arange(s_lo, s_hi + 1), np.arange(v_lo, v_hi + 1),
                            T, float(1.0 - T.sum()))


def tilted_walk_marginal(law: WalkLaw, N: int, H, v_window) -> np.ndarray:
    """Law of V_N alone (one-dimensional recursion)."""
    v_lo, v_hi = v_window
    f = np.zeros((1, v_hi - v_lo + 1))
    f[0, -v_lo] = 1.0
    g = np.empty_like(f)
    for h in tilt_sequence(N, H):
        rho_r, rho_l, norm = _tilt_ratios(law, h)
        kernels.geom_conv(f, rho_r, rho_l, g)
        f = g * norm
    return f[0]
