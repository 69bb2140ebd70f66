"""Observables of sampled polymers and their aggregates over a seeded run."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .areadp import PolymerSampler
from .law import WalkLaw
from .polymer import StretchConfig, bead_decomposition, envelopes
from .tilt import WulffShape


def bead_area_gap(sample: StretchConfig) -> int:
    """sum |V_i| - |sum V_i|: geometric minus absolute algebraic area of the walk."""
    V = np.asarray(sample.stretches, dtype=np.int64) * np.where(np.arange(sample.N) % 2 == 0, 1, -1)
    return int(np.abs(V).sum() - abs(int(V.sum())))


def outside_bead_mass(sample: StretchConfig) -> int:
    """sum of |l_i| over stretches outside the largest bead."""
    bd = bead_decomposition(sample)
    cuts = (0,) + bd.cuts
    first, last = cuts[bd.j_max - 1] + 1, cuts[bd.j_max]
    st = np.abs(np.asarray(sample.stretches, dtype=np.int64))
    return int(st.sum() - st[first - 1:last].sum())


def sup_distance(values: np.ndarray, profile) -> float:
    """sup over [0, 1] of |X(t) - profile(t)| for X(t) = values[floor(t (N+1))] / (N+1).

    X is constant on each cell [i/(N+1), (i+1)/(N+1)), and the concave,
    symmetric profile is monotone on either side of 1/2, so the supremum over
    a cell is attained at its ends or at 1/2.
    """
    n1 = len(values) - 1
    x = np.asarray(values, dtype=float) / n1
    t = np.arange(n1 + 1) / n1
    g = profile(t)
    best = np.max(np.abs(x[:-1] - g[:-1]))           # left ends
    best = max(best, np.max(np.abs(x[:-1] - g[1:])))  # left limits at right ends
    best = max(best, abs(x[-1] - g[-1]))
    i_half = min(int(math.floor(0.5 * n1)), n1 - 1)
    best = max(best, abs(x[i_half] - float(profile(0.5))))
    return float(best)


@dataclass
class DrawRecord:
    N: int
    n_beads: int
    largest_bead: int
    i1: int
    tail: int          # L - i2
    area_gap: int
    outside_mass: int
    walk_dist: float   # || |V~| - gamma* ||
    upper_dist: float  # || E~+ - gamma*/2 ||
    lower_dist: float  # || E~- + gamma*/2 ||
    midline_sup: float  # || M~ ||


def draw_record(l: StretchConfig, wulff: WulffShape | None) -> DrawRecord:
    bd = bead_decomposition(l)
    first, last = bd.largest
    env = envelopes(l)
    n1 = l.N + 1
    if wulff is None:
        wd = ud = ld = math.nan
    else:
        wd = sup_distance(np.abs(env.V), wulff)
        ud = sup_distance(env.upper, lambda t: 0.5 * wulff(t))
        ld = sup_distance(env.lower, lambda t: -0.5 * wulff(t))
    return DrawRecord(l.N, bd.n_beads, last - first + 1, first - 1, l.L - last,
                      bead_area_gap(l), outside_bead_mass(l), wd, ud, ld,
                      float(np.max(np.abs(env.M2))) / 2.0 / n1)


@dataclass
class SampleStatistics:
    beta: float
    model: str
    L: int
    seed: int
    records: list
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.summary:
            self.summary = summarize(self.records, self.L)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def mean_and_se(self, name: str, scale: float = 1.0):
        x = self.column(name) * scale
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan

    def exceedance(self, c: float) -> float:
        """Fraction of draws with |I_jmax| >= L - c (log L)^4."""
        thr = self.L - c * math.log(self.L) ** 4
        return float(np.mean(self.column("largest_bead") >= thr))

    def to_json_dict(self) -> dict:
        return {"beta": self.beta, "model": self.model, "L": self.L, "seed": self.seed,
                "summary": self.summary, "records": [asdict(r) for r in self.records]}


def summarize(records, L: int) -> dict:
    out = {"draws": len(records)}
    if not records:
        return out
    for name in DrawRecord.__dataclass_fields__:
        x = np.array([getattr(r, name) for r in records], dtype=float)
        out[name] = {"mean": float(x.mean()),
                     "se": float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else None,
                     "q05": float(np.quantile(x, 0.05)), "q50": float(np.quantile(x, 0.5)),
                     "q95": float(np.quantile(x, 0.95))}
    nL = np.array([r.N for r in records], dtype=float) / math.sqrt(L)
    out["N_over_sqrtL"] = {"mean": float(nL.mean()),
                           "se": float(nL.std(ddof=1) / math.sqrt(nL.size)) if nL.size > 1 else None}
    return out


def check_record(r: DrawRecord, L: int) -> None:
    if not (r.largest_bead <= L and r.N >= r.n_beads and r.area_gap >= 0):
        raise AssertionError(f"draw violates structural bounds: {r}")
    if not (r.i1 + r.largest_bead + r.tail == L):
        raise AssertionError(f"largest bead offsets do not add up: {r}")


def run_samples(law: WalkLaw, m, L: int, n_draws: int, seed: int,
                wulff: WulffShape | None = None, sampler: PolymerSampler | None = None) -> SampleStatistics:
    sampler = sampler or PolymerSampler(law, m, L)
    draws = sampler.sample(n_draws, seed)
    records = []
    for l in draws:
        if l.L != L:
            raise AssertionError(f"draw has length {l.L}, expected {L}")
        rec = draw_record(l, wulff)
        check_record(rec, L)
        records.append(rec)
    return SampleStatistics(law.beta, str(getattr(m, "value", m)), L, int(seed), records)


def calibrate_window(stats: SampleStatistics, quantile: float = 0.95) -> float:
    """c with |I_jmax| >= L - c (log L)^4 on the requested fraction of a pilot run."""
    x = (stats.L - stats.column("largest_bead")) / math.log(stats.L) ** 4
    return float(np.quantile(x, quantile))


def mean_profiles(draws, s_grid) -> dict:
    """Pointwise means of E~+, E~- and |V~| on a grid of [0, 1]."""
    up = np.zeros(len(s_grid))
    lo = np.zeros(len(s_grid))
    wk = np.zeros(len(s_grid))
    for l in draws:
        env = envelopes(l)
        up += env.rescaled("upper", s_grid)
        lo += env.rescaled("lower", s_grid)
        wk += np.abs(env.rescaled("walk", s_grid))
    n = max(len(draws), 1)
    return {"upper_mean": up / n, "lower_mean": lo / n, "abs_walk_mean": wk / n}
