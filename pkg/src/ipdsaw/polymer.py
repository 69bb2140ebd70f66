"""Polymer configurations: lattice paths, stretch sequences, beads and envelopes.

A configuration of length L is a sequence of signed vertical stretches
l_1..l_N with sum |l_n| + N = L.  The lattice path climbs |l_n| steps
(north when l_n > 0), then takes one east step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

L_ENUM_MAX = 14

NORTH, SOUTH, EAST = "N", "S", "E"
_MOVES = {NORTH: (0, 1), SOUTH: (0, -1), EAST: (1, 0)}


class ModelKind(Enum):
    UNIFORM = "u"
    NON_UNIFORM = "nu"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"u": cls.UNIFORM, "uniform": cls.UNIFORM,
                   "nu": cls.NON_UNIFORM, "non-uniform": cls.NON_UNIFORM}
        if key not in aliases:
            raise ValueError(f"unknown model {value!r}; expected 'u' or 'nu'")
        return aliases[key]


class EnumerationCapError(ValueError):
    pass


@dataclass(frozen=True)
class StretchConfig:
    stretches: tuple

    def __init__(self, stretches: Sequence[int]):
        vals = tuple(int(v) for v in stretches)
        if len(vals) < 1:
            raise ValueError("a configuration needs at least one stretch")
        object.__setattr__(self, "stretches", vals)

    @property
    def N(self) -> int:
        return len(self.stretches)

    @property
    def L(self) -> int:
        return sum(abs(v) for v in self.stretches) + len(self.stretches)

    def __iter__(self):
        return iter(self.stretches)

    def __len__(self):
        return len(self.stretches)


@dataclass(frozen=True)
class LatticePath:
    steps: str

    def __post_init__(self):
        if len(self.steps) < 1:
            raise ValueError("empty path")
        if set(self.steps) - set(_MOVES):
            raise ValueError(f"steps must be drawn from N, S, E: {self.steps!r}")
        if self.steps[-1] != EAST:
            raise ValueError("path must end with an east step")
        seen = set()
        for v in self.vertices():
            if v in seen:
                raise ValueError("path is not self-avoiding")
            seen.add(v)

    def __len__(self):
        return len(self.steps)

    def vertices(self) -> list:
        x = y = 0
        out = [(0, 0)]
        for s in self.steps:
            dx, dy = _MOVES[s]
            x += dx
            y += dy
            out.append((x, y))
        return out


def wedge(x: int, y: int) -> int:
    """min(|x|, |y|) when x and y have strictly opposite signs, else 0."""
    if x * y < 0:
        return min(abs(x), abs(y))
    return 0


def wedge_alt(x: int, y: int) -> int:
    """Same quantity written as (|x| + |y| - |x + y|) / 2."""
    return (abs(x) + abs(y) - abs(x + y)) // 2


def hamiltonian_stretches(l) -> int:
    """Number of self-touchings, sum over consecutive stretches of wedge."""
    s = l.stretches if isinstance(l, StretchConfig) else tuple(l)
    return sum(wedge(a, b) for a, b in zip(s, s[1:]))


def stretches_to_path(l: StretchConfig) -> LatticePath:
    parts = []
    for v in l.stretches:
        parts.append((NORTH if v > 0 else SOUTH) * abs(v))
        parts.append(EAST)
    return LatticePath("".join(parts))


def path_to_stretches(path: LatticePath) -> StretchConfig:
    out, run = [], 0
    for s in path.steps:
        if s == EAST:
            out.append(run)
            run = 0
        else:
            run += 1 if s == NORTH else -1
    return StretchConfig(out)


def self_touchings(path: LatticePath) -> int:
    """Pairs of vertices i < j - 1 at lattice distance one."""
    verts = path.vertices()
    index = {v: i for i, v in enumerate(verts)}
    count = 0
    for i, (x, y) in enumerate(verts):
        for nb in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            j = index.get(nb)
            if j is not None and j > i + 1:
                count += 1
    return count


@dataclass(frozen=True)
class BeadDecomposition:
    cuts: tuple        # x_1 < ... < x_n = N (x_0 = 0 implicit)
    cumulated: tuple   # u_1..u_N
    intervals: tuple   # (first, last) of each bead, 1-based inclusive
    j_max: int         # 1-based index of the largest bead

    @property
    def n_beads(self) -> int:
        return len(self.cuts)

    @property
    def sizes(self) -> tuple:
        return tuple(b - a + 1 for a, b in self.intervals)

    @property
    def largest(self) -> tuple:
        return self.intervals[self.j_max - 1]


def bead_decomposition(l: StretchConfig) -> BeadDecomposition:
    s = l.stretches + (0,)
    N = l.N
    u = np.cumsum(np.abs(np.asarray(l.stretches, dtype=np.int64)) + 1)
    # the recursive definition of x_j just lists every i with a zero wedge
    cuts = [i for i in range(1, N + 1) if wedge(s[i - 1], s[i]) == 0]
    cum = (0,) + tuple(int(v) for v in u)
    intervals, prev = [], 0
    for c in cuts:
        intervals.append((cum[prev] + 1, cum[c]))
        prev = c
    sizes = [b - a + 1 for a, b in intervals]
    j_max = int(np.argmax(sizes)) + 1  # argmax returns the first maximiser
    return BeadDecomposition(tuple(cuts), cum[1:], tuple(intervals), j_max)


@dataclass(frozen=True)
class EnvelopeSet:
    """Upper/lower envelopes, doubled midline and auxiliary walk, indices 0..N+1.

    The midline takes half-integer values, so it is kept doubled as integers
    (``M2 = 2M``); ``midline`` returns exact fractions.
    """

    upper: np.ndarray
    lower: np.ndarray
    M2: np.ndarray
    V: np.ndarray

    @property
    def N(self) -> int:
        return len(self.V) - 2

    @property
    def midline(self) -> tuple:
        return tuple(Fraction(int(v), 2) for v in self.M2)

    def rescaled(self, which: str, t):
        """Cadlag rescaling: value at index floor(t (N+1)) divided by N+1."""
        arr = {"upper": self.upper, "lower": self.lower,
               "midline": self.M2 / 2.0, "walk": self.V}[which]
        n1 = self.N + 1
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.floor(t * n1 + 1e-12).astype(np.int64), 0, n1)
        return arr[idx] / n1


def envelopes(l: StretchConfig) -> EnvelopeSet:
    st = np.asarray(l.stretches, dtype=np.int64)
    N = len(st)
    S = np.concatenate(([0], np.cumsum(st)))
    upper = np.empty(N + 2, dtype=np.int64)
    lower = np.empty(N + 2, dtype=np.int64)
    M2 = np.empty(N + 2, dtype=np.int64)
    upper[0] = lower[0] = M2[0] = 0
    upper[1:N + 1] = np.maximum(S[:-1], S[1:])
    lower[1:N + 1] = np.minimum(S[:-1], S[1:])
    M2[1:N + 1] = 2 * S[:-1] + st
    upper[N + 1] = lower[N + 1] = S[-1]
    M2[N + 1] = 2 * S[-1]
    V = np.zeros(N + 2, dtype=np.int64)
    V[1:N + 1] = st * np.where(np.arange(N) % 2 == 0, 1, -1)
    return EnvelopeSet(upper, lower, M2, V)


def auxiliary_walk(l: StretchConfig) -> np.ndarray:
    """V_{l,i} = (-1)^{i-1} l_i for i = 1..N."""
    return envelopes(l).V[1:-1].copy()


def walk_to_stretches(V: Sequence[int]) -> StretchConfig:
    """Inverse map: l_i = (-1)^{i-1} V_i."""
    V = np.asarray(V, dtype=np.int64)
    return StretchConfig(V * np.where(np.arange(len(V)) % 2 == 0, 1, -1))


def _check_cap(L: int, cap: int = L_ENUM_MAX):
    if not 1 <= L <= cap:
        raise EnumerationCapError(f"enumeration needs 1 <= L <= {cap}, got {L}")


def _stretch_tuples(remaining: int) -> Iterator[tuple]:
    for v in range(-(remaining - 1), remaining):
        rest = remaining - abs(v) - 1
        if rest == 0:
            yield (v,)
        else:
            for tail in _stretch_tuples(rest):
                yield (v,) + tail


def enumerate_configs(L: int, cap: int = L_ENUM_MAX) -> Iterator[StretchConfig]:
    """Every configuration of total length L, each exactly once."""
    _check_cap(L, cap)
    for t in _stretch_tuples(L):
        yield StretchConfig(t)


def log_path_weight(l: StretchConfig, m) -> float:
    """log of the reference weight: 0 (uniform) or N log(1/3) + (L-N) log(1/2)."""
    if ModelKind.parse(m) is ModelKind.UNIFORM:
        return 0.0
    return -l.N * math.log(3.0) - (l.L - l.N) * math.log(2.0)


def boltzmann_weight(l: StretchConfig, beta: float, m) -> float:
    return math.exp(log_path_weight(l, m) + beta * hamiltonian_stretches(l))


def brute_force_Z(L: int, beta: float, m) -> float:
    return math.fsum(boltzmann_weight(l, beta, m) for l in enumerate_configs(L))


def _enumerated_pieces(L: int, beta: float, m):
    """Z_k, one-bead Z^o_k for k <= L, and Z_L split by the end of the first bead."""
    Z = [1.0]
    Zo = [0.0]
    for k in range(1, L + 1):
        tot, one = [], []
        for l in enumerate_configs(k):
            w = boltzmann_weight(l, beta, m)
            tot.append(w)
            if bead_decomposition(l).n_beads == 1:
                one.append(w)
        Z.append(math.fsum(tot))
        Zo.append(math.fsum(one))
    split = [[] for _ in range(L + 1)]
    for l in enumerate_configs(L):
        bd = bead_decomposition(l)
        split[bd.cumulated[bd.cuts[0] - 1]].append(boltzmann_weight(l, beta, m))
    return Z, Zo, [math.fsum(s) for s in split]


def one_bead_Z_table(L: int, beta: float, m) -> list:
    """Rows (L', lower, middle, upper) of the first-bead concatenation bounds."""
    _check_cap(L)
    Z, Zo, split = _enumerated_pieces(L, beta, m)
    return [(k, 0.5 * Zo[k] * Z[L - k], split[k], Zo[k] * Z[L - k]) for k in range(1, L + 1)]


def one_bead_Z_inequality_check(L: int, beta: float, m, rel: float = 1e-12) -> bool:
    rows = one_bead_Z_table(L, beta, m)
    return all(lo * (1 - rel) <= mid <= hi * (1 + rel) for _, lo, mid, hi in rows)
