"""Excess free energy, phase classification and the constants near beta_c.

The excess free energy is the root of g(delta) = log Gamma - delta + h(delta)
on [0, log Gamma] when Gamma > 1 and zero otherwise.  Near the critical
point it behaves like (c/d)^{3/2} eps^{3/2}, where d involves the first zero
of Ai'.  The Airy functions are summed from their Maclaurin series, which
converges everywhere and is accurate to round-off on [-2, 2].
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .areadp import excess_partition_curve, partition_table
from .law import WalkLaw, beta_c, log_gamma_factor, phi_growth
from .polymer import ModelKind
from .spectral import h_beta

BISECTION_MAX_ITER = 64
DEFAULT_EPS_GRID = (0.1, 0.05, 0.02, 0.01, 0.005, 0.002)


class Phase(Enum):
    COLLAPSED = "collapsed"
    EXTENDED = "extended"


@dataclass
class FreeEnergyReport:
    beta: float
    model: ModelKind
    phase: Phase
    f_excess: float
    f_total: float
    bracket: tuple = (0.0, 0.0)
    iterations: int = 0
    h_tol: float = 0.0
    residual: float = 0.0


def free_energy_residual(law: WalkLaw, m, delta: float, h_tol: float = 1e-11) -> float:
    """g(delta) = log Gamma - delta + h(delta)."""
    return log_gamma_factor(law.beta, m) - delta + h_beta(law, delta, h_tol)


def excess_free_energy(law: WalkLaw, m, tol: float = 1e-10) -> FreeEnergyReport:
    """Bisection for the root of g on [0, log Gamma].

    Bisection rather than Newton because h carries truncation noise at the
    level of its tolerance, and a derivative would amplify it.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    m = ModelKind.parse(m)
    lg = log_gamma_factor(law.beta, m)
    phi = phi_growth(law.beta, m)
    if lg <= 0:
        return FreeEnergyReport(law.beta, m, Phase.COLLAPSED, 0.0, phi)
    h_tol = tol / 10
    g = lambda d: lg - d + h_beta(law, d, h_tol)
    lo, hi = 0.0, lg
    it = 0
    while hi - lo > tol and it < BISECTION_MAX_ITER:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        it += 1
    f = 0.5 * (lo + hi)
    return FreeEnergyReport(law.beta, m, Phase.EXTENDED, f, phi + f, (lo, hi), it, h_tol, g(f))


def direct_free_energy_estimate(law: WalkLaw, m, L_list) -> np.ndarray:
    """(1/L) log Z~_L for each L, all read off one exact table."""
    L_list = [int(L) for L in L_list]
    if not L_list or min(L_list) < 1:
        raise ValueError("L values must be >= 1")
    curve = excess_partition_curve(law, m, max(L_list), partition_table(law, max(L_list)))
    return np.array([curve[L - 1] / L for L in L_list])


def free_energy_curve(betas, m, tol: float = 1e-10) -> list:
    return [excess_free_energy(WalkLaw(float(b)), m, tol) for b in betas]


def write_free_energy_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta", "phase", "f_excess", "f_total"])
        for r in reports:
            w.writerow([repr(float(r.beta)), r.phase.value, repr(float(r.f_excess)), repr(float(r.f_total))])


# ---------------------------------------------------------------- Airy

_AIRY_TERMS = 120


def _airy_coefficients(n_terms: int = _AIRY_TERMS) -> np.ndarray:
    """Taylor coefficients of Ai at 0 from y'' = x y: a_{k+3} = a_k / ((k+2)(k+3))."""
    a = np.zeros(n_terms)
    a[0] = 1.0 / (3.0 ** (2.0 / 3.0) * math.gamma(2.0 / 3.0))
    a[1] = -1.0 / (3.0 ** (1.0 / 3.0) * math.gamma(1.0 / 3.0))
    for k in range(n_terms - 3):
        a[k + 3] = a[k] / ((k + 2) * (k + 3))
    return a


_AI_COEF = _airy_coefficients()


def _poly(coef, x: float) -> float:
    return math.fsum(c * x ** k for k, c in enumerate(coef) if c != 0.0)


def airy_ai(x: float, derivative: int = 0) -> float:
    """Ai and its first two derivatives from the Maclaurin series (|x| <~ 5)."""
    c = _AI_COEF
    for _ in range(derivative):
        c = c[1:] * np.arange(1, c.size)
    return _poly(c, float(x))


def airy_prime_first_zero(tol: float = 1e-14) -> float:
    """Zero of Ai' closest to the origin, by bisection on [-1.5, -0.5]."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    lo, hi = -1.5, -0.5
    f_lo = airy_ai(lo, 1)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = airy_ai(mid, 1)
        if abs(f_mid) <= tol or hi - lo <= 4 * np.finfo(float).eps:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class CriticalConstants:
    model: ModelKind
    beta_c: float
    c: float
    sigma: float
    a1_prime: float
    d: float
    amplitude: float = field(init=False)

    def __post_init__(self):
        self.amplitude = (self.c / self.d) ** 1.5


def critical_constants(m, tol: float = 1e-12) -> CriticalConstants:
    m = ModelKind.parse(m)
    bc = beta_c(m, tol)
    law = WalkLaw(bc)
    c = 1.0 + law.x / -math.expm1(-bc)
    a1 = airy_prime_first_zero()
    sigma = math.sqrt(law.sigma2)
    d = 2.0 ** (-1.0 / 3.0) * abs(a1) * law.sigma2 ** (1.0 / 3.0)
    return CriticalConstants(m, bc, c, sigma, a1, d)


@dataclass
class ExponentRow:
    eps: float
    f_excess: float
    ratio: float
    slope: float


def exponent_scan(m, eps_list=DEFAULT_EPS_GRID, tol: float = 1e-10) -> list:
    """f~(beta_c - eps), f~/eps^{3/2} and the log-log slope against the previous eps."""
    eps = [float(e) for e in eps_list]
    m = ModelKind.parse(m)
    bc = beta_c(m)
    if any(not 0 < e <= bc / 2 for e in eps) or eps != sorted(eps, reverse=True):
        raise ValueError("eps grid must be descending inside (0, beta_c/2]")
    rows = []
    for j, e in enumerate(eps):
        f = excess_free_energy(WalkLaw(bc - e), m, tol).f_excess
        slope = math.nan if j == 0 else math.log(f / rows[-1].f_excess) / math.log(e / eps[j - 1])
        rows.append(ExponentRow(e, f, f / e ** 1.5, slope))
    return rows


def write_exponent_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "f_excess", "ratio", "slope"])
        for r in rows:
            w.writerow([repr(r.eps), repr(r.f_excess), repr(r.ratio), repr(r.slope)])
