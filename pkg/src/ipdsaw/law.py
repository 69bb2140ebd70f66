"""Geometric increment law of the auxiliary walk and its beta-dependent scalars.

The walk has i.i.d. increments with P(v = k) = exp(-beta |k| / 2) / c_beta.
Everything here is closed form; numeric summation lives in the tests as an
oracle only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .polymer import ModelKind


class DomainError(ValueError):
    """Raised when a tilt argument leaves the open strip |h| < beta/2."""


@dataclass(frozen=True)
class WalkLaw:
    """Two-sided geometric law with ratio x = exp(-beta/2)."""

    beta: float

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be a positive finite real, got {self.beta!r}")

    @cached_property
    def x(self) -> float:
        return math.exp(-self.beta / 2)

    @cached_property
    def c(self) -> float:
        # (1 + x) / (1 - x), with 1 - x taken from expm1 for small beta
        return (1.0 + self.x) / -math.expm1(-self.beta / 2)

    @cached_property
    def log_c(self) -> float:
        return math.log1p(self.x) - math.log(-math.expm1(-self.beta / 2))

    @property
    def half_width(self) -> float:
        """Radius beta/2 of the domain of the log-MGF."""
        return self.beta / 2

    def pmf(self, k):
        k = np.asarray(k)
        out = np.exp(-self.beta * np.abs(k) / 2) / self.c
        return float(out) if out.ndim == 0 else out

    def log_mgf(self, h, order: int = 0):
        """L(h) = log E exp(h v) and its first two derivatives.

        Accepts scalars or arrays.  With t = beta/2 - h and s = beta/2 + h the
        three orders reduce to expm1 expressions that stay accurate near the
        edge of the domain.
        """
        h_arr = np.asarray(h, dtype=float)
        if np.any(~(np.abs(h_arr) < self.beta / 2)):
            bad = h_arr[~(np.abs(h_arr) < self.beta / 2)].ravel()[0]
            raise DomainError(f"log_mgf needs |h| < beta/2 = {self.beta / 2}, got h = {bad}")
        return self.log_mgf_edge(self.beta / 2 - h_arr, self.beta / 2 + h_arr, order)

    def log_mgf_edge(self, t, s, order: int = 0):
        """L and its derivatives in terms of the distances t, s > 0 to the two poles.

        Callers that know t or s more accurately than h (for instance close
        to a pole) pass them directly.
        """
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        if order == 0:
            out = (math.log(-math.expm1(-self.beta)) - self.log_c
                   - np.log(-np.expm1(-t)) - np.log(-np.expm1(-s)))
        elif order == 1:
            out = 1.0 / np.expm1(t) - 1.0 / np.expm1(s)
        elif order == 2:
            out = 1.0 / (np.expm1(t) * -np.expm1(-t)) + 1.0 / (np.expm1(s) * -np.expm1(-s))
        else:
            raise ValueError("order must be 0, 1 or 2")
        return float(out) if out.ndim == 0 else out

    @cached_property
    def sigma2(self) -> float:
        """Variance 2x / (1 - x)^2 of one increment."""
        return 2 * self.x / math.expm1(-self.beta / 2) ** 2


def sigma2(law: WalkLaw) -> float:
    return law.sigma2


def _model(m) -> ModelKind:
    return ModelKind.parse(m)


def log_gamma_factor(beta: float, m) -> float:
    """log Gamma^m(beta); Gamma^u = c_beta e^{-beta}, Gamma^nu = (2/3) Gamma^u."""
    law = WalkLaw(beta)
    val = law.log_c - beta
    if _model(m) is ModelKind.NON_UNIFORM:
        val += math.log(2.0 / 3.0)
    return val


def gamma_factor(beta: float, m) -> float:
    return math.exp(log_gamma_factor(beta, m))


def phi_growth(beta: float, m) -> float:
    """Growth rate phi^m: beta for the uniform model, beta - log 2 otherwise."""
    if _model(m) is ModelKind.UNIFORM:
        return float(beta)
    return beta - math.log(2.0)


def log_Phi(L: int, beta: float, m) -> float:
    return L * phi_growth(beta, m)


def beta_c(m, tol: float = 1e-12) -> float:
    """Root of Gamma^m(beta) = 1 by doubling bracket and bisection on log Gamma."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    f = lambda b: log_gamma_factor(b, m)
    lo, hi = 0.5, 1.0
    while f(lo) <= 0:
        lo /= 2
    while f(hi) > 0:
        lo, hi = hi, 2 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
