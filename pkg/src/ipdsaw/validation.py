"""Oracle checks run by ``ipdsaw validate``.

Each check returns a CheckResult carrying the worst residual it saw, so the
report shows how much headroom every identity has, not only pass/fail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .areadp import discounted_area_profile, excess_partition_curve
from .cache import TableCache, default_cache_dir
from .law import WalkLaw, log_Phi
from .polymer import (brute_force_Z, enumerate_configs, hamiltonian_stretches,
                      one_bead_Z_table, self_touchings, stretches_to_path)
from .spectral import h_beta
from .tilt import legendre_Lstar, local_clt_check, solve_tilt


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    detail: str = ""


def check_partition_identity(L_max: int = 10, betas=(0.5, 1.0, 2.0), models=("u", "nu"),
                             rel: float = 1e-10) -> CheckResult:
    worst = 0.0
    for beta in betas:
        law = WalkLaw(beta)
        for m in models:
            curve = excess_partition_curve(law, m, L_max)
            for L in range(1, L_max + 1):
                lhs = math.exp(law.log_c + log_Phi(L, beta, m) + curve[L - 1])
                rhs = brute_force_Z(L, beta, m)
                worst = max(worst, abs(lhs / rhs - 1))
    return CheckResult("partition identity", worst <= rel, worst, f"L <= {L_max}")


def check_wedge_identity(L_max: int = 8) -> CheckResult:
    bad = 0
    total = 0
    for L in range(1, L_max + 1):
        for l in enumerate_configs(L):
            total += 1
            if self_touchings(stretches_to_path(l)) != hamiltonian_stretches(l.stretches):
                bad += 1
    return CheckResult("self-touching = wedge sum", bad == 0, float(bad), f"{total} configurations")


def check_area_monotonicity(deltas=(0.05, 0.2), n_max: int = 30, x_max: int = 20,
                            beta: float = 1.0) -> CheckResult:
    """E_x exp(-delta A_n) weakly decreasing in |x| (zero violations)."""
    law = WalkLaw(beta)
    violations, worst_lost = 0, 0.0
    for d in deltas:
        for n in range(0, n_max + 1):
            cap = x_max + int(math.ceil(12 * math.sqrt(law.sigma2 * max(n, 1)))) + 64
            xs, val, lost = discounted_area_profile(law, d, n, cap)
            pos = val[cap: cap + x_max + 1]
            neg = val[cap - x_max: cap + 1][::-1]
            violations += int(np.sum(np.diff(pos) > 0)) + int(np.sum(np.diff(neg) > 0))
            worst_lost = max(worst_lost, float(lost[cap - x_max: cap + x_max + 1].max()))
    return CheckResult("area monotonicity in |x|", violations == 0, float(violations),
                       f"window loss <= {worst_lost:.1e}")


def check_one_bead_bounds(L: int = 10, betas=(0.5, 1.0, 2.0), models=("u", "nu")) -> CheckResult:
    """(1/2) Z^o_k Z_{L-k} <= Z[first bead of size k] <= Z^o_k Z_{L-k}."""
    worst = -math.inf
    for beta in betas:
        for m in models:
            for _, lo, mid, hi in one_bead_Z_table(L, beta, m):
                worst = max(worst, lo / mid - 1, mid / hi - 1)
    return CheckResult("first-bead bounds", worst <= 1e-12, worst, f"L = {L}")


def check_h_at_zero() -> CheckResult:
    v = max(abs(h_beta(WalkLaw(b), 0.0)) for b in (0.5, 1.0, 2.0))
    return CheckResult("h(0) = 0", v <= 1e-8, v)


def check_tilt_residuals(qs=(0.1, 0.25, 1.0, 4.0, 10.0), beta: float = 1.0) -> CheckResult:
    law = WalkLaw(beta)
    worst = 0.0
    for q in qs:
        tp = solve_tilt(law, q)
        worst = max(worst, float(np.linalg.norm(tp.grad - np.array([q, 0.0]))),
                    abs(tp.h0 + 2 * tp.h1))
    return CheckResult("tilt residuals", worst <= 1e-10, worst, f"beta = {beta}")


def check_conjugacy(beta: float = 1.0) -> CheckResult:
    law = WalkLaw(beta)
    h = np.linspace(-0.45, 0.45, 91) * beta
    d1 = law.log_mgf(h, 1)
    res = np.abs(legendre_Lstar(law, d1) + law.log_mgf(h) - h * d1)
    worst = float(res.max())
    return CheckResult("Legendre conjugacy", worst <= 1e-10, worst)


def check_local_clt(N_list=(20, 40), q: float = 1.0, beta: float = 1.0, C: float = 3.0) -> CheckResult:
    rows = local_clt_check(WalkLaw(beta), q, N_list)
    ratios = [r.ratio for r in rows]
    dev = [abs(r - 1) for r in ratios]
    ok = all(1 / C <= r <= C for r in ratios) and all(a > b for a, b in zip(dev, dev[1:]))
    return CheckResult("local CLT ratio", ok, max(dev),
                       ", ".join(f"N={r.N}: {r.ratio:.5f}" for r in rows))


def check_cache(cache_dir) -> CheckResult:
    directory = default_cache_dir(cache_dir)
    if directory is None or not directory.exists():
        return CheckResult("table cache integrity", True, 0.0, "no cache configured")
    results = TableCache(directory).verify_all()
    bad = [f"{name}: {err}" for name, err in results if err]
    return CheckResult("table cache integrity", not bad, float(len(bad)),
                       "; ".join(bad) if bad else f"{len(results)} tables ok")


def run_all(cache_dir=None, quick: bool = False) -> list:
    checks = [
        lambda: check_partition_identity(8 if quick else 10),
        lambda: check_wedge_identity(6 if quick else 8),
        check_area_monotonicity,
        lambda: check_one_bead_bounds(8 if quick else 10),
        check_h_at_zero,
        check_tilt_residuals,
        check_conjugacy,
        lambda: check_local_clt((20, 40)),
        lambda: check_cache(cache_dir),
    ]
    return [c() for c in checks]
