import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipdsaw.law import (DomainError, WalkLaw, beta_c, gamma_factor, log_gamma_factor, log_Phi,
                        phi_growth, sigma2)

betas = st.floats(0.05, 6.0)


def summed_mgf(beta, h, kmax=400):
    k = np.arange(-kmax, kmax + 1)
    w = np.exp(-beta * np.abs(k) / 2)
    return math.fsum(w * np.exp(h * k)) / math.fsum(w)


def cubic_root(coef, lo=0.0, hi=1.0):
    """Bisection on a polynomial in x = exp(-beta/2); oracle for beta_c."""
    f = lambda x: sum(c * x ** p for p, c in enumerate(coef))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (f(hi) > 0):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestPmf:
    def test_beta_two_log_two(self):
        law = WalkLaw(2 * math.log(2))
        assert law.c == pytest.approx(3.0, rel=1e-15)
        assert law.pmf(0) == pytest.approx(1 / 3, rel=1e-15)

    def test_mass_sums_to_one(self):
        law = WalkLaw(1.0)
        k = np.arange(-60, 61)
        assert math.fsum(law.pmf(k)) == pytest.approx(1.0, abs=1e-12)

    @given(betas, st.integers(-30, 30))
    def test_symmetry(self, beta, k):
        law = WalkLaw(beta)
        assert law.pmf(k) == law.pmf(-k)

    @pytest.mark.parametrize("beta", [0.0, -1.0, float("inf"), float("nan")])
    def test_bad_beta(self, beta):
        with pytest.raises(ValueError):
            WalkLaw(beta)


class TestLogMgf:
    def test_origin(self):
        law = WalkLaw(1.3)
        assert law.log_mgf(0.0) == pytest.approx(0.0, abs=1e-15)
        assert law.log_mgf(0.0, 1) == 0.0
        assert WalkLaw(2 * math.log(2)).log_mgf(0.0, 2) == pytest.approx(4.0, rel=1e-14)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("frac", [-0.4, 0.0, 0.4])
    def test_matches_direct_sum(self, beta, frac):
        h = frac * beta / 2
        assert WalkLaw(beta).log_mgf(h) == pytest.approx(math.log(summed_mgf(beta, h)), abs=1e-12)

    @pytest.mark.parametrize("beta", [0.5, 2.0])
    def test_derivatives_by_differences(self, beta):
        law = WalkLaw(beta)
        for h in np.linspace(-0.4, 0.4, 9) * beta:
            e = 1e-5
            d1 = (law.log_mgf(h + e) - law.log_mgf(h - e)) / (2 * e)
            d2 = (law.log_mgf(h + e, 1) - law.log_mgf(h - e, 1)) / (2 * e)
            assert law.log_mgf(h, 1) == pytest.approx(d1, rel=1e-7, abs=1e-9)
            assert law.log_mgf(h, 2) == pytest.approx(d2, rel=1e-7)

    @given(betas, st.floats(-0.999, 0.999))
    def test_even_and_convex(self, beta, frac):
        law = WalkLaw(beta)
        h = frac * beta / 2
        assert law.log_mgf(h) == pytest.approx(law.log_mgf(-h), rel=1e-12, abs=1e-14)
        assert law.log_mgf(h, 2) > 0

    def test_domain(self):
        law = WalkLaw(1.0)
        with pytest.raises(DomainError):
            law.log_mgf(0.5)
        with pytest.raises(DomainError):
            law.log_mgf(np.array([0.0, -0.7]))
        with pytest.raises(ValueError):
            law.log_mgf(0.1, 3)

    def test_edge_form_matches(self):
        law = WalkLaw(1.5)
        h = np.linspace(-0.7, 0.7, 15)
        for order in range(3):
            assert np.allclose(law.log_mgf(h, order),
                               law.log_mgf_edge(0.75 - h, 0.75 + h, order), rtol=1e-14, atol=0)


class TestScalars:
    def test_sigma2(self):
        assert sigma2(WalkLaw(2 * math.log(2))) == pytest.approx(4.0, rel=1e-14)
        law = WalkLaw(1.0)
        k = np.arange(-200, 201)
        assert sigma2(law) == pytest.approx(math.fsum(k ** 2 * law.pmf(k)), abs=1e-12)
        assert sigma2(law) == pytest.approx(law.log_mgf(0.0, 2), rel=1e-14)
        grid = np.linspace(0.5, 3.0, 26)
        assert np.all(np.diff([sigma2(WalkLaw(b)) for b in grid]) < 0)

    def test_gamma(self):
        assert gamma_factor(2 * math.log(2), "u") == pytest.approx(0.75, rel=1e-14)
        for b in (0.3, 1.0, 2.5):
            assert gamma_factor(b, "nu") == pytest.approx(2 / 3 * gamma_factor(b, "u"), rel=1e-14)
        grid = np.linspace(0.2, 4.0, 30)
        for m in ("u", "nu"):
            assert np.all(np.diff([log_gamma_factor(b, m) for b in grid]) < 0)

    def test_growth(self):
        assert phi_growth(1.0, "u") == 1.0
        assert phi_growth(math.log(2), "nu") == pytest.approx(0.0, abs=1e-16)
        assert log_Phi(17, 0.8, "u") / 17 == pytest.approx(0.8)

    @given(betas)
    def test_c_above_one(self, beta):
        assert WalkLaw(beta).c > 1


class TestCriticalPoint:
    def test_uniform_matches_cubic(self):
        x = cubic_root([-1, 1, 1, 1])
        bc = beta_c("u")
        assert bc == pytest.approx(-2 * math.log(x), abs=1e-9)
        assert abs(gamma_factor(bc, "u") - 1) <= 1e-10
        assert bc == pytest.approx(1.2187557268720166, abs=1e-11)

    def test_non_uniform_matches_cubic(self):
        x = cubic_root([-3, 3, 2, 2])
        bc = beta_c("nu")
        assert bc == pytest.approx(-2 * math.log(x), abs=1e-9)
        assert abs(gamma_factor(bc, "nu") - 1) <= 1e-10

    def test_brackets(self):
        bc, tol = beta_c("u", 1e-12), 1e-12
        assert gamma_factor(bc - 10 * tol, "u") > 1 > gamma_factor(bc + 10 * tol, "u")

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            beta_c("u", 0.0)
