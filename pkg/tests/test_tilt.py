import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import spence

from ipdsaw.areadp import tilted_joint_pmf
from ipdsaw.law import DomainError, WalkLaw, log_gamma_factor
from ipdsaw.tilt import (G_tilde, L_Lambda, L_Lambda_n, PhaseError, a_star, d2G_tilde, dG_tilde,
                         decay_rate, decay_rate_finite, gaussian_density, grad_L_Lambda, h0_tilde,
                         hessian_B, integrate, legendre_Lstar, local_clt_check, rate_J, solve_tilt,
                         solve_tilt_finite, wulff_shape)

LAW1 = WalkLaw(1.0)
LAW2 = WalkLaw(2.0)


def li2(w):
    return spence(1.0 - w)


def L_Lambda_closed(law, H):
    """int_0^1 L(x h0 + h1) dx, using int -log(1 - e^{a + b x}) dx = (Li2(e^{a+b}) - Li2(e^a)) / b."""
    h0, h1 = H
    b2 = law.beta / 2
    const = math.log(-math.expm1(-law.beta)) - law.log_c

    def piece(a, b):
        if abs(b) < 1e-14:
            return -math.log(-math.expm1(a))
        return (li2(math.exp(a + b)) - li2(math.exp(a))) / b

    return const + piece(h1 - b2, h0) + piece(-h1 - b2, -h0)


class TestQuadrature:
    def test_polynomial_exact(self):
        f = lambda x: np.vstack([x ** 5, np.cos(x)])
        v = integrate(f, 0.0, 1.0)
        assert v[0] == pytest.approx(1 / 6, rel=1e-14)
        assert v[1] == pytest.approx(math.sin(1.0), rel=1e-14)

    def test_log_singularity(self):
        f = lambda x, d: -np.log(d)
        assert integrate(f, 0.0, 1.0, right=1.0)[0] == pytest.approx(1.0, rel=1e-11)


class TestLLambda:
    @pytest.mark.parametrize("H", [(0.3, -0.15), (0.0, 0.2), (-0.6, 0.25), (0.95, -0.47)])
    def test_closed_form(self, H):
        assert L_Lambda(LAW1, H) == pytest.approx(L_Lambda_closed(LAW1, H), abs=1e-12)

    def test_gradient_by_differences(self):
        H, e = np.array([0.3, -0.15]), 1e-5
        g = grad_L_Lambda(LAW1, H)
        for k in range(2):
            d = np.zeros(2)
            d[k] = e
            fd = (L_Lambda_closed(LAW1, H + d) - L_Lambda_closed(LAW1, H - d)) / (2 * e)
            assert g[k] == pytest.approx(fd, abs=1e-7)

    def test_hessian_by_differences(self):
        H, e = np.array([0.3, -0.15]), 1e-5
        B = hessian_B(LAW1, H)
        for k in range(2):
            d = np.zeros(2)
            d[k] = e
            fd = (grad_L_Lambda(LAW1, H + d) - grad_L_Lambda(LAW1, H - d)) / (2 * e)
            assert np.allclose(B[:, k], fd, atol=1e-7)
        assert np.all(np.linalg.eigvalsh(B) > 0)

    @given(st.floats(-0.9, 0.9), st.floats(-0.45, 0.45))
    @settings(max_examples=30)
    def test_symmetries(self, h0, h1):
        H = (h0, h1)
        if not (abs(h1) < 0.5 and abs(h0 + h1) < 0.5):
            return
        v = L_Lambda(LAW1, H)
        assert L_Lambda(LAW1, (-h0, -h1)) == pytest.approx(v, abs=1e-12)
        # reversing the direction of x: h(x) = h0 x + h1 becomes -h0 x + (h0 + h1)
        assert L_Lambda(LAW1, (-h0, h0 + h1)) == pytest.approx(v, abs=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            L_Lambda(LAW1, (0.8, 0.0))


class TestSolveTilt:
    @pytest.mark.parametrize("q", [0.1, 0.25, 1.0, 4.0, 10.0])
    def test_residual(self, q):
        tp = solve_tilt(LAW1, q)
        assert np.linalg.norm(tp.grad - [q, 0.0]) <= 1e-10
        assert tp.h0 + 2 * tp.h1 == pytest.approx(0.0, abs=1e-10)

    def test_h0_increasing(self):
        qs = [0.05, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0]
        h = [h0_tilde(LAW1, q) for q in qs]
        assert all(a < b for a, b in zip(h, h[1:]))
        assert h[-1] < LAW1.beta

    @pytest.mark.parametrize("q", [0.5, 1.0, 2.0])
    def test_finite_tilt_converges_at_rate_one_over_n(self, q):
        Ht = np.array(solve_tilt(LAW1, q).H)
        scaled = [n * np.linalg.norm(np.array(solve_tilt_finite(LAW1, n, q)) - Ht) for n in (16, 32, 64, 128, 256)]
        assert max(scaled) < 1.0
        assert max(scaled) / min(scaled) < 1.5

    def test_bad_q(self):
        with pytest.raises(ValueError):
            solve_tilt(LAW1, 0.0)
        with pytest.raises(ValueError):
            solve_tilt_finite(LAW1, 4, 1.0)


Q_RATE = 0.5


def target_entry(n, q, H, s_margin, v_half):
    s_t = int(round(n * n * q))
    T = tilted_joint_pmf(LAW1, n, H, (-s_margin, s_t + s_margin), (-v_half, v_half))
    return s_t, T.prob(s_t, 0)


@pytest.fixture(scope="module")
def untilted_dp():
    """(1/n) log P(S_n = n^2 q, V_n = 0) from the H = 0 DP.

    The windows are wide enough that the target entry no longer changes
    when they grow (checked at 1.5x and 2x while choosing them).
    """
    out = {}
    for n in (40, 80):
        _, p = target_entry(n, Q_RATE, (0.0, 0.0), 75 * n, 5 * n + 100)
        out[n] = math.log(p) / n
    return out


class TestDecayRate:
    @pytest.mark.parametrize("n", [40, 80])
    def test_dp_within_stated_band(self, n, untilted_dp):
        rate = decay_rate(LAW1, Q_RATE)
        assert abs(untilted_dp[n] - rate) <= 0.1 * abs(rate) + 2 * math.log(n) / n

    def test_gap_shrinks(self, untilted_dp):
        rate = decay_rate(LAW1, Q_RATE)
        assert abs(untilted_dp[80] - rate) < abs(untilted_dp[40] - rate)

    def test_exact_tilt_identity(self, untilted_dp):
        # P_0(S = s, V = 0) = exp(L_{Lambda_n}(H) - h0 s / n) P_H(S = s, V = 0)
        n = 40
        H = solve_tilt_finite(LAW1, n, Q_RATE)
        s_t, p_h = target_entry(n, Q_RATE, H, 2000, 300)
        tilted = (L_Lambda_n(LAW1, n, H) - H[0] * s_t / n + math.log(p_h)) / n
        assert tilted == pytest.approx(untilted_dp[n], abs=1e-10)

    def test_local_clt_prefactor(self, untilted_dp):
        f0 = gaussian_density(solve_tilt(LAW1, Q_RATE).B, (0.0, 0.0))
        for n in (40, 80):
            approx = decay_rate_finite(LAW1, n, Q_RATE) + math.log(f0 / n ** 2) / n
            assert approx == pytest.approx(untilted_dp[n], abs=2e-3)

    def test_concave_in_q(self):
        qs = np.linspace(0.2, 3.0, 9)
        r = np.array([decay_rate(LAW1, q) for q in qs])
        assert np.all(r < 0)
        assert np.all(np.diff(r) < 0)
        assert np.all(np.diff(r, 2) < 1e-10)


class TestVariational:
    def test_G_concave_around_maximum(self):
        a = a_star(LAW2, "u")
        for x in np.linspace(0.7, 2.5, 7) * a:
            assert d2G_tilde(LAW2, "u", x) < 0
        e = 1e-4
        fd = (G_tilde(LAW2, "u", a + e) - 2 * G_tilde(LAW2, "u", a) + G_tilde(LAW2, "u", a - e)) / e ** 2
        assert d2G_tilde(LAW2, "u", a) == pytest.approx(fd, rel=1e-3)
        assert abs(dG_tilde(LAW2, "u", a)) <= 1e-10
        assert G_tilde(LAW2, "u", a) > max(G_tilde(LAW2, "u", 0.8 * a), G_tilde(LAW2, "u", 1.25 * a))

    def test_extended_phase_rejected(self):
        with pytest.raises(PhaseError):
            a_star(LAW1, "u")


@pytest.fixture(scope="module")
def wulff():
    return wulff_shape(LAW2, "u")


class TestWulff:
    def test_rate_identity(self, wulff):
        q = 1 / wulff.a_star ** 2
        tp = solve_tilt(LAW2, q)
        assert wulff.J == pytest.approx(tp.h0 * q - tp.value, abs=1e-8)
        assert G_tilde(LAW2, "u", wulff.a_star) == pytest.approx(
            wulff.a_star * (log_gamma_factor(2.0, "u") - wulff.J), abs=1e-8)

    def test_symmetric_and_pinned(self, wulff):
        assert wulff.gamma[0] == 0.0
        assert abs(wulff.gamma[-1]) <= 1e-10
        assert np.max(np.abs(wulff.gamma - wulff.gamma[::-1])) <= 1e-10

    def test_area_matches_scale(self, wulff):
        assert wulff.area() == pytest.approx(1 / wulff.a_star ** 2, abs=1e-8)

    def test_closed_form_profile(self, wulff):
        assert np.max(np.abs(wulff(wulff.s) - wulff.gamma)) <= 1e-12

    def test_discrete_rate_converges(self, wulff):
        assert rate_J(LAW2, wulff.gamma, wulff.s) == pytest.approx(wulff.J, abs=1e-5)


class TestConjugate:
    def test_inverse_pair(self):
        h = np.linspace(-0.49, 0.49, 41)
        v = LAW1.log_mgf(h, 1)
        assert np.allclose(legendre_Lstar(LAW1, v), h * v - LAW1.log_mgf(h), atol=1e-12)

    @given(st.floats(-50, 50), st.floats(-0.499, 0.499))
    @settings(max_examples=40)
    def test_fenchel_young(self, v, h):
        assert legendre_Lstar(LAW1, v) + LAW1.log_mgf(h) >= h * v - 1e-10

    def test_zero_slope(self):
        assert legendre_Lstar(LAW1, 0.0) == pytest.approx(0.0, abs=1e-15)


class TestGaussian:
    def test_integrates_to_one(self):
        B = np.array([[0.4, 0.15], [0.15, 0.3]])
        x = np.linspace(-6, 6, 121)
        X, Y = np.meshgrid(x, x, indexing="ij")
        vals = np.array([[gaussian_density(B, (a, b)) for a, b in zip(r1, r2)] for r1, r2 in zip(X, Y)])
        dx = x[1] - x[0]
        assert vals.sum() * dx * dx == pytest.approx(1.0, rel=1e-6)

    def test_rejects_bad_matrix(self):
        with pytest.raises(ValueError):
            gaussian_density([[1.0, 2.0], [2.0, 1.0]], (0, 0))
        with pytest.raises(ValueError):
            gaussian_density([[1.0, 0.1], [0.0, 1.0]], (0, 0))

    def test_local_clt_improves(self):
        rows = local_clt_check(LAW1, 1.0, (20, 40))
        dev = [abs(r.ratio - 1) for r in rows]
        assert dev[1] < dev[0] < 0.05
