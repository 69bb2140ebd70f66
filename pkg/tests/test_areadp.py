import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from ipdsaw.areadp import (OutOfTableError, PolymerSampler, TiltDomainError, build_area_table,
                           conditional_positive_prob, discounted_area_expectation,
                           excess_partition_curve, one_bead_partition_curve, partition_table,
                           prob_area_excursion, prob_area_return, tilted_joint_pmf,
                           tilted_walk_marginal)
from ipdsaw.law import WalkLaw, log_Phi
from ipdsaw.polymer import boltzmann_weight, brute_force_Z, enumerate_configs, one_bead_Z_table
from ipdsaw.tilt import finite_system, solve_tilt_finite


def walk_oracle(beta, n, k, positive=False):
    """P(A_n = k, V_n = 0) by a dictionary recursion over (position, area)."""
    law = WalkLaw(beta)
    states = {(0, 0): 1.0}
    for step in range(1, n + 1):
        nxt = {}
        for (x, a), p in states.items():
            for y in range(-k, k + 1):
                if a + abs(y) > k:
                    continue
                if positive and step < n and y <= 0:
                    continue
                if step == n and y != 0:
                    continue
                nxt[(y, a + abs(y))] = nxt.get((y, a + abs(y)), 0.0) + p * law.pmf(y - x)
        states = nxt
    return states.get((0, k), 0.0)


class TestReturnProbabilities:
    def test_single_step(self):
        law = WalkLaw(1.0)
        assert prob_area_return(law, 1, 0) == pytest.approx(1 / law.c, rel=1e-14)
        assert prob_area_return(law, 1, 1) == 0.0

    def test_two_steps_closed_form(self):
        law = WalkLaw(2 * math.log(2))
        # V_1 = +-k, both increments of size k: 2 (2^-k / 3)^2
        for k in range(1, 6):
            assert prob_area_return(law, 2, k) == pytest.approx(2 * (2.0 ** -k / 3) ** 2, rel=1e-13)
            assert prob_area_excursion(law, 2, k) == pytest.approx((2.0 ** -k / 3) ** 2, rel=1e-13)

    @pytest.mark.parametrize("beta", [0.7, 2.0])
    def test_against_recursion_oracle(self, beta):
        law = WalkLaw(beta)
        for n in range(1, 6):
            for k in range(0, 7):
                for pos, fn in ((False, prob_area_return), (True, prob_area_excursion)):
                    want = walk_oracle(beta, n, k, pos)
                    assert fn(law, n, k) == pytest.approx(want, rel=1e-12, abs=1e-300)

    @given(st.floats(0.3, 3.0), st.integers(1, 8), st.integers(0, 12))
    @settings(max_examples=30)
    def test_excursion_below_return(self, beta, n, k):
        law = WalkLaw(beta)
        assert prob_area_excursion(law, n, k) <= prob_area_return(law, n, k) * (1 + 1e-12)

    def test_conditional_share(self):
        law = WalkLaw(1.3)
        # a single interior point at height +-1: half of the bridges are positive
        assert conditional_positive_prob(law, 2, 1) == pytest.approx(0.5, rel=1e-13)
        assert conditional_positive_prob(law, 1, 0) == pytest.approx(1.0)
        with pytest.raises(ZeroDivisionError):
            conditional_positive_prob(law, 1, 1)

    def test_first_layer(self):
        law = WalkLaw(1.0)
        tab = build_area_table(law, 3, 6, store_layers=True)
        for x in range(-6, 7):
            for a in range(7):
                want = law.pmf(x) if a == abs(x) else 0.0
                assert tab.D(1, x, a) == pytest.approx(want, rel=1e-14, abs=0)

    def test_out_of_table(self):
        tab = build_area_table(WalkLaw(1.0), 3, 4)
        with pytest.raises(OutOfTableError):
            tab.log_prob_return(4, 0)
        with pytest.raises(ValueError):
            build_area_table(WalkLaw(1.0), 0, 4)


class TestPartitionSums:
    @pytest.mark.parametrize("beta", [0.5, 1.5])
    def test_identity_with_enumeration(self, beta, model):
        law = WalkLaw(beta)
        curve = excess_partition_curve(law, model, 9)
        for L in range(1, 10):
            lhs = law.log_c + log_Phi(L, beta, model) + curve[L - 1]
            assert lhs == pytest.approx(math.log(brute_force_Z(L, beta, model)), abs=1e-11)

    @pytest.mark.parametrize("beta", [0.5, 1.5])
    def test_one_bead_with_enumeration(self, beta, model):
        law, L = WalkLaw(beta), 9
        curve = one_bead_partition_curve(law, model, L)
        for k in range(1, L + 1):
            got = law.log_c + log_Phi(k, beta, model) + curve[k - 1]
            # the last row's upper bound is Zo_k * Z_0 = Zo_k
            want = math.log(one_bead_Z_table(k, beta, model)[-1][3])
            assert got == pytest.approx(want, abs=1e-11)

    def test_table_reuse(self):
        law = WalkLaw(1.0)
        tab = partition_table(law, 30)
        assert np.array_equal(excess_partition_curve(law, "u", 30, tab), excess_partition_curve(law, "u", 30))


def config_distribution(L, beta, m):
    w = {l.stretches: boltzmann_weight(l, beta, m) for l in enumerate_configs(L)}
    tot = math.fsum(w.values())
    return {k: v / tot for k, v in w.items()}


class TestSampler:
    def test_short_polymer_law(self):
        # L = 2: (1), (-1), (0, 0), none with a self-touching, so each has weight 1/3 at m = u
        probs = config_distribution(2, 1.0, "u")
        assert probs == pytest.approx({(1,): 1 / 3, (-1,): 1 / 3, (0, 0): 1 / 3})
        n = 100_000
        draws = PolymerSampler(WalkLaw(1.0), "u", 2).sample(n, seed=101)
        cnt = Counter(d.stretches for d in draws)
        assert set(cnt) == set(probs)
        for k, p in probs.items():
            assert abs(cnt[k] - n * p) <= 3 * math.sqrt(n * p * (1 - p))

    def test_length_six_law(self):
        beta = 1.6
        probs = config_distribution(6, beta, "nu")
        draws = PolymerSampler(WalkLaw(beta), "nu", 6).sample(20000, seed=202)
        cnt = Counter(d.stretches for d in draws)
        keys = sorted(probs, key=lambda k: -probs[k])
        big = [k for k in keys if probs[k] * len(draws) >= 20]
        obs = [cnt.get(k, 0) for k in big] + [len(draws) - sum(cnt.get(k, 0) for k in big)]
        exp = [probs[k] * len(draws) for k in big]
        exp.append(len(draws) - sum(exp))
        assert chisquare(obs, exp).pvalue > 1e-3

    def test_stretch_count_law(self):
        s = PolymerSampler(WalkLaw(2.0), "u", 50)
        draws = s.sample(3000, seed=303)
        N = np.array([d.N for d in draws])
        assert all(d.L == 50 for d in draws)
        obs = np.bincount(N, minlength=51)[1:]
        exp = s.N_weights * len(draws)
        keep = exp >= 10
        o = np.append(obs[keep], obs[~keep].sum())
        e = np.append(exp[keep], exp[~keep].sum())
        assert chisquare(o, e * o.sum() / e.sum()).pvalue > 1e-3
        assert s.max_step_defect <= 1e-12

    def test_reproducible_per_draw(self):
        s = PolymerSampler(WalkLaw(1.0), "u", 40)
        a = s.sample(5, seed=9)
        b = PolymerSampler(WalkLaw(1.0), "u", 40).sample(8, seed=9)
        assert [x.stretches for x in a] == [x.stretches for x in b[:5]]

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            PolymerSampler(WalkLaw(1.0), "u", 0)
        with pytest.raises(ValueError):
            PolymerSampler(WalkLaw(1.0), "u", 5).sample(1, None)


class TestDiscountedArea:
    def test_no_steps(self):
        assert discounted_area_expectation(WalkLaw(1.0), 0.3, 0, x0=4) == 1.0

    def test_one_step_closed_form(self):
        law, d = WalkLaw(1.0), 0.2
        k = np.arange(-200, 201)
        want = math.fsum(law.pmf(k) * np.exp(-d * np.abs(k)))
        assert discounted_area_expectation(law, d, 1) == pytest.approx(want, rel=1e-13)

    @given(st.floats(0.01, 0.5), st.integers(1, 15))
    @settings(max_examples=20)
    def test_decreasing_in_start(self, d, n):
        law = WalkLaw(1.0)
        vals = [discounted_area_expectation(law, d, n, x0=x) for x in range(0, 8)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_residual_small(self):
        val, lost = discounted_area_expectation(WalkLaw(1.0), 0.1, 30, return_residual=True)
        assert 0 < val < 1 and lost < 1e-12


class TestTiltedWalk:
    def test_marginal_matches_one_dimensional(self):
        law, H = WalkLaw(1.0), (0.2, -0.1)
        T = tilted_joint_pmf(law, 20, H, (-4000, 4000), (-300, 300))
        one = tilted_walk_marginal(law, 20, H, (-300, 300))
        # the joint table also loses mass through the s window; the reported
        # truncation bounds every entry of the difference
        assert np.max(np.abs(T.marginal_v() - one)) <= T.truncated + 1e-15
        assert T.truncated < 1e-12

    @staticmethod
    def _mean_tol(T):
        reach = max(abs(T.s_values[0]), abs(T.s_values[-1]))
        return 2 * T.truncated * reach + 1e-9

    @pytest.mark.parametrize("H", [(0.3, -0.15), (-0.2, 0.05)])
    def test_mean_is_gradient(self, H):
        law, N = WalkLaw(1.0), 24
        F, _ = finite_system(law, N, H)
        T = tilted_joint_pmf(law, N, H, (-4000, 4000), (-300, 300))
        es, ev = T.mean()
        assert es == pytest.approx(N * N * F[0], abs=self._mean_tol(T))
        assert ev == pytest.approx(N * F[1], abs=self._mean_tol(T))
        assert self._mean_tol(T) < 1e-7

    def test_mean_at_finite_tilt(self):
        law, N, q = WalkLaw(1.0), 20, 1.0
        T = tilted_joint_pmf(law, N, solve_tilt_finite(law, N, q), (-3000, 6000), (-300, 300))
        es, ev = T.mean()
        assert es == pytest.approx(q * N * N, abs=self._mean_tol(T))
        assert ev == pytest.approx(0.0, abs=self._mean_tol(T))

    def test_default_window_reports_loss(self):
        law, N = WalkLaw(1.0), 20
        H = solve_tilt_finite(law, N, 1.0)
        narrow = tilted_joint_pmf(law, N, H)
        wide = tilted_joint_pmf(law, N, H, (-3000, 6000), (-300, 300))
        assert narrow.truncated == pytest.approx(1 - narrow.weights.sum(), abs=1e-15)
        assert 0 < wide.truncated < narrow.truncated < 1e-4
        # entries inside the narrow window only lose what left it
        assert abs(narrow.prob(400, 0) - wide.prob(400, 0)) <= narrow.truncated

    def test_reflection(self):
        law = WalkLaw(1.0)
        A = tilted_joint_pmf(law, 12, (0.2, 0.1), (-300, 300), (-40, 40))
        B = tilted_joint_pmf(law, 12, (-0.2, -0.1), (-300, 300), (-40, 40))
        assert np.allclose(A.weights, B.weights[::-1, ::-1], atol=1e-15)

    def test_domain(self):
        with pytest.raises(TiltDomainError):
            tilted_joint_pmf(WalkLaw(1.0), 5, (0.0, 0.6))
