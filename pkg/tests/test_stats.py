import itertools

import numpy as np
import pytest

from numsense.stats import (bh_fdr, bonferroni, cohen_d, kendall_tau_a,
                            mann_whitney_u, sign_test, t_test,
                            wilcoxon_signed_rank)


class TestWilcoxon:
    def test_all_positive_three(self):
        # 2^3 sign assignments, only the observed one reaches W+ = 6
        res = wilcoxon_signed_rank([1, 2, 3], alternative="greater")
        assert res.exact
        assert res.p_value == pytest.approx(1 / 8)

    def test_single_observation(self):
        res = wilcoxon_signed_rank([5], alternative="greater")
        assert res.p_value == pytest.approx(0.5)

    def test_all_zero_errors(self):
        with pytest.raises(ValueError):
            wilcoxon_signed_rank([0.0, 0.0])

    def test_exact_matches_brute_force_n8(self):
        rng = np.random.default_rng(3)
        diffs = rng.normal(size=8)
        res = wilcoxon_signed_rank(diffs, alternative="two-sided")
        # brute force over all 2^8 sign patterns
        ranks = np.argsort(np.argsort(np.abs(diffs))) + 1.0
        w_obs = ranks[diffs > 0].sum()
        ws = []
        for signs in itertools.product([0, 1], repeat=8):
            ws.append(sum(r for s, r in zip(signs, ranks) if s))
        ws = np.array(ws)
        p_brute = min(1.0, 2 * min(np.mean(ws >= w_obs), np.mean(ws <= w_obs)))
        assert res.p_value == pytest.approx(p_brute)

    def test_antisymmetric_two_sided(self):
        diffs = [-1, 1, -2, 2, -3, 3, -4, 4]
        res = wilcoxon_signed_rank(diffs, alternative="two-sided")
        assert res.p_value >= 0.99

    def test_exact_vs_approx_crossover(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            diffs = rng.normal(0.3, 1.0, size=25)
            exact = wilcoxon_signed_rank(diffs, alternative="two-sided")
            approx = wilcoxon_signed_rank(diffs, alternative="two-sided",
                                          exact_max_n=0)
            assert approx.z is not None
            assert abs(exact.p_value - approx.p_value) <= 0.01

    def test_ties_handled_with_midranks(self):
        res = wilcoxon_signed_rank([1, 1, 2, -2, 3, 3], alternative="greater")
        assert 0 < res.p_value < 1


class TestMannWhitney:
    def test_small_example(self):
        res = mann_whitney_u([1, 2], [3, 4], alternative="less")
        assert res.exact
        assert res.statistic == 0
        assert res.p_value == pytest.approx(1 / 6)

    def test_identical_samples_two_sided(self):
        res = mann_whitney_u([1, 2, 3], [1, 2, 3], alternative="two-sided")
        assert res.p_value == pytest.approx(1.0)

    def test_extreme_shift_hits_minimal_p(self):
        x = [101, 102, 103]
        y = [1, 2, 3]
        res = mann_whitney_u(x, y, alternative="greater")
        # minimal attainable exact p for (3, 3) is 1 / C(6, 3)
        assert res.p_value == pytest.approx(1 / 20)

    def test_empty_sample_errors(self):
        with pytest.raises(ValueError):
            mann_whitney_u([], [1.0])

    def test_exact_vs_approx_crossover(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.normal(0.0, 1.0, size=10)
            y = rng.normal(0.5, 1.0, size=10)
            exact = mann_whitney_u(x, y, alternative="two-sided")
            approx = mann_whitney_u(x, y, alternative="two-sided", exact_max_n=0)
            assert abs(exact.p_value - approx.p_value) <= 0.01

    def test_exact_dp_matches_brute_force(self):
        from itertools import combinations
        rng = np.random.default_rng(13)
        for trial in range(10):
            x = rng.normal(size=4)
            y = rng.normal(size=5)
            if trial % 2:  # exercise the tie handling too
                x = np.round(x)
                y = np.round(y)
            res = mann_whitney_u(x, y, alternative="less")
            from numsense.stats import _midranks
            pooled = np.concatenate([x, y])
            ranks = _midranks(pooled)
            u_obs = ranks[:4].sum() - 4 * 5 / 2.0
            us = [ranks[list(c)].sum() - 4 * 5 / 2.0
                  for c in combinations(range(9), 4)]
            assert res.p_value == pytest.approx(np.mean(np.array(us) <= u_obs + 1e-9))


class TestTTest:
    def test_mean_equals_mu0(self):
        res = t_test([1.0, 2.0, 3.0], mu0=2.0)
        assert res.statistic == pytest.approx(0.0)
        assert res.p_value == pytest.approx(1.0)

    def test_hand_computed(self):
        # mean 2, sd 1, se 1/sqrt(3): t = 2*sqrt(3), dof 2
        res = t_test([1.0, 2.0, 3.0], mu0=0.0)
        assert res.statistic == pytest.approx(3.4641016151)
        # published two-sided value for t = 3.4641, dof = 2
        assert res.p_value == pytest.approx(0.0741799, abs=1e-6)

    def test_paired_identical_errors(self):
        with pytest.raises(ValueError):
            t_test([1.0, 2.0, 3.0], mode="paired", other=[1.0, 2.0, 3.0])

    def test_against_scipy(self):
        from scipy import stats as sps
        rng = np.random.default_rng(9)
        x = rng.normal(0.4, 1.0, size=15)
        res = t_test(x, mu0=0.0)
        ref = sps.ttest_1samp(x, 0.0)
        assert res.statistic == pytest.approx(ref.statistic)
        assert res.p_value == pytest.approx(ref.pvalue)


class TestKendallTauA:
    def test_identity(self):
        assert kendall_tau_a([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)

    def test_reversal(self):
        assert kendall_tau_a([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)

    def test_one_discordant_pair(self):
        assert kendall_tau_a([1, 2, 3], [1, 3, 2]) == pytest.approx(1 / 3)

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=30), rng.normal(size=30)
        assert kendall_tau_a(x, y) == pytest.approx(kendall_tau_a(y, x))

    def test_monotone_invariance(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=25)
        y = rng.normal(size=25)
        tau = kendall_tau_a(x, y)
        assert kendall_tau_a(np.exp(x), y) == pytest.approx(tau)
        assert kendall_tau_a(x, y ** 3) == pytest.approx(tau)

    def test_mergesort_agrees_with_quadratic(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            x = rng.permutation(60).astype(float)
            y = rng.permutation(60).astype(float)
            assert (kendall_tau_a(x, y, method="mergesort")
                    == kendall_tau_a(x, y, method="quadratic"))

    def test_mergesort_rejects_ties(self):
        with pytest.raises(ValueError):
            kendall_tau_a([1, 1, 2], [1, 2, 3], method="mergesort")


class TestCorrections:
    def test_bh_step_up_rescue(self):
        # 0.039 fails its own threshold but is rescued by 0.041 <= 4*q/4
        flags, k = bh_fdr([0.001, 0.008, 0.039, 0.041], q=0.05)
        assert k == 4
        assert flags.all()

    def test_bh_none_rejected(self):
        flags, k = bh_fdr([1.0, 1.0, 1.0], q=0.05)
        assert k == 0
        assert not flags.any()

    def test_bh_single_boundary(self):
        q = 0.01
        assert bh_fdr([q * 0.99], q)[1] == 1
        assert bh_fdr([q * 1.01], q)[1] == 0

    def test_bh_dominates_bonferroni(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            p = rng.random(size=rng.integers(1, 12))
            bh_flags, _ = bh_fdr(p, 0.05)
            bonf_flags = bonferroni(p, 0.05)
            assert np.all(bh_flags | ~bonf_flags)

    def test_empty_input(self):
        flags, k = bh_fdr([], 0.05)
        assert len(flags) == 0 and k == 0


def test_sign_test_exact():
    res = sign_test([1, 1, 1, 1, 1, 1], alternative="greater")
    assert res.p_value == pytest.approx(1 / 64)
    res = sign_test([1, 1, 1, 1, 1, -1], alternative="greater")
    assert res.p_value == pytest.approx(7 / 64)


def test_p_values_always_in_unit_interval():
    rng = np.random.default_rng(12)
    for _ in range(400):
        n = int(rng.integers(1, 40))
        diffs = rng.normal(rng.normal(), 1.0, size=n)
        if np.all(diffs == 0):
            continue
        for alt in ("two-sided", "greater", "less"):
            assert 0 <= wilcoxon_signed_rank(diffs, alternative=alt).p_value <= 1
        x = rng.normal(size=int(rng.integers(1, 20)))
        y = rng.normal(size=int(rng.integers(1, 20)))
        for alt in ("two-sided", "greater", "less"):
            assert 0 <= mann_whitney_u(x, y, alternative=alt).p_value <= 1


def test_cohen_d_sign():
    assert cohen_d([2, 3, 4], [1, 2, 3]) > 0
    assert cohen_d([1, 2, 3], [2, 3, 4]) < 0
