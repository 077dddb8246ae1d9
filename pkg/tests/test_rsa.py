import math

import numpy as np
import pytest

from numsense.rsa import (DEFAULT_CANDIDATES, Rdm, candidate_rdms,
                          compare_rdms, compute_categorical_rdm, mean_rdm,
                          rank_transform, rdm_from_patterns,
                          relatedness_and_ceiling, read_rdm_csv, write_rdm_csv)
from numsense.stimspace import StimulusParams

RSA_PARAMS = [StimulusParams(n, sz, sp)
              for n in (7, 18, 28)
              for sz in (2.60e5, 6.55e5, 10.40e5)
              for sp in (0.80e7, 2.02e7, 3.20e7)]


def synthetic_instances(n_instances, noise=0.3, seed=0, n_units=40):
    """Instance RDMs sharing a numerosity-driven structure plus noise."""
    from numsense.rsa import condition_label
    rng = np.random.default_rng(seed)
    labels = [condition_label(p) for p in RSA_PARAMS]
    rdms = []
    for _ in range(n_instances):
        patterns = []
        for p in RSA_PARAMS:
            base = np.sin(np.arange(n_units) * math.log2(p.n))
            patterns.append(base + noise * rng.normal(size=n_units))
        rdms.append(rdm_from_patterns(np.array(patterns), labels))
    return rdms


class TestRdmType:
    def test_rejects_asymmetry(self):
        values = np.zeros((3, 3))
        values[0, 1] = 1.0
        with pytest.raises(ValueError, match="symmetric"):
            Rdm(("a", "b", "c"), values)

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(ValueError, match="diagonal"):
            Rdm(("a", "b"), np.eye(2))

    def test_lower_triangle_length(self):
        rdm = synthetic_instances(1)[0]
        assert len(rdm.lower_triangle()) == 27 * 26 // 2 == 351


class TestModelRdm:
    def test_identical_patterns_zero_dissimilarity(self):
        patterns = np.vstack([np.sin(np.arange(20))] * 2)
        rdm = rdm_from_patterns(patterns, ["a", "b"])
        assert rdm.values[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_anticorrelated_patterns_give_two(self):
        base = np.sin(np.arange(20))
        rdm = rdm_from_patterns(np.vstack([base, 2 * base.mean() - base]), ["a", "b"])
        assert rdm.values[0, 1] == pytest.approx(2.0)

    def test_zero_variance_pattern_errors(self):
        patterns = np.vstack([np.ones(10), np.arange(10.0)])
        with pytest.raises(ValueError, match="zero-variance"):
            rdm_from_patterns(patterns, ["a", "b"])

    def test_entries_in_pearson_range(self):
        rdm = synthetic_instances(1, noise=1.0)[0]
        assert rdm.values.min() >= 0.0
        assert rdm.values.max() <= 2.0


class TestCategoricalRdm:
    def test_numerosity_log_distance(self):
        rdm = compute_categorical_rdm("num", RSA_PARAMS)
        i = next(k for k, p in enumerate(RSA_PARAMS) if p.n == 7)
        j = next(k for k, p in enumerate(RSA_PARAMS) if p.n == 18)
        assert rdm.values[i, j] == pytest.approx(math.log2(18 / 7))

    def test_diagonal_zero(self):
        for feature in DEFAULT_CANDIDATES:
            rdm = compute_categorical_rdm(feature, RSA_PARAMS)
            assert np.all(np.diag(rdm.values) == 0.0)

    def test_three_distinct_offdiagonal_values_for_num(self):
        rdm = compute_categorical_rdm("num", RSA_PARAMS)
        off = rdm.values[np.triu_indices(27, k=1)]
        distinct = np.unique(np.round(off[off > 0], 12))
        assert len(distinct) == 3
        assert sorted(distinct) == pytest.approx(
            sorted([math.log2(18 / 7), math.log2(28 / 18), 2.0]))

    def test_convex_hull_equals_field_area(self):
        cands = candidate_rdms(RSA_PARAMS)
        assert np.array_equal(cands["convex_hull"].values, cands["fa"].values)

    def test_pearson_self_correlation_is_one(self):
        for name, rdm in candidate_rdms(RSA_PARAMS).items():
            tri = rdm.lower_triangle()
            assert np.corrcoef(tri, tri)[0, 1] == pytest.approx(1.0)


class TestCompareRdms:
    def test_identity_without_ties(self):
        rdm = synthetic_instances(1)[0]
        assert compare_rdms(rdm, rdm) == pytest.approx(1.0)

    def test_rank_reversal(self):
        rdm = synthetic_instances(1)[0]
        tri = rdm.lower_triangle()
        reversed_values = rdm.values.max() + rdm.values.min() - rdm.values
        np.fill_diagonal(reversed_values, 0.0)
        rev = Rdm(rdm.labels, reversed_values)
        assert compare_rdms(rdm, rev) == pytest.approx(-1.0)

    def test_three_entry_triangle(self):
        a = Rdm(("x", "y", "z"), np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], float))
        b = Rdm(("x", "y", "z"), np.array([[0, 1, 3], [1, 0, 2], [3, 2, 0]], float))
        assert compare_rdms(a, b) == pytest.approx(1 / 3)

    def test_label_mismatch(self):
        a = synthetic_instances(1)[0]
        b = Rdm(tuple(f"c{i}" for i in range(27)), a.values)
        with pytest.raises(ValueError, match="labels"):
            compare_rdms(a, b)

    def test_symmetric_in_arguments(self):
        a, b = synthetic_instances(2, seed=5)
        assert compare_rdms(a, b) == pytest.approx(compare_rdms(b, a))

    def test_invariant_under_monotone_transform(self):
        a, b = synthetic_instances(2, seed=6)
        cubed = Rdm(b.labels, b.values ** 3)
        assert compare_rdms(a, cubed) == pytest.approx(compare_rdms(a, b))

    def test_rank_transform_preserves_tau(self):
        a, b = synthetic_instances(2, seed=7)
        assert compare_rdms(rank_transform(a), b) == pytest.approx(compare_rdms(a, b))
        tri = rank_transform(a).lower_triangle()
        assert tri.min() >= 0.0 and tri.max() <= 1.0


class TestRelatednessAndCeiling:
    def test_requires_six_instances(self):
        instances = synthetic_instances(5)
        cands = {"num": compute_categorical_rdm("num", RSA_PARAMS)}
        with pytest.raises(ValueError, match="6"):
            relatedness_and_ceiling(instances, cands)

    def test_mean_rdm_candidate_hits_upper_ceiling(self):
        instances = synthetic_instances(8, seed=1)
        cands = {"num": compute_categorical_rdm("num", RSA_PARAMS),
                 "mean": mean_rdm(instances)}
        report = relatedness_and_ceiling(instances, cands)
        assert report.candidates["mean"].mean_tau == pytest.approx(
            report.ceiling_upper, abs=1e-9)

    def test_lower_ceiling_below_upper(self):
        for seed in range(3):
            instances = synthetic_instances(7, noise=0.5, seed=seed)
            cands = {"num": compute_categorical_rdm("num", RSA_PARAMS)}
            report = relatedness_and_ceiling(instances, cands)
            assert report.ceiling_lower <= report.ceiling_upper

    def test_structured_candidate_detected(self):
        instances = synthetic_instances(12, noise=0.2, seed=2)
        cands = candidate_rdms(RSA_PARAMS, candidates=("num", "fa"))
        report = relatedness_and_ceiling(instances, cands, fdr_q=0.05)
        # the instance structure is numerosity-driven by construction
        assert report.candidates["num"].mean_tau > report.candidates["fa"].mean_tau
        assert report.candidates["num"].significant

    def test_pure_noise_candidate_rarely_significant(self):
        nonsig = 0
        for rep in range(20):
            instances = synthetic_instances(12, noise=0.25, seed=100 + rep)
            rng = np.random.default_rng(999)
            noise_vals = np.zeros((27, 27))
            idx = np.tril_indices(27, k=-1)
            noise_vals[idx] = rng.random(len(idx[0]))
            noise_vals = noise_vals + noise_vals.T
            cands = {
                "num": compute_categorical_rdm("num", RSA_PARAMS),
                "noise": Rdm(instances[0].labels, noise_vals),
            }
            report = relatedness_and_ceiling(instances, cands, fdr_q=0.01)
            if not report.candidates["noise"].significant:
                nonsig += 1
        assert nonsig >= 19  # >= 95% of 20 replications

    def test_identical_candidates_pairwise_p_is_one(self):
        instances = synthetic_instances(6, seed=3)
        cands = candidate_rdms(RSA_PARAMS, candidates=("fa", "convex_hull"))
        report = relatedness_and_ceiling(instances, cands)
        p, sig = report.pairwise[("fa", "convex_hull")]
        assert p == 1.0 and not sig

    def test_pairwise_keys_cover_all_pairs(self):
        instances = synthetic_instances(6, seed=4)
        cands = candidate_rdms(RSA_PARAMS, candidates=("num", "fa", "tp"))
        report = relatedness_and_ceiling(instances, cands)
        assert set(report.pairwise) == {("num", "fa"), ("num", "tp"), ("fa", "tp")}


def test_rdm_csv_roundtrip(tmp_path):
    rdm = synthetic_instances(1)[0]
    path = tmp_path / "rdm.csv"
    write_rdm_csv(path, rdm)
    back = read_rdm_csv(path)
    assert back.labels == rdm.labels
    assert np.array_equal(back.values, rdm.values)
