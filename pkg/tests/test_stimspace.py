import math

import numpy as np
import pytest

from numsense.stimspace import (FEATURES, LOG_COEFFICIENTS, FeatureVector,
                                LogPoint, StimulusParams, build_grid,
                                derive_features, feature_axis, integer_levels,
                                log_even_levels, log_feature_value)


def random_params(rng):
    n = int(rng.integers(1, 64))
    size = float(np.exp2(rng.uniform(10, 22)))
    spacing = size * float(np.exp2(rng.uniform(0, 10)))
    return StimulusParams(n, size, spacing)


class TestStimulusParams:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            StimulusParams(0, 1e5, 1e6)
        with pytest.raises(ValueError):
            StimulusParams(5, -1.0, 1e6)
        with pytest.raises(ValueError):
            StimulusParams(5, 1e5, 0.0)

    def test_rejects_spacing_below_size(self):
        with pytest.raises(ValueError):
            StimulusParams(5, 1e6, 1e5)

    def test_log_roundtrip(self):
        p = StimulusParams(18, 6.55e5, 2.02e7)
        q = LogPoint.from_params(p).to_params()
        assert q.n == p.n
        assert q.size == pytest.approx(p.size, rel=1e-12)
        assert q.spacing == pytest.approx(p.spacing, rel=1e-12)


class TestDeriveFeatures:
    def test_reference_point(self):
        f = derive_features(StimulusParams(18, 6.55e5, 2.02e7))
        assert f.tsa == pytest.approx(3433.6569, rel=1e-4)
        assert f.isa == pytest.approx(190.7587, rel=1e-4)
        assert f.fa == pytest.approx(19068.298, rel=1e-4)
        assert f.spar == pytest.approx(1059.3499, rel=1e-4)
        assert f.cov == pytest.approx(0.18007149, rel=1e-4)
        assert f.tp == pytest.approx(881.2916, rel=1e-4)

    def test_single_dot_collapses_totals(self):
        f = derive_features(StimulusParams(1, 4.0, 4.0))
        assert f.tsa == f.isa == 2.0
        assert f.fa == f.spar == 2.0
        assert f.cov == 1.0

    def test_total_item_consistency(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p = random_params(rng)
            f = derive_features(p)
            assert f.tsa == pytest.approx(f.isa * p.n, rel=1e-9)
            assert f.fa == pytest.approx(f.spar * p.n, rel=1e-9)
            assert f.tp == pytest.approx(f.ip * p.n, rel=1e-9)

    def test_recombination_recovers_n(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            p = random_params(rng)
            f = derive_features(p)
            assert f.tsa / f.isa == pytest.approx(p.n, rel=1e-9)
            assert f.fa / f.spar == pytest.approx(p.n, rel=1e-9)


class TestFeatureAxes:
    def test_num_axis(self):
        assert feature_axis("num").direction == (1.0, 0.0, 0.0)

    def test_tsa_axis(self):
        d = feature_axis("tsa").as_array()
        assert d == pytest.approx(np.array([1, 1, 0]) / math.sqrt(2))

    def test_tp_axis(self):
        d = feature_axis("tp").as_array()
        assert d == pytest.approx(np.array([3, 1, 0]) / math.sqrt(10))

    def test_all_axes_unit_length(self):
        for f in FEATURES:
            assert np.linalg.norm(feature_axis(f).as_array()) == pytest.approx(1.0, abs=1e-12)

    def test_isa_ip_coincide(self):
        assert feature_axis("isa").as_array() == pytest.approx(
            feature_axis("ip").as_array())

    def test_orthogonal_dimensions(self):
        num = feature_axis("num").as_array()
        size = feature_axis("size").as_array()
        spacing = feature_axis("spacing").as_array()
        assert num @ size == 0.0
        assert num @ spacing == 0.0
        assert size @ spacing == 0.0

    def test_unknown_feature(self):
        with pytest.raises(ValueError):
            feature_axis("density")

    def test_log_linearity(self):
        # log2 feature differences equal coefficient dot log-coordinate deltas
        rng = np.random.default_rng(2)
        for _ in range(500):
            p, q = random_params(rng), random_params(rng)
            dx = LogPoint.from_params(p).as_array() - LogPoint.from_params(q).as_array()
            for f in FEATURES:
                expected = np.array(LOG_COEFFICIENTS[f]) @ dx
                actual = log_feature_value(f, p) - log_feature_value(f, q)
                assert actual == pytest.approx(expected, rel=1e-9, abs=1e-9)


class TestGrid:
    def test_thirteen_level_ladder(self):
        assert integer_levels(7, 28, 13) == [7, 8, 9, 10, 11, 12, 14, 16, 18, 20, 22, 25, 28]

    def test_two_levels_are_endpoints(self):
        assert integer_levels(7, 28, 2) == [7, 28]

    def test_fullscale_grid_size(self):
        grid = build_grid((7, 28), (2.6e5, 10.4e5), (0.8e7, 3.2e7), 13)
        assert len(grid) == 13 ** 3 == 2197
        # 10 instances per point reproduces the 21970-image dataset
        assert len(grid) * 10 == 21970

    def test_collision_detection(self):
        with pytest.raises(ValueError, match="collide"):
            integer_levels(18, 28, 13)

    def test_levels_log_even(self):
        levels = log_even_levels(2.6e5, 10.4e5, 13)
        steps = np.diff(np.log2(levels))
        assert steps == pytest.approx(np.full(12, steps[0]))

    def test_invalid_ranges(self):
        with pytest.raises(ValueError):
            log_even_levels(10, 5, 3)
        with pytest.raises(ValueError):
            log_even_levels(5, 10, 1)


def test_feature_vector_value_accessor():
    f = FeatureVector(tsa=1, isa=2, fa=3, spar=4, tp=5, ip=6, cov=7, ac=8)
    assert f.value("cov") == 7
