import math

import numpy as np
import pytest

from resdiff.corpus import generate_corpus
from resdiff.residuals import (
    DEFAULT_COVERAGE,
    TAU_MIN,
    ResidualHistogram,
    ThresholdTable,
    clip_prediction,
    collect_residual_samples,
    compute_residual,
    fit_threshold_table,
    symmetric_quantile_threshold,
)


class TestComputeResidual:
    def test_identical_inputs(self):
        x = np.ones((3, 4, 4))
        assert np.all(compute_residual(x, x) == 0)

    def test_zero_reconstruction(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 4, 4))
        assert np.array_equal(compute_residual(x, np.zeros_like(x)), x)

    def test_additive_inverse(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((3, 4, 4))
        xt = rng.standard_normal((3, 4, 4))
        r0 = compute_residual(x, xt)
        assert np.allclose(xt + r0, x, rtol=0, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compute_residual(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


class TestQuantileThreshold:
    def test_uniform_residuals(self):
        # dense symmetric grid on [-1, 1]: the 0.95 quantile of |r| is 0.95
        vals = np.linspace(-1.0, 1.0, 100_001)
        tau = symmetric_quantile_threshold(vals, 0.95)
        assert tau == pytest.approx(0.95, abs=1e-4)

    def test_smallest_covering_value(self):
        vals = np.array([-0.5, -0.1, 0.2, 0.4, 0.9])
        # coverage 0.6 -> third smallest magnitude
        assert symmetric_quantile_threshold(vals, 0.6) == pytest.approx(0.4)

    def test_coverage_holds_on_sample(self):
        rng = np.random.default_rng(2)
        vals = rng.standard_normal(50_000) * 0.1
        tau = symmetric_quantile_threshold(vals, DEFAULT_COVERAGE)
        frac = np.mean(np.abs(vals) <= tau)
        n = vals.size
        assert DEFAULT_COVERAGE <= frac <= DEFAULT_COVERAGE + 2.0 / math.sqrt(n)


class TestFitThresholdTable:
    def test_all_zero_residuals_clamped_to_floor(self):
        table = fit_threshold_table(
            {0.001: np.zeros(20_000), 0.002: np.zeros(20_000)}
        )
        assert np.all(table.taus == TAU_MIN)

    def test_insufficient_samples_names_lambda(self):
        with pytest.raises(ValueError, match="0.004"):
            fit_threshold_table({0.004: np.zeros(10)})

    def test_isotonic_correction_flagged(self):
        rng = np.random.default_rng(3)
        samples = {
            0.001: rng.uniform(-0.2, 0.2, 20_000),
            0.002: rng.uniform(-0.5, 0.5, 20_000),  # violates monotonicity
            0.004: rng.uniform(-0.1, 0.1, 20_000),
        }
        table = fit_threshold_table(samples)
        assert table.corrected
        assert np.all(np.diff(table.taus) <= 0)

    def test_corpus_fit_matches_rate_ordering(self, corpus_samples):
        table = fit_threshold_table(corpus_samples)
        lam_min, lam_max = table.lambdas[0], table.lambdas[-1]
        assert table.lookup(lam_max) < table.lookup(lam_min)
        assert np.all(np.diff(table.taus) <= 0)

    def test_corpus_fit_coverage(self, corpus_samples):
        table = fit_threshold_table(corpus_samples)
        for lam, tau in zip(table.lambdas, table.taus):
            vals = corpus_samples[float(lam)]
            frac = np.mean(np.abs(vals) <= tau)
            assert DEFAULT_COVERAGE <= frac <= DEFAULT_COVERAGE + 2 / math.sqrt(vals.size)


@pytest.fixture(scope="module")
def corpus_samples():
    images = generate_corpus(count=8)
    grid = np.geomspace(0.0004, 0.016, 5)
    return collect_residual_samples(images, grid)


class TestClipPrediction:
    def test_identity_inside_range(self):
        table = ThresholdTable(np.array([0.001]), np.array([0.25]))
        r = np.array([[0.1, -0.2], [0.24, 0.0]])
        out = clip_prediction(r, 0.001, table)
        assert np.array_equal(out, r)

    def test_clamps_outside(self):
        table = ThresholdTable(np.array([0.001]), np.array([0.1]))
        r = 2.0 * np.ones((3, 2, 2))
        assert np.all(clip_prediction(r, 0.001, table) == 0.1)

    def test_no_table_uses_unit_range(self):
        r = np.array([-3.0, 0.5, 3.0])
        assert np.array_equal(clip_prediction(r), [-1.0, 0.5, 1.0])

    def test_nearest_lookup_tie_toward_smaller(self):
        table = ThresholdTable(np.array([0.001, 0.003]), np.array([0.4, 0.2]))
        assert table.lookup(0.0019) == 0.4
        assert table.lookup(0.0021) == 0.2
        assert table.lookup(0.002) == 0.4  # exact midpoint
        # nearest beyond the ends
        assert table.lookup(1e-6) == 0.4
        assert table.lookup(1.0) == 0.2

    def test_idempotent_bitwise(self):
        rng = np.random.default_rng(4)
        table = ThresholdTable(np.array([0.001]), np.array([0.31]))
        r = rng.standard_normal((3, 6, 6))
        once = clip_prediction(r, 0.001, table)
        twice = clip_prediction(once, 0.001, table)
        assert np.array_equal(once, twice)

    def test_requires_lambda_with_table(self):
        table = ThresholdTable(np.array([0.001]), np.array([0.3]))
        with pytest.raises(ValueError):
            clip_prediction(np.zeros(3), None, table)


class TestTableFile:
    def test_round_trip(self, tmp_path):
        table = ThresholdTable(
            np.array([0.0004, 0.0011, 0.016]),
            np.array([0.31, 0.22, 0.0801]),
            coverage=0.95,
        )
        path = tmp_path / "thresholds.txt"
        table.save(path)
        again = ThresholdTable.load(path)
        assert np.array_equal(again.lambdas, table.lambdas)
        assert np.array_equal(again.taus, table.taus)
        assert again.coverage == table.coverage
        # a second save produces identical bytes
        path2 = tmp_path / "thresholds2.txt"
        again.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_header_records_coverage(self, tmp_path):
        table = ThresholdTable(np.array([0.001]), np.array([0.5]), coverage=0.9)
        path = tmp_path / "t.txt"
        table.save(path)
        assert path.read_text().startswith("# coverage 0.9")

    def test_validation(self):
        with pytest.raises(ValueError):
            ThresholdTable(np.array([0.002, 0.001]), np.array([0.3, 0.2]))
        with pytest.raises(ValueError):
            ThresholdTable(np.array([0.001, 0.002]), np.array([0.2, 0.3]))
        with pytest.raises(ValueError):
            ThresholdTable(np.array([0.001]), np.array([1.5]))


class TestResidualHistogram:
    def test_counts_sum_to_samples(self):
        rng = np.random.default_rng(5)
        res = rng.standard_normal((3, 16, 16)) * 0.2
        hist = ResidualHistogram.from_residuals(res)
        assert np.all(hist.counts.sum(axis=1) == 16 * 16)

    def test_kurtosis_finite(self):
        rng = np.random.default_rng(6)
        res = rng.standard_normal((3, 32, 32)) * 0.1
        hist = ResidualHistogram.from_residuals(res)
        assert np.all(np.isfinite(hist.excess_kurtosis))
