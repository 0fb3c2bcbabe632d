import numpy as np
import pytest

from core.domain.errors import InsufficientSamplesError, LinalgError
from core.domain.models import EmbeddingSet, GaussianSummary
from core.numerics.linalg import eigh, sqrtm_psd, summarize, trace_sqrt_product
from core.numerics.moments import (
    RANK_DEFICIENT,
    fid,
    fid_result,
    frechet_distance,
    mu_fid,
    sigma_fid,
)
from core.domain.models import MomentMetricConfig
from tests.helpers import random_weights


def _random_psd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T / d + 0.05 * np.eye(d)


def test_summarize_uses_population_covariance(rng):
    data = rng.standard_normal((50, 3))
    summary = summarize(EmbeddingSet(data))
    np.testing.assert_allclose(summary.mean, data.mean(axis=0))
    np.testing.assert_allclose(summary.cov, np.cov(data, rowvar=False, bias=True), atol=1e-12)


def test_summarize_weighted(rng):
    data = rng.standard_normal((30, 2))
    weights = random_weights(rng, 30)
    summary = summarize(EmbeddingSet(data, weights))
    np.testing.assert_allclose(summary.mean, weights @ data, atol=1e-12)
    np.testing.assert_allclose(summary.cov, np.cov(data, rowvar=False, aweights=weights, bias=True),
                               atol=1e-12)


def test_summarize_needs_two_rows():
    with pytest.raises(InsufficientSamplesError):
        summarize(EmbeddingSet(np.zeros((1, 3))))


def test_eigh_descending_and_rank():
    matrix = np.diag([1.0, 4.0, 0.0])
    decomposition = eigh(matrix)
    np.testing.assert_allclose(decomposition.eigenvalues, [4.0, 1.0, 0.0])
    assert decomposition.rank == 2
    with pytest.raises(LinalgError):
        eigh(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_sqrtm_psd_squares_back(rng):
    cov = _random_psd(rng, 5)
    root = sqrtm_psd(cov)
    np.testing.assert_allclose(root @ root, cov, atol=1e-10)
    np.testing.assert_allclose(root, root.T)


def test_trace_sqrt_product_diagonal_and_symmetric(rng):
    a = np.diag([1.0, 4.0, 9.0])
    b = np.diag([4.0, 1.0, 1.0])
    assert trace_sqrt_product(a, b) == pytest.approx(2.0 + 2.0 + 3.0, abs=1e-12)

    x, y = _random_psd(rng, 6), _random_psd(rng, 6)
    assert trace_sqrt_product(x, y) == pytest.approx(trace_sqrt_product(y, x), rel=1e-9)


def test_frechet_closed_form():
    summary_a = GaussianSummary(mean=np.zeros(2), cov=np.eye(2), n_source=10)
    summary_b = GaussianSummary(mean=np.array([3.0, 4.0]), cov=4 * np.eye(2), n_source=10)
    # ‖Δμ‖² + tr(I) + tr(4I) − 2·tr(2I) = 25 + 2 + 8 − 8
    result = frechet_distance(summary_a, summary_b)
    assert result.value == pytest.approx(27.0, abs=1e-10)
    assert result.mean_term == pytest.approx(25.0)
    assert not result.flags


def test_fid_self_distance_is_zero(gaussian_pair):
    set_a, _ = gaussian_pair
    assert fid(set_a, set_a) == pytest.approx(0.0, abs=1e-9)


def test_fid_flags_rank_deficiency(rng):
    small = EmbeddingSet(rng.standard_normal((5, 8)))
    other = EmbeddingSet(rng.standard_normal((50, 8)))
    result = fid_result(small, other)
    assert RANK_DEFICIENT in result.flags
    assert np.isfinite(result.value)


def test_mu_fid_is_squared_mean_gap(gaussian_pair):
    set_a, set_b = gaussian_pair
    gap = set_a.data.mean(axis=0) - set_b.data.mean(axis=0)
    assert mu_fid(set_a, set_b) == pytest.approx(float(gap @ gap), rel=1e-12)


def test_sigma_fid_matches_fid_in_one_dimension(rng):
    set_a = EmbeddingSet(rng.normal(0.0, 1.0, (300, 1)))
    set_b = EmbeddingSet(rng.normal(1.0, 2.0, (300, 1)))
    cfg = MomentMetricConfig(metric="sigmafid", projections=7, seed=3)
    assert sigma_fid(set_a, set_b, cfg) == pytest.approx(fid(set_a, set_b), rel=1e-9)


def test_fid_on_large_gaussian_samples_matches_closed_form():
    rng = np.random.default_rng(5)
    set_a = EmbeddingSet(rng.standard_normal((50000, 8)))
    set_b = EmbeddingSet(rng.standard_normal((50000, 8)) + 1.0)
    assert fid(set_a, set_b) == pytest.approx(8.0, rel=0.05)

    lambda_a = np.array([1.0, 2.0, 0.5, 3.0])
    lambda_b = np.array([2.0, 1.0, 1.0, 0.5])
    shift = np.full(4, 2.0)
    set_a = EmbeddingSet(rng.standard_normal((100000, 4)) * np.sqrt(lambda_a))
    set_b = EmbeddingSet(rng.standard_normal((100000, 4)) * np.sqrt(lambda_b) + shift)
    expected = float(shift @ shift) + float(np.sum((np.sqrt(lambda_a) - np.sqrt(lambda_b)) ** 2))
    assert fid(set_a, set_b) == pytest.approx(expected, rel=1e-2)
