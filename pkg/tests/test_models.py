import math

import numpy as np
import pytest

from core.domain.errors import (
    DimensionMismatchError,
    EmbeddingFormatError,
    InvalidParameterError,
    MetricComputationError,
    NegativeWeightError,
    NonFiniteValueError,
    WeightSumError,
)
from core.domain.models import (
    BenchRecord,
    EmbeddingSet,
    ErrorProbability,
    MindConfig,
    MmdConfig,
    SinkhornConfig,
    TrialPlan,
)
from core.utils import derive_seed, make_rng, round_half_up, wilson_interval


def test_embedding_set_is_read_only_copy():
    source = np.arange(6, dtype=np.float64).reshape(3, 2)
    embeddings = EmbeddingSet(source)
    source[0, 0] = 100.0
    assert embeddings.data[0, 0] == 0.0
    with pytest.raises(ValueError):
        embeddings.data[0, 0] = 1.0
    assert (embeddings.n, embeddings.d) == (3, 2)
    np.testing.assert_array_equal(embeddings.effective_weights(), np.full(3, 1 / 3))


def test_embedding_set_rejects_bad_values():
    data = np.zeros((4, 2))
    data[2, 1] = np.nan
    with pytest.raises(NonFiniteValueError) as info:
        EmbeddingSet(data)
    assert info.value.row == 2

    with pytest.raises(NegativeWeightError) as info:
        EmbeddingSet(np.zeros((3, 2)), np.array([0.5, 0.7, -0.2]))
    assert info.value.row == 2

    with pytest.raises(WeightSumError):
        EmbeddingSet(np.zeros((2, 2)), np.array([0.5, 0.6]))

    with pytest.raises(DimensionMismatchError):
        EmbeddingSet(np.zeros(5))

    # 所有格式错误都属于 EmbeddingFormatError
    assert issubclass(WeightSumError, EmbeddingFormatError)


def test_support_size_ignores_zero_weights():
    embeddings = EmbeddingSet(np.zeros((4, 1)), np.array([0.5, 0.0, 0.5, 0.0]))
    assert embeddings.is_weighted
    assert embeddings.support_size() == 2
    assert embeddings.nbytes == 4 * 8 + 4 * 8


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        MindConfig(projections=0)
    with pytest.raises(InvalidParameterError):
        MindConfig(alpha=-1.0)
    assert MindConfig().resolve_alpha(64) == 192.0
    assert MindConfig(alpha=2.5).resolve_alpha(64) == 2.5
    with pytest.raises(InvalidParameterError):
        SinkhornConfig(epsilon=0.0)
    with pytest.raises(InvalidParameterError):
        MmdConfig(estimator="w")
    with pytest.raises(InvalidParameterError):
        TrialPlan(n=0)


def test_bench_record_needs_three_reps():
    with pytest.raises(InvalidParameterError):
        BenchRecord(metric="fid", n=10, d=2, param="", reps=2, threads=1,
                    t_median_s=0.1, t_min_s=0.1, t_max_s=0.1, peak_bytes=0)


def test_error_probability_dict():
    result = ErrorProbability(estimate=0.25, trials=4, failures=1, wilson_ci=(0.05, 0.7),
                              trial_values=[[1.0, 2.0]])
    assert "trial_values" not in result.to_dict()
    assert result.to_dict(include_trials=True)["trial_values"] == [[1.0, 2.0]]


def test_metric_computation_error_message():
    error = MetricComputationError("mmd", ValueError("boom"), cell={"n": 10})
    assert error.metric == "mmd"
    assert "mmd" in str(error) and "boom" in str(error)


def test_derive_seed_is_stable_and_separates_roles():
    assert derive_seed(7, 3, "data") == derive_seed(7, 3, "data")
    assert derive_seed(7, 3, "data") != derive_seed(7, 3, "model")
    assert derive_seed(7, 3, "data") != derive_seed(8, 3, "data")
    np.testing.assert_array_equal(make_rng(5, "x").random(4), make_rng(5, "x").random(4))


def test_round_half_up():
    assert round_half_up(0.5) == 1
    assert round_half_up(2.5) == 3
    assert round_half_up(2.4999) == 2
    assert round_half_up(0.0) == 0


def test_wilson_interval_at_zero_keeps_width():
    lo, hi = wilson_interval(0, 512)
    assert lo == 0.0
    assert 0.006 < hi < 0.009

    lo, hi = wilson_interval(256, 512)
    assert lo < 0.5 < hi
    assert math.isclose((lo + hi) / 2, 0.5, abs_tol=1e-12)
