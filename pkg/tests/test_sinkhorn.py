import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from core.domain.errors import InvalidParameterError
from core.domain.models import EmbeddingSet, SinkhornConfig
from core.metrics.base import MetricContext
from core.metrics.ot_metrics import NON_CONVERGED, SPLIT_DISABLED, SinkhornMetric
from core.numerics.moments import mu_fid
from core.numerics.transport import annealing_schedule, sinkhorn_cost, sinkhorn_divergence
from tests.helpers import random_weights


def _exact_ot(set_a, set_b):
    cost = cdist(set_a.data, set_b.data, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def test_small_epsilon_approaches_exact_transport(rng):
    set_a = EmbeddingSet(rng.standard_normal((6, 2)))
    set_b = EmbeddingSet(rng.standard_normal((6, 2)) + 5.0)
    result = sinkhorn_cost(set_a, set_b, SinkhornConfig(epsilon_scale=0.01, max_iter=5000))
    assert result.cost == pytest.approx(_exact_ot(set_a, set_b), rel=0.05)


def test_plan_respects_marginals(rng):
    set_a = EmbeddingSet(rng.standard_normal((20, 3)), random_weights(rng, 20))
    set_b = EmbeddingSet(rng.standard_normal((15, 3)))
    result = sinkhorn_cost(set_a, set_b, SinkhornConfig(epsilon_scale=0.5, tol=1e-9, max_iter=5000))
    assert result.converged
    assert result.marginal_error <= 1e-9


def test_identical_inputs_give_zero_without_split(gaussian_pair):
    set_a, _ = gaussian_pair
    result = sinkhorn_divergence(set_a, set_a, SinkhornConfig(split_correction=False))
    assert result.value == pytest.approx(0.0, abs=1e-10)


def test_coincident_points_cost_nothing():
    points = EmbeddingSet(np.ones((4, 2)))
    result = sinkhorn_cost(points, points, SinkhornConfig())
    assert result.cost == 0.0
    assert result.converged


def test_large_epsilon_limit_is_mean_gap(rng):
    """ε 趋于无穷时计划趋于独立耦合，散度退化为均值差的平方"""
    set_a = EmbeddingSet(rng.standard_normal((40, 2)))
    set_b = EmbeddingSet(rng.standard_normal((40, 2)) + 3.0)
    cfg = SinkhornConfig(epsilon=1e6, split_correction=False)
    result = sinkhorn_divergence(set_a, set_b, cfg)
    assert result.value == pytest.approx(mu_fid(set_a, set_b), rel=1e-2)


def test_divergence_is_symmetric_without_split(gaussian_pair):
    set_a, set_b = gaussian_pair
    cfg = SinkhornConfig(epsilon=5.0, split_correction=False, tol=1e-8, max_iter=5000)
    forward = sinkhorn_divergence(set_a, set_b, cfg).value
    backward = sinkhorn_divergence(set_b, set_a, cfg).value
    assert forward == pytest.approx(backward, rel=1e-6)


def test_split_correction_needs_even_counts(rng):
    odd = EmbeddingSet(rng.standard_normal((9, 2)))
    with pytest.raises(InvalidParameterError):
        sinkhorn_divergence(odd, odd, SinkhornConfig(split_correction=True))


def test_split_correction_uses_shared_epsilon(gaussian_pair):
    set_a, set_b = gaussian_pair
    result = sinkhorn_divergence(set_a, set_b, SinkhornConfig(split_correction=True, seed=3))
    assert result.split_correction
    assert len({term.epsilon for term in result.terms}) == 1
    assert result.value > 0.0


def test_metric_flags_weighted_and_non_converged(rng):
    weighted = EmbeddingSet(rng.standard_normal((10, 2)), random_weights(rng, 10))
    plain = EmbeddingSet(rng.standard_normal((10, 2)) + 1.0)
    context = MetricContext(seed=0, threads=1, settings={"split_correction": True, "max_iter": 1})
    result = SinkhornMetric().compute(weighted, plain, context)
    assert SPLIT_DISABLED in result.flags
    assert NON_CONVERGED in result.flags
    assert result.details["split_correction"] is False
    assert np.isfinite(result.value)


# ---------------------------------
# ε 退火与小 ε 下的精确性
# ---------------------------------

def test_annealing_schedule_halves_down_to_target():
    cost_matrix = np.array([[0.0, 8.0], [3.0, 1.0]])
    schedule = annealing_schedule(cost_matrix, 0.3)
    assert schedule == [4.0, 2.0, 1.0, 0.5, 0.3]
    assert all(a > b for a, b in zip(schedule, schedule[1:]))
    assert annealing_schedule(cost_matrix, 5.0) == [5.0]
    assert annealing_schedule(cost_matrix, 4.0) == [4.0]


def test_tiny_epsilon_matches_exact_transport_and_converges():
    cfg = SinkhornConfig(epsilon_scale=1e-3, split_correction=False)
    for trial in range(50):
        rng = np.random.default_rng(trial)
        set_a = EmbeddingSet(rng.standard_normal((5, 3)))
        set_b = EmbeddingSet(rng.standard_normal((5, 3)) + rng.uniform(-1.0, 1.0, 3))
        result = sinkhorn_cost(set_a, set_b, cfg)
        assert result.converged, f"trial {trial}: marginal error {result.marginal_error:.3e}"
        assert result.cost == pytest.approx(_exact_ot(set_a, set_b), rel=0.02)
        same = sinkhorn_divergence(set_a, set_a, cfg)
        assert abs(same.value) <= cfg.tol


def test_without_annealing_uses_a_single_level(rng):
    set_a = EmbeddingSet(rng.standard_normal((8, 2)))
    set_b = EmbeddingSet(rng.standard_normal((8, 2)) + 1.0)
    annealed = sinkhorn_cost(set_a, set_b, SinkhornConfig(epsilon=0.5, max_iter=5000))
    direct = sinkhorn_cost(set_a, set_b, SinkhornConfig(epsilon=0.5, max_iter=5000, annealing=False))
    assert annealed.converged and direct.converged
    assert annealed.cost == pytest.approx(direct.cost, rel=1e-4)


def test_split_halves_reduce_bias_on_identical_distributions():
    # A 与 B 同分布，总体散度为 0；对半修正的三项同分布，期望恰为 0
    split_values, same_sample_values = [], []
    for seed in range(3):
        rng = np.random.default_rng(100 + seed)
        set_a = EmbeddingSet(rng.standard_normal((400, 8)))
        set_b = EmbeddingSet(rng.standard_normal((400, 8)))
        split_values.append(sinkhorn_divergence(set_a, set_b, SinkhornConfig(split_correction=True, seed=seed)).value)
        same_sample_values.append(sinkhorn_divergence(set_a, set_b, SinkhornConfig(split_correction=False)).value)
    assert abs(np.mean(split_values)) < abs(np.mean(same_sample_values))
