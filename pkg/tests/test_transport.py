import itertools

import numpy as np
import pytest

from core.domain.errors import DimensionMismatchError, InvalidParameterError, NegativeWeightError
from core.domain.models import EmbeddingSet, MindConfig
from core.numerics.transport import (
    mind,
    projected_w2,
    sample_directions,
    sliced_w2,
    w2_1d,
    w2_1d_weighted,
)
from tests.helpers import random_weights


def _brute_force_w2(x, y):
    """枚举所有匹配，取平均平方差的最小值"""
    return min(np.mean((np.asarray(x) - np.asarray(y)[list(p)]) ** 2)
               for p in itertools.permutations(range(len(y))))


def test_w2_1d_small_examples():
    assert w2_1d([0.0, 1.0], [1.0, 2.0]) == 1.0
    assert w2_1d([3.0, -1.0, 2.0], [2.0, 3.0, -1.0]) == 0.0
    with pytest.raises(DimensionMismatchError):
        w2_1d([0.0, 1.0], [1.0])


def test_w2_1d_matches_brute_force(rng):
    for _ in range(5):
        x = rng.standard_normal(6)
        y = rng.standard_normal(6) * 2 + 0.3
        assert w2_1d(x, y) == pytest.approx(_brute_force_w2(x, y), rel=1e-12)


def test_weighted_w2_agrees_with_uniform(rng):
    x = rng.standard_normal(8)
    y = rng.standard_normal(8) + 1.0
    uniform = np.full(8, 1 / 8)
    assert w2_1d_weighted(x, uniform, y, uniform) == pytest.approx(w2_1d(x, y), rel=1e-12)


def test_weighted_w2_point_masses():
    # 一个原子全部质量搬到两个原子上：0.5·0² + 0.5·2²
    assert w2_1d_weighted([0.0], [1.0], [0.0, 2.0], [0.5, 0.5]) == pytest.approx(2.0)
    # 不等长、不等权重
    value = w2_1d_weighted([0.0, 1.0], [0.25, 0.75], [1.0], [1.0])
    assert value == pytest.approx(0.25)
    with pytest.raises(NegativeWeightError):
        w2_1d_weighted([0.0, 1.0], [1.5, -0.5], [0.0], [1.0])


def test_directions_are_unit_deterministic_and_prefix_stable():
    first = sample_directions(300, 7, seed=11).directions
    np.testing.assert_allclose(np.linalg.norm(first, axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(first, sample_directions(300, 7, seed=11).directions)
    np.testing.assert_array_equal(first[:100], sample_directions(100, 7, seed=11).directions)
    assert not np.array_equal(first, sample_directions(300, 7, seed=12).directions)
    with pytest.raises(InvalidParameterError):
        sample_directions(0, 7, seed=1)


def test_sliced_w2_in_one_dimension_equals_exact(rng):
    set_a = EmbeddingSet(rng.standard_normal((40, 1)))
    set_b = EmbeddingSet(rng.standard_normal((40, 1)) * 3)
    proj = sample_directions(5, 1, seed=0)
    assert sliced_w2(set_a, set_b, proj) == pytest.approx(w2_1d(set_a.data, set_b.data), rel=1e-12)


def test_mind_of_translation_is_projected_shift(rng):
    data = rng.standard_normal((100, 5))
    shift = np.array([1.0, -2.0, 0.5, 0.0, 3.0])
    cfg = MindConfig(projections=64, seed=4)
    directions = sample_directions(64, 5, seed=4).directions
    expected = 15.0 * np.mean((directions @ shift) ** 2)
    value = mind(EmbeddingSet(data), EmbeddingSet(data + shift), cfg)
    assert value == pytest.approx(expected, rel=1e-9)


def test_mind_identity_and_symmetry(gaussian_pair):
    set_a, set_b = gaussian_pair
    cfg = MindConfig(projections=200, seed=1)
    assert mind(set_a, set_a, cfg) == 0.0
    assert mind(set_a, set_b, cfg) == pytest.approx(mind(set_b, set_a, cfg), rel=1e-12)
    assert mind(set_a, set_b, cfg) > 0.0


def test_mind_does_not_depend_on_threads(gaussian_pair):
    set_a, set_b = gaussian_pair
    serial = mind(set_a, set_b, MindConfig(projections=100, seed=2, block_size=16, threads=1))
    parallel = mind(set_a, set_b, MindConfig(projections=100, seed=2, block_size=16, threads=4))
    assert serial == parallel


def test_projected_w2_weighted_path(rng):
    data_a = rng.standard_normal((30, 3))
    data_b = rng.standard_normal((30, 3)) + 0.2
    proj = sample_directions(20, 3, seed=5)
    uniform = np.full(30, 1 / 30)
    plain = projected_w2(EmbeddingSet(data_a), EmbeddingSet(data_b), proj)
    weighted = projected_w2(EmbeddingSet(data_a, uniform), EmbeddingSet(data_b), proj)
    np.testing.assert_allclose(weighted, plain, rtol=1e-10)

    # 加权时允许样本数不同
    other = EmbeddingSet(rng.standard_normal((12, 3)), random_weights(rng, 12))
    assert projected_w2(EmbeddingSet(data_a), other, proj).shape == (20,)


def test_unequal_unweighted_sizes_rejected(rng):
    proj = sample_directions(4, 2, seed=0)
    with pytest.raises(DimensionMismatchError):
        projected_w2(EmbeddingSet(rng.standard_normal((10, 2))), EmbeddingSet(rng.standard_normal((11, 2))), proj)


def test_directions_are_fresh_arrays_per_call():
    first = sample_directions(64, 5, seed=2).directions
    second = sample_directions(64, 5, seed=2).directions
    assert first is not second
    assert not np.shares_memory(first, second)
    np.testing.assert_array_equal(first, second)


@pytest.mark.slow
def test_mind_recovers_scaled_mean_gap_on_isotropic_gaussians():
    # α = 3d 时总体值为 3‖Δμ‖²，这里 ‖Δμ‖² = 64 · 0.25² = 4
    d, n = 64, 20000
    shift = 0.25 * np.ones(d)
    values = []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        set_a = EmbeddingSet(rng.standard_normal((n, d)))
        set_b = EmbeddingSet(rng.standard_normal((n, d)) + shift)
        values.append(mind(set_a, set_b, MindConfig(projections=2000, seed=seed, threads=4)))
    expected = 3.0 * float(shift @ shift)
    assert np.mean(values) == pytest.approx(expected, rel=0.05)
    for value in values:
        assert value == pytest.approx(expected, rel=0.10)
