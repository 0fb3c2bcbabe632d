import copy
import zlib

import numpy as np
import pytest

from core.domain.errors import InsufficientSamplesError, InvalidParameterError
from core.domain.models import EmbeddingSet, TrialPlan
from core.perturbations.embedding_perturbations import GaussianNoisePerturbation, MixturePerturbation
from core.services.harness_service import ExperimentInputs, HarnessService
from core.services.metric_service import MetricService
from core.services.synthetic_data_service import SyntheticDataService
from core.utils import make_rng


@pytest.fixture
def harness_service(metric_service, metric_config):
    return HarnessService(metric_service, metric_config)


def _pool(n, d, offset, seed):
    return SyntheticDataService().gaussian_pool(n, d, seed=seed, mean=offset)


def first_coordinate_gap(set_a, set_b, seed):
    return abs(float(set_a.data[:, 0].mean() - set_b.data[:, 0].mean()))


def mean_gap(set_a, set_b, seed):
    delta = set_a.data.mean(axis=0) - set_b.data.mean(axis=0)
    return float(delta @ delta)


def constant(set_a, set_b, seed):
    return 1.0


def seeded_random(set_a, set_b, seed):
    # 取值同时依赖种子与输入 B
    key = zlib.crc32(set_b.data.tobytes())
    return float(make_rng(seed, key).random())


def norm_growth(set_a, set_b, seed):
    return float((set_b.data ** 2).sum(axis=1).mean() - (set_a.data ** 2).sum(axis=1).mean())


def negated_norm_growth(set_a, set_b, seed):
    return -norm_growth(set_a, set_b, seed)


# ---------------------------------
# 判别检验
# ---------------------------------

def test_discrimination_oracle_never_fails(harness_service):
    data_pool = EmbeddingSet(np.zeros((100, 2)))
    model_pool = EmbeddingSet(np.ones((50, 2)))
    result = harness_service.discrimination_test(data_pool, model_pool, first_coordinate_gap,
                                                 TrialPlan(n=10, trials=64, seed=1))
    assert result.estimate == 0.0
    assert result.failures == 0
    lo, hi = result.wilson_ci
    assert lo == 0.0 < hi
    assert all(values == [0.0, 1.0] for values in result.trial_values)


def test_zero_variance_metric_always_fails(harness_service):
    pool = _pool(100, 2, 0.0, seed=0)
    result = harness_service.discrimination_test(pool, pool, constant, TrialPlan(n=10, trials=32, seed=1))
    assert result.estimate == 1.0


def test_random_metric_is_near_half(harness_service):
    pool = _pool(200, 2, 0.0, seed=0)
    result = harness_service.discrimination_test(pool, pool, seeded_random, TrialPlan(n=20, trials=512, seed=2))
    assert 0.4 < result.estimate < 0.6
    assert result.wilson_ci[0] <= result.estimate <= result.wilson_ci[1]


def test_discrimination_needs_two_disjoint_subsamples(harness_service):
    pool = _pool(30, 2, 0.0, seed=0)
    with pytest.raises(InsufficientSamplesError):
        harness_service.discrimination_test(pool, pool, mean_gap, TrialPlan(n=20, trials=4))


def test_results_are_deterministic_and_thread_independent(harness_service):
    data_pool = _pool(400, 3, 0.0, seed=0)
    model_pool = _pool(400, 3, 0.2, seed=1)
    serial = harness_service.discrimination_test(data_pool, model_pool, mean_gap,
                                                 TrialPlan(n=30, trials=40, seed=5, threads=1))
    again = harness_service.discrimination_test(data_pool, model_pool, mean_gap,
                                                TrialPlan(n=30, trials=40, seed=5, threads=1))
    parallel = harness_service.discrimination_test(data_pool, model_pool, mean_gap,
                                                   TrialPlan(n=30, trials=40, seed=5, threads=4))
    assert serial == again
    assert serial == parallel


def test_registered_metric_by_name(harness_service):
    data_pool = _pool(200, 3, 0.0, seed=0)
    model_pool = _pool(100, 3, 3.0, seed=1)
    result = harness_service.discrimination_test(data_pool, model_pool, "mufid", TrialPlan(n=50, trials=16, seed=0))
    assert result.estimate == 0.0


# ---------------------------------
# 单调性检验
# ---------------------------------

def test_monotonicity_oracle(harness_service):
    data_pool = EmbeddingSet(np.zeros((40, 2)))
    pools = [EmbeddingSet(np.full((40, 2), offset)) for offset in (3.0, 2.0, 1.0)]
    result = harness_service.monotonicity_test(data_pool, pools, first_coordinate_gap,
                                               TrialPlan(n=10, trials=16, seed=0))
    assert result.estimate == 0.0
    # 顺序颠倒则每次都失败
    reversed_result = harness_service.monotonicity_test(data_pool, pools[::-1], first_coordinate_gap,
                                                        TrialPlan(n=10, trials=16, seed=0))
    assert reversed_result.estimate == 1.0


def test_identical_pools_order_by_chance(harness_service):
    data_pool = _pool(2000, 2, 0.0, seed=0)
    model_pool = _pool(2000, 2, 0.0, seed=1)
    result = harness_service.monotonicity_test(data_pool, [model_pool, model_pool], mean_gap,
                                               TrialPlan(n=50, trials=512, seed=3))
    assert 0.4 < result.estimate < 0.6


def test_monotonicity_needs_two_pools(harness_service):
    pool = _pool(20, 2, 0.0, seed=0)
    with pytest.raises(InvalidParameterError):
        harness_service.monotonicity_test(pool, [pool], mean_gap, TrialPlan(n=5, trials=2))


# ---------------------------------
# 扰动排序检验
# ---------------------------------

def test_single_level_is_always_ordered(harness_service):
    pool = _pool(100, 2, 0.0, seed=0)
    perturbation = GaussianNoisePerturbation.from_pool(pool)
    result = harness_service.perturbation_test(pool, perturbation, [0.1], mean_gap, TrialPlan(n=20, trials=8))
    assert result.estimate == 0.0


def test_mixture_with_disjoint_contaminant(harness_service):
    pool = _pool(2000, 4, 0.0, seed=0)
    contaminant = _pool(300, 4, 10.0, seed=1)
    result = harness_service.perturbation_test(pool, MixturePerturbation(contaminant),
                                               [0.01, 0.03, 0.05, 0.07, 0.10], "mufid",
                                               TrialPlan(n=1000, trials=32, seed=2))
    assert result.estimate == 0.0


def test_noise_ordering_and_inverted_metric(harness_service):
    pool = _pool(400, 4, 0.0, seed=0)
    perturbation = GaussianNoisePerturbation.from_pool(pool)
    grid = [0.5, 1.0, 2.0]
    plan = TrialPlan(n=100, trials=32, seed=4)
    assert harness_service.perturbation_test(pool, perturbation, grid, norm_growth, plan).estimate == 0.0
    assert harness_service.perturbation_test(pool, perturbation, grid, negated_norm_growth, plan).estimate == 1.0


def test_perturbation_grid_validation(harness_service):
    pool = _pool(100, 2, 0.0, seed=0)
    perturbation = GaussianNoisePerturbation.from_pool(pool)
    for grid in ([], [0.1, 0.1], [0.2, 0.1], [-0.1, 0.2]):
        with pytest.raises(InvalidParameterError):
            harness_service.perturbation_test(pool, perturbation, grid, mean_gap, TrialPlan(n=10, trials=2))


# ---------------------------------
# 样本量扫描
# ---------------------------------

def test_sample_size_sweep_table(harness_service):
    inputs = ExperimentInputs(data_pool=_pool(400, 2, 0.0, seed=0), model_pools=[_pool(200, 2, 1.0, seed=1)])
    table = harness_service.sample_size_sweep("discrimination", [10, 50, 100], ["mufid", mean_gap], inputs,
                                              trials=16, seed=7)
    assert len(table) == 6
    rows = [row for row, _ in table]
    assert [row.n for row in rows] == [10, 10, 50, 50, 100, 100]
    assert [row.metric for row in rows[:2]] == ["mufid", "mean_gap"]
    assert len({row.seed for row in rows}) == 6
    for row, result in table:
        assert row.ci_lo <= row.estimate <= row.ci_hi
        assert row.estimate == result.estimate


@pytest.mark.slow
def test_mind_separates_shifted_gaussians(harness_service):
    synthetic = SyntheticDataService()
    data_pool = synthetic.gaussian_pool(4000, 16, seed=0)
    model_pool = synthetic.gaussian_pool(2000, 16, seed=1, mean=0.3)
    result = harness_service.discrimination_test(data_pool, model_pool, "mind",
                                                 TrialPlan(n=1000, trials=32, seed=0, threads=4))
    assert result.estimate == 0.0


@pytest.mark.slow
def test_mind_separates_no_later_than_fid(metric_config):
    config = copy.deepcopy(metric_config)
    config["mind"]["projections"] = 500
    service = HarnessService(MetricService(config), config)
    n_grid = [300, 1000, 3000]
    for pool_seed in range(3):
        pools = SyntheticDataService(config).preset("discrimination", seed=pool_seed, n=6000, d=128)
        inputs = ExperimentInputs(data_pool=pools["data"], model_pools=[pools["model"]])
        table = service.sample_size_sweep("discrimination", n_grid, ["mind", "fid"], inputs,
                                          trials=32, seed=pool_seed, threads=4)
        # 每个指标第一次做到零错误的样本量，始终做不到时记为无穷大
        first_zero = {}
        for row, _ in table:
            if row.estimate == 0.0:
                first_zero.setdefault(row.metric, row.n)
        assert "mind" in first_zero, f"pool seed {pool_seed}: mind never separated the pools"
        assert first_zero["mind"] <= first_zero.get("fid", float("inf"))
