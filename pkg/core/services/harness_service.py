from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from ..domain.errors import InsufficientSamplesError, InvalidParameterError
from ..domain.models import EmbeddingSet, ErrorProbability, HarnessRow, TrialPlan
from ..logger import logger
from ..perturbations.base import BasePerturbation
from ..utils import derive_seed, wilson_interval
from .embedding_service import disjoint_subsamples, subsample
from .metric_service import MetricFunction, MetricService

MetricSpec = Union[str, MetricFunction]
EXPERIMENTS = ("discrimination", "monotonicity", "perturbation")

# 单次试验的结果：是否失败，以及本次试验中各个 Δ 的取值
TrialOutcome = Tuple[bool, List[float]]


@dataclass
class ExperimentInputs:
    """一次实验需要的数据池，不同实验使用其中不同的字段"""
    data_pool: EmbeddingSet
    model_pools: List[EmbeddingSet] = field(default_factory=list)
    perturbation: Optional[BasePerturbation] = None
    eps_grid: List[float] = field(default_factory=list)


def check_eps_grid(eps_grid: Sequence[float]) -> List[float]:
    grid = [float(e) for e in eps_grid]
    if not grid:
        raise InvalidParameterError("perturbation grid must contain at least one level")
    if any(e < 0 for e in grid):
        raise InvalidParameterError(f"perturbation levels must be >= 0, got {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParameterError(f"perturbation levels must be strictly increasing, got {grid}")
    return grid


class HarnessService:
    """三种统计检验协议：判别、单调性与扰动排序"""

    def __init__(self, metric_service: MetricService, metric_config: Dict[str, Any]):
        self.metric_service = metric_service
        self.config = metric_config

    # --- 私有辅助方法 ---
    def _resolve_metric(self, metric: MetricSpec, threads: int = 1) -> Tuple[str, MetricFunction]:
        if isinstance(metric, str):
            return metric, self.metric_service.metric_function(metric, threads=threads)
        return getattr(metric, "__name__", "custom"), metric

    def _run_trials(self, plan: TrialPlan, trial: Callable[[int], TrialOutcome]) -> ErrorProbability:
        """并行执行各次试验，按试验序号汇总，结果与线程调度无关"""
        if plan.threads > 1 and plan.trials > 1:
            with ThreadPoolExecutor(max_workers=plan.threads) as pool:
                outcomes = list(pool.map(trial, range(plan.trials)))
        else:
            outcomes = [trial(i) for i in range(plan.trials)]
        failures = sum(1 for failed, _ in outcomes if failed)
        return ErrorProbability(
            estimate=failures / plan.trials,
            trials=plan.trials,
            failures=failures,
            wilson_ci=wilson_interval(failures, plan.trials),
            trial_values=[values for _, values in outcomes],
        )

    # --- 三种实验 ---
    def discrimination_test(self, data_pool: EmbeddingSet, model_pool: EmbeddingSet,
                            metric: MetricSpec, plan: TrialPlan) -> ErrorProbability:
        """
        判别检验：每次试验抽取两个互不相交的数据子集与一个模型子集，
        当 Δ(p̂_data, p̂'_data) ≥ Δ(p̂_data, p̂_model) 时记为一次错误。
        """
        if data_pool.n < 2 * plan.n:
            raise InsufficientSamplesError(
                f"data pool of {data_pool.n} rows cannot provide two disjoint subsamples of {plan.n}")
        if model_pool.n < plan.n:
            raise InsufficientSamplesError(f"model pool of {model_pool.n} rows is smaller than n={plan.n}")
        name, fn = self._resolve_metric(metric)

        def trial(i: int) -> TrialOutcome:
            data, data_prime = disjoint_subsamples(data_pool, [plan.n, plan.n], derive_seed(plan.seed, i, "data"))
            model = subsample(model_pool, plan.n, derive_seed(plan.seed, i, "model"))
            metric_seed = derive_seed(plan.seed, i, "metric")
            same = fn(data, data_prime, metric_seed)
            other = fn(data, model, metric_seed)
            return same >= other, [same, other]

        result = self._run_trials(plan, trial)
        logger.info(f"判别检验 [{name}] n={plan.n}: 错误率 {result.estimate:.4f} "
                    f"({result.failures}/{result.trials})")
        return result

    def monotonicity_test(self, data_pool: EmbeddingSet, model_pools: Sequence[EmbeddingSet],
                          metric: MetricSpec, plan: TrialPlan) -> ErrorProbability:
        """
        单调性检验：model_pools 按由差到好的顺序给出，
        只要 Δ₁ > Δ₂ > … > Δ_k 不成立（含相等）即记为一次错误。
        """
        if len(model_pools) < 2:
            raise InvalidParameterError(f"monotonicity needs at least 2 model pools, got {len(model_pools)}")
        if data_pool.n < plan.n or any(pool.n < plan.n for pool in model_pools):
            raise InsufficientSamplesError(f"every pool needs at least n={plan.n} rows")
        name, fn = self._resolve_metric(metric)

        def trial(i: int) -> TrialOutcome:
            data = subsample(data_pool, plan.n, derive_seed(plan.seed, i, "data"))
            metric_seed = derive_seed(plan.seed, i, "metric")
            values = [fn(data, subsample(pool, plan.n, derive_seed(plan.seed, i, "model", j)), metric_seed)
                      for j, pool in enumerate(model_pools)]
            ordered = all(a > b for a, b in zip(values, values[1:]))
            return not ordered, values

        result = self._run_trials(plan, trial)
        logger.info(f"单调性检验 [{name}] k={len(model_pools)} n={plan.n}: 错误率 {result.estimate:.4f}")
        return result

    def perturbation_test(self, data_pool: EmbeddingSet, perturbation: BasePerturbation,
                          eps_grid: Sequence[float], metric: MetricSpec, plan: TrialPlan) -> ErrorProbability:
        """
        扰动排序检验：每次试验取 n 行作为参考，其余行作为扰动的来源，
        Δ(p̂_data, p̂_ε₁) ≤ … ≤ Δ(p̂_data, p̂_ε_k) 不成立即记为一次错误。
        """
        grid = check_eps_grid(eps_grid)
        if data_pool.n < 2 * plan.n:
            raise InsufficientSamplesError(
                f"data pool of {data_pool.n} rows cannot provide a reference and a source of {plan.n} rows")
        name, fn = self._resolve_metric(metric)

        def trial(i: int) -> TrialOutcome:
            split = disjoint_subsamples(data_pool, [plan.n, data_pool.n - plan.n], derive_seed(plan.seed, i, "data"))
            reference, source = split
            perturbation_seed = derive_seed(plan.seed, i, "perturbation")
            metric_seed = derive_seed(plan.seed, i, "metric")
            values = [fn(reference, perturbation.apply(source, eps, plan.n, perturbation_seed), metric_seed)
                      for eps in grid]
            ordered = all(a <= b for a, b in zip(values, values[1:]))
            return not ordered, values

        result = self._run_trials(plan, trial)
        logger.info(f"扰动排序检验 [{name}/{perturbation.name}] 级别 {grid} n={plan.n}: "
                    f"错误率 {result.estimate:.4f}")
        return result

    # --- 实验调度 ---
    def run_experiment(self, experiment: str, inputs: ExperimentInputs, metric: MetricSpec,
                       plan: TrialPlan) -> ErrorProbability:
        if experiment == "discrimination":
            if not inputs.model_pools:
                raise InvalidParameterError("discrimination needs a model pool")
            return self.discrimination_test(inputs.data_pool, inputs.model_pools[0], metric, plan)
        if experiment == "monotonicity":
            return self.monotonicity_test(inputs.data_pool, inputs.model_pools, metric, plan)
        if experiment == "perturbation":
            if inputs.perturbation is None:
                raise InvalidParameterError("perturbation experiment needs a perturbation")
            return self.perturbation_test(inputs.data_pool, inputs.perturbation, inputs.eps_grid, metric, plan)
        raise InvalidParameterError(f"unknown experiment '{experiment}', expected one of {', '.join(EXPERIMENTS)}")

    def sample_size_sweep(self, experiment: str, n_grid: Sequence[int], metrics: Sequence[MetricSpec],
                          inputs: ExperimentInputs, trials: Optional[int] = None, seed: Optional[int] = None,
                          threads: Optional[int] = None) -> List[Tuple[HarnessRow, ErrorProbability]]:
        """
        在每个 (n, metric) 上运行一次实验，种子由主种子与 (n, metric) 派生，
        返回长格式结果表，共 |n_grid|·|metrics| 行。
        """
        master = int(self.config.get("seed", 0) if seed is None else seed)
        trials = int(trials if trials is not None else self.config.get("harness", {}).get("trials", 512))
        workers = int(self.config.get("threads", 1) if threads is None else threads)

        table = []
        for n in n_grid:
            for metric in metrics:
                name, _ = self._resolve_metric(metric)
                plan = TrialPlan(n=int(n), trials=trials, seed=derive_seed(master, int(n), name), threads=workers)
                result = self.run_experiment(experiment, inputs, metric, plan)
                row = HarnessRow(experiment=experiment, metric=name, n=plan.n, trials=plan.trials,
                                 estimate=result.estimate, ci_lo=result.wilson_ci[0],
                                 ci_hi=result.wilson_ci[1], seed=plan.seed)
                table.append((row, result))
        return table
