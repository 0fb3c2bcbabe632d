import copy
import inspect
import math
import pkgutil
import time
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..domain.errors import (
    InvalidParameterError,
    MetricComputationError,
    MindMetricsError,
    UnknownMetricError,
)
from ..domain.models import EmbeddingSet, MetricReport, MetricValue
from ..logger import logger
from ..metrics.base import BaseMetric, MetricContext

MetricFunction = Callable[[EmbeddingSet, EmbeddingSet, int], float]


def _merge(base: Dict[str, Any], override: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in (override or {}).items():
        if value is not None:
            merged[key] = value
    return merged


def calibrate_alpha(unscaled_values: Sequence[float], fid_values: Sequence[float]) -> float:
    """
    选择缩放系数 α，使 α·SW 在对数尺度上最接近 FID（最小二乘）。

    解析解为 exp(mean(log fid − log sw))。
    """
    sw = np.asarray(unscaled_values, dtype=np.float64)
    target = np.asarray(fid_values, dtype=np.float64)
    if sw.shape != target.shape or sw.size == 0:
        raise InvalidParameterError("calibration needs two non-empty sequences of equal length")
    if (sw <= 0).any() or (target <= 0).any():
        raise InvalidParameterError("calibration values must be strictly positive")
    return float(math.exp(float(np.mean(np.log(target) - np.log(sw)))))


class MetricService:
    """实现可插拔的指标系统，统一负责配置解析、计时与错误包装"""

    def __init__(self, metric_config: Dict[str, Any]):
        self.config = metric_config
        self.metrics: Dict[str, BaseMetric] = self._load_metrics()

    def _load_metrics(self) -> Dict[str, BaseMetric]:
        """动态扫描并加载所有指标类。"""
        loaded: Dict[str, BaseMetric] = {}
        # 指标模块都在 core.metrics 包下
        from .. import metrics as metrics_package

        for _, name, _ in pkgutil.walk_packages(metrics_package.__path__, metrics_package.__name__ + "."):
            module = __import__(name, fromlist="dummy")
            for _, obj in inspect.getmembers(module, inspect.isclass):
                if issubclass(obj, BaseMetric) and obj is not BaseMetric and not inspect.isabstract(obj):
                    loaded[obj.name] = obj()
        logger.info(f"成功加载 {len(loaded)} 个指标模块: {', '.join(sorted(loaded))}")
        return loaded

    def available_metrics(self) -> List[str]:
        return sorted(self.metrics)

    def get_metric(self, name: str) -> BaseMetric:
        metric = self.metrics.get(name)
        if metric is None:
            raise UnknownMetricError(f"unknown metric '{name}', available: {', '.join(self.available_metrics())}")
        return metric

    def build_context(self, metric: BaseMetric, seed: Optional[int] = None,
                      overrides: Optional[Dict[str, Any]] = None, threads: Optional[int] = None) -> MetricContext:
        settings = _merge(self.config.get(metric.config_section, {}), (overrides or {}).get(metric.config_section))
        return MetricContext(
            seed=int(self.config.get("seed", 0) if seed is None else seed),
            threads=int(self.config.get("threads", 1) if threads is None else threads),
            settings=settings,
        )

    def evaluate(self, name: str, set_a: EmbeddingSet, set_b: EmbeddingSet, seed: Optional[int] = None,
                 overrides: Optional[Dict[str, Any]] = None, threads: Optional[int] = None) -> MetricValue:
        """
        计算一个指标并返回插件的原始结果。

        除 UnknownMetricError 外，插件抛出的异常都包装为 MetricComputationError 并附带指标名称。
        """
        metric = self.get_metric(name)
        context = self.build_context(metric, seed=seed, overrides=overrides, threads=threads)
        try:
            return metric.compute(set_a, set_b, context)
        except MetricComputationError:
            raise
        except (MindMetricsError, ValueError, ArithmeticError) as e:
            raise MetricComputationError(name, e) from e

    def compute(self, name: str, set_a: EmbeddingSet, set_b: EmbeddingSet, seed: Optional[int] = None,
                overrides: Optional[Dict[str, Any]] = None, threads: Optional[int] = None) -> MetricReport:
        """计算指标并生成带配置回显与耗时的报告"""
        metric = self.get_metric(name)
        context = self.build_context(metric, seed=seed, overrides=overrides, threads=threads)
        start = time.perf_counter()
        result = self.evaluate(name, set_a, set_b, seed=context.seed, overrides=overrides, threads=context.threads)
        walltime = time.perf_counter() - start

        flags = list(result.flags)
        if not math.isfinite(result.value) and "non_finite" not in flags:
            flags.append("non_finite")
        config_echo = copy.deepcopy(context.settings)
        config_echo.update(result.details)
        config_echo["seed"] = context.seed
        config_echo["threads"] = context.threads
        logger.info(f"指标 {name} 计算完成: value={result.value:.6g}，耗时 {walltime:.3f}s")
        return MetricReport(
            metric=name,
            value=float(result.value),
            flags=flags,
            config=config_echo,
            n_a=set_a.n,
            n_b=set_b.n,
            d=set_a.d,
            walltime_s=walltime,
            raw_value=result.raw_value,
        )

    def metric_function(self, name: str, overrides: Optional[Dict[str, Any]] = None,
                        threads: int = 1) -> MetricFunction:
        """返回 fn(a, b, seed) -> float，供统计检验与基准测试反复调用"""
        self.get_metric(name)

        def run(set_a: EmbeddingSet, set_b: EmbeddingSet, seed: int) -> float:
            return self.evaluate(name, set_a, set_b, seed=seed, overrides=overrides, threads=threads).value

        return run

    def param_value(self, name: str, d: int, overrides: Optional[Dict[str, Any]] = None) -> str:
        metric = self.get_metric(name)
        return metric.param_value(self.build_context(metric, overrides=overrides), d)

    @staticmethod
    def calibrate_alpha(unscaled_values: Sequence[float], fid_values: Sequence[float]) -> float:
        return calibrate_alpha(unscaled_values, fid_values)
