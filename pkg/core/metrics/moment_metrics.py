from ..domain.models import EmbeddingSet, MetricValue, MomentMetricConfig
from ..numerics.moments import fid_result, mu_fid, sigma_fid
from .base import BaseMetric, MetricContext


class FidMetric(BaseMetric):
    name = "fid"
    description = "拟合高斯之间的平方 2-Wasserstein 距离 (FID)"
    config_section = "fid"

    def compute(self, set_a: EmbeddingSet, set_b: EmbeddingSet, context: MetricContext) -> MetricValue:
        result = fid_result(set_a, set_b)
        return MetricValue(
            value=result.value,
            raw_value=result.raw_value,
            flags=list(result.flags),
            details={"mean_term": result.mean_term, "trace_term": result.trace_term,
                     "covariance": "population", "eigensolver": "scipy.linalg.eigvalsh"},
        )


class MuFidMetric(BaseMetric):
    name = "mufid"
    description = "只比较均值的 FID (μFID)"
    config_section = "fid"

    def compute(self, set_a: EmbeddingSet, set_b: EmbeddingSet, context: MetricContext) -> MetricValue:
        return MetricValue(value=mu_fid(set_a, set_b))


class SigmaFidMetric(BaseMetric):
    name = "sigmafid"
    description = "随机方向上一维 FID 的平均 (σFID)"
    # 与 MIND 共用投影数配置，相同种子时使用同一组方向
    config_section = "mind"
    param_label = "M"

    def _config(self, context: MetricContext) -> MomentMetricConfig:
        return MomentMetricConfig(metric="sigmafid",
                                  projections=int(context.settings.get("projections", 1000)),
                                  seed=context.seed)

    def compute(self, set_a: EmbeddingSet, set_b: EmbeddingSet, context: MetricContext) -> MetricValue:
        cfg = self._config(context)
        return MetricValue(value=sigma_fid(set_a, set_b, cfg),
                           details={"projections": cfg.projections, "seed": cfg.seed})

    def param_value(self, context: MetricContext, d: int) -> str:
        return f"M={self._config(context).projections}"
