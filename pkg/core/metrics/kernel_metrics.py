from ..domain.models import EmbeddingSet, MetricValue, MmdConfig
from ..numerics.kernels import mmd_with_bandwidth
from .base import BaseMetric, MetricContext, optional_number


def mmd_config(context: MetricContext) -> MmdConfig:
    settings = context.settings
    return MmdConfig(
        sigma=optional_number(settings.get("sigma", "median"), keyword="median"),
        estimator=str(settings.get("estimator", "u")).lower(),
        tile_size=int(settings.get("tile_size", 1024)),
        full_matrix=bool(settings.get("full_matrix", False)),
        median_max_points=int(settings.get("median_max_points", 2000)),
        seed=context.seed,
    )


class MmdMetric(BaseMetric):
    name = "mmd"
    description = "高斯核最大均值差异 (MMD)"
    config_section = "mmd"
    param_label = "sigma"

    def compute(self, set_a: EmbeddingSet, set_b: EmbeddingSet, context: MetricContext) -> MetricValue:
        cfg = mmd_config(context)
        value, sigma = mmd_with_bandwidth(set_a, set_b, cfg, threads=context.threads)
        return MetricValue(
            value=value,
            details={"sigma": sigma, "sigma_mode": "median" if cfg.sigma is None else "explicit",
                     "estimator": cfg.estimator, "tile_size": cfg.tile_size,
                     "full_matrix": cfg.full_matrix, "seed": cfg.seed},
        )

    def param_value(self, context: MetricContext, d: int) -> str:
        cfg = mmd_config(context)
        mode = "full" if cfg.full_matrix else f"tile{cfg.tile_size}"
        sigma = "median" if cfg.sigma is None else f"{cfg.sigma:g}"
        return f"sigma={sigma};{mode}"
