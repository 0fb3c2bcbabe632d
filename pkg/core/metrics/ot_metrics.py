from ..domain.models import EmbeddingSet, MetricValue, MindConfig, SinkhornConfig
from ..numerics.transport import mind, sinkhorn_divergence
from .base import BaseMetric, MetricContext, optional_number

NON_CONVERGED = "sinkhorn_not_converged"
SPLIT_DISABLED = "split_correction_disabled"


def mind_config(context: MetricContext) -> MindConfig:
    settings = context.settings
    return MindConfig(
        projections=int(settings.get("projections", 1000)),
        alpha=optional_number(settings.get("alpha", "auto")),
        seed=context.seed,
        block_size=int(settings.get("block_size", 128)),
        threads=context.threads,
    )


class MindMetric(BaseMetric):
    name = "mind"
    description = "α 缩放的切片 Wasserstein 距离 (MIND)"
    config_section = "mind"
    param_label = "M"

    def compute(self, set_a: EmbeddingSet, set_b: EmbeddingSet, context: MetricContext) -> MetricValue:
        cfg = mind_config(context)
        alpha = cfg.resolve_alpha(set_a.d)
        return MetricValue(
            value=mind(set_a, set_b, cfg),
            details={"alpha": alpha, "alpha_mode": "auto" if cfg.alpha is None else "explicit",
                     "projections": cfg.projections, "seed": cfg.seed},
        )

    def param_value(self, context: MetricContext, d: int) -> str:
        return f"M={mind_config(context).projections}"


def sinkhorn_config(context: MetricContext) -> SinkhornConfig:
    settings = context.settings
    return SinkhornConfig(
        epsilon=optional_number(settings.get("epsilon", "auto")),
        epsilon_scale=float(settings.get("epsilon_scale", 0.05)),
        max_iter=int(settings.get("max_iter", 2000)),
        tol=float(settings.get("tol", 1e-6)),
        split_correction=bool(settings.get("split_correction", True)),
        annealing=bool(settings.get("annealing", True)),
        seed=context.seed,
    )


class SinkhornMetric(BaseMetric):
    name = "sinkhorn"
    description = "去偏的熵正则最优传输散度 (Sinkhorn divergence)"
    config_section = "sinkhorn"
    param_label = "epsilon"

    def compute(self, set_a: EmbeddingSet, set_b: EmbeddingSet, context: MetricContext) -> MetricValue:
        cfg = sinkhorn_config(context)
        result = sinkhorn_divergence(set_a, set_b, cfg)
        flags = []
        if not result.converged:
            flags.append(NON_CONVERGED)
        if cfg.split_correction and not result.split_correction:
            flags.append(SPLIT_DISABLED)
        return MetricValue(
            value=result.value,
            flags=flags,
            details={"epsilon": result.epsilon,
                     "epsilon_mode": "auto" if cfg.epsilon is None else "explicit",
                     "epsilon_scale": cfg.epsilon_scale, "max_iter": cfg.max_iter, "tol": cfg.tol,
                     "split_correction": result.split_correction, "annealing": cfg.annealing,
                     "seed": cfg.seed,
                     "iterations": [term.iterations for term in result.terms]},
        )

    def param_value(self, context: MetricContext, d: int) -> str:
        epsilon = sinkhorn_config(context).epsilon
        return "epsilon=auto" if epsilon is None else f"epsilon={epsilon:g}"
