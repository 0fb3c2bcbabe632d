"""
基于一阶/二阶矩的指标：FID、μFID、σFID。
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..domain.errors import DimensionMismatchError
from ..domain.models import EmbeddingSet, GaussianSummary, MomentMetricConfig
from ..logger import logger
from .linalg import summarize, trace_sqrt_product
from .transport import sample_directions

RANK_DEFICIENT = "rank_deficient"
TRACE_CLAMPED = "trace_term_clamped"


@dataclass
class FrechetResult:
    value: float
    # 截断前的原始值，trace 项为负时与 value 不同
    raw_value: float
    mean_term: float
    trace_term: float
    flags: List[str] = field(default_factory=list)


def _check_dims(set_a: EmbeddingSet, set_b: EmbeddingSet) -> None:
    if set_a.d != set_b.d:
        raise DimensionMismatchError(f"dimension mismatch: {set_a.d} vs {set_b.d}")


def frechet_distance(summary_a: GaussianSummary, summary_b: GaussianSummary) -> FrechetResult:
    """
    两个高斯之间的平方 2-Wasserstein 距离：
    ‖μ_A−μ_B‖² + tr(Σ_A) + tr(Σ_B) − 2·tr((Σ_B^{1/2} Σ_A Σ_B^{1/2})^{1/2})

    trace 项因浮点误差为负时截断为 0 并给出警告，原始值保留在 raw_value 中。
    """
    if summary_a.d != summary_b.d:
        raise DimensionMismatchError(f"dimension mismatch: {summary_a.d} vs {summary_b.d}")
    delta = summary_a.mean - summary_b.mean
    mean_term = float(np.dot(delta, delta))
    trace_term = (float(np.trace(summary_a.cov)) + float(np.trace(summary_b.cov))
                  - 2.0 * trace_sqrt_product(summary_a.cov, summary_b.cov))
    raw_value = mean_term + trace_term
    flags = []
    if trace_term < 0.0:
        logger.warning(f"FID 的 trace 项为负 ({trace_term:.3e})，已截断为 0。")
        flags.append(TRACE_CLAMPED)
        trace_term = 0.0
    return FrechetResult(value=mean_term + trace_term, raw_value=raw_value,
                         mean_term=mean_term, trace_term=trace_term, flags=flags)


def fid_result(set_a: EmbeddingSet, set_b: EmbeddingSet) -> FrechetResult:
    """带标记的 FID；任一集合支撑点数 ≤ d 时协方差估计奇异，附加 rank_deficient 标记"""
    _check_dims(set_a, set_b)
    result = frechet_distance(summarize(set_a), summarize(set_b))
    if min(set_a.support_size(), set_b.support_size()) <= set_a.d:
        logger.warning(f"样本数不超过维度 d={set_a.d}，协方差估计秩亏，FID 结果仅供参考。")
        result.flags.append(RANK_DEFICIENT)
    return result


def fid(set_a: EmbeddingSet, set_b: EmbeddingSet) -> float:
    return fid_result(set_a, set_b).value


def mu_fid(set_a: EmbeddingSet, set_b: EmbeddingSet) -> float:
    """只比较均值：‖μ̂_A − μ̂_B‖²"""
    _check_dims(set_a, set_b)
    delta = set_a.effective_weights() @ set_a.data - set_b.effective_weights() @ set_b.data
    return float(np.dot(delta, delta))


def _projected_moments(summary: GaussianSummary, directions: np.ndarray):
    means = directions @ summary.mean
    variances = np.einsum("ij,ij->i", directions @ summary.cov, directions)
    return means, np.sqrt(np.maximum(variances, 0.0))


def sigma_fid(set_a: EmbeddingSet, set_b: EmbeddingSet, cfg: MomentMetricConfig) -> float:
    """
    切片 FID：在 M 个随机方向上比较投影后的一维高斯，
    取 (u·Δμ̂)² + (σ̂_{uA} − σ̂_{uB})² 的平均。标准差使用总体归一化。

    与 MIND 共用 sample_directions，因此相同种子下两者使用同一组方向。
    """
    _check_dims(set_a, set_b)
    directions = sample_directions(cfg.projections, set_a.d, cfg.seed).directions
    mean_a, std_a = _projected_moments(summarize(set_a), directions)
    mean_b, std_b = _projected_moments(summarize(set_b), directions)
    return float(np.mean((mean_a - mean_b) ** 2 + (std_a - std_b) ** 2))
