"""
高斯核 MMD 与中位数启发式带宽。

核函数为 k_σ(x, y) = exp(−‖x−y‖²/σ)，σ 直接除平方距离（不是 2σ²）。
"""
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..domain.errors import (
    DegenerateBandwidthError,
    DimensionMismatchError,
    InsufficientSamplesError,
)
from ..domain.models import EmbeddingSet, MmdConfig
from ..logger import logger
from ..utils import make_rng


def _canonical_key(embeddings: EmbeddingSet) -> Tuple[int, int, str]:
    digest = hashlib.sha1(embeddings.data.tobytes())
    if embeddings.weights is not None:
        digest.update(embeddings.weights.tobytes())
    return embeddings.n, embeddings.d, digest.hexdigest()


def _canonical_order(set_a: EmbeddingSet, set_b: EmbeddingSet) -> Tuple[EmbeddingSet, EmbeddingSet]:
    """交换参数不改变计算顺序，从而 mmd(A, B) 与 mmd(B, A) 逐位相同"""
    if _canonical_key(set_b) < _canonical_key(set_a):
        return set_b, set_a
    return set_a, set_b


def median_heuristic(set_a: EmbeddingSet, set_b: EmbeddingSet,
                     max_points: int = 2000, seed: int = 0) -> float:
    """
    合并两个集合后，取两两平方欧氏距离的中位数作为带宽 σ。

    合并样本超过 max_points 时按种子无放回抽取 max_points 个点。
    """
    if set_a.d != set_b.d:
        raise DimensionMismatchError(f"dimension mismatch: {set_a.d} vs {set_b.d}")
    first, second = _canonical_order(set_a, set_b)
    pooled = np.concatenate([first.data, second.data])
    if pooled.shape[0] < 2:
        raise InsufficientSamplesError("median heuristic needs at least 2 pooled points")
    if pooled.shape[0] > max_points:
        keep = make_rng(seed, "median-heuristic").choice(pooled.shape[0], size=max_points, replace=False)
        pooled = pooled[np.sort(keep)]
    sigma = float(np.median(pdist(pooled, "sqeuclidean")))
    if sigma <= 0.0:
        raise DegenerateBandwidthError("degenerate bandwidth: median squared distance is 0")
    return sigma


def resolve_bandwidth(set_a: EmbeddingSet, set_b: EmbeddingSet, cfg: MmdConfig) -> float:
    if cfg.sigma is not None:
        return float(cfg.sigma)
    return median_heuristic(set_a, set_b, max_points=cfg.median_max_points, seed=cfg.seed)


# ---------------------------------
# 核矩阵求和
# ---------------------------------

def _kernel_sum(x: np.ndarray, wx: np.ndarray, y: np.ndarray, wy: np.ndarray,
                sigma: float, tile_size: int, full_matrix: bool, threads: int) -> float:
    """Σ_ij wx_i wy_j k(x_i, y_j)，分块计算时峰值内存为 O(tile²)"""
    if full_matrix:
        kernel = np.exp(-cdist(x, y, "sqeuclidean") / sigma)
        return float(wx @ kernel @ wy)

    row_starts = list(range(0, x.shape[0], tile_size))

    def row_band(start: int) -> float:
        stop = start + tile_size
        total = 0.0
        for col in range(0, y.shape[0], tile_size):
            tile = np.exp(-cdist(x[start:stop], y[col:col + tile_size], "sqeuclidean") / sigma)
            total += float(wx[start:stop] @ tile @ wy[col:col + tile_size])
        return total

    if threads > 1 and len(row_starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            bands = list(pool.map(row_band, row_starts))
    else:
        bands = [row_band(start) for start in row_starts]
    # 按行块序号归约，与线程数无关
    return float(sum(bands))


def _within_term(embeddings: EmbeddingSet, sigma: float, cfg: MmdConfig, threads: int) -> float:
    w = embeddings.effective_weights()
    full = _kernel_sum(embeddings.data, w, embeddings.data, w,
                       sigma, cfg.tile_size, cfg.full_matrix, threads)
    if cfg.estimator == "v":
        return full
    # U 统计量：去掉对角线 (k_ii = 1)，再按 1 − Σw² 归一化；均匀权重时即 1/(n(n−1))
    diagonal = float(np.dot(w, w))
    if embeddings.support_size() < 2 or 1.0 - diagonal <= 0.0:
        raise InsufficientSamplesError("unbiased MMD needs at least 2 samples per set")
    return (full - diagonal) / (1.0 - diagonal)


def mmd(set_a: EmbeddingSet, set_b: EmbeddingSet, cfg: MmdConfig, threads: int = 1) -> float:
    """
    高斯核 MMD² 的插值估计：E[k(x,x')] − 2E[k(x,y)] + E[k(y,y')]。

    Args:
        cfg: estimator="v" 保留对角自项（有偏），"u" 在集合内均值中去掉自项（无偏）
        threads: 行块并行的线程数，不影响结果

    Returns:
        MMD² 估计值；V 估计量总是非负，U 估计量可能略小于 0
    """
    if set_a.d != set_b.d:
        raise DimensionMismatchError(f"dimension mismatch: {set_a.d} vs {set_b.d}")
    sigma = resolve_bandwidth(set_a, set_b, cfg)
    first, second = _canonical_order(set_a, set_b)

    within_first = _within_term(first, sigma, cfg, threads)
    within_second = _within_term(second, sigma, cfg, threads)
    cross = _kernel_sum(first.data, first.effective_weights(), second.data, second.effective_weights(),
                        sigma, cfg.tile_size, cfg.full_matrix, threads)
    value = within_first + within_second - 2.0 * cross
    logger.debug(f"MMD: sigma={sigma:.6g}, estimator={cfg.estimator}, value={value:.6g}")
    return value


def mmd_with_bandwidth(set_a: EmbeddingSet, set_b: EmbeddingSet, cfg: MmdConfig,
                       threads: int = 1) -> Tuple[float, float]:
    """返回 (MMD², 实际使用的 σ)，便于报告中回显带宽"""
    sigma = resolve_bandwidth(set_a, set_b, cfg)
    return mmd(set_a, set_b, replace(cfg, sigma=sigma), threads=threads), sigma
