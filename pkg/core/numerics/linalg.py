"""
一阶/二阶矩估计与对称半正定矩阵的线性代数。

所有函数都是纯函数，统一使用 float64。协方差采用总体归一化 (1/n)，
与矩匹配构造及 FID(self, self) = 0 保持一致。
"""
from typing import Optional

import numpy as np
import scipy.linalg

from ..domain.errors import InsufficientSamplesError, LinalgError
from ..domain.models import EmbeddingSet, GaussianSummary, EigenDecomposition

# 对称夹心矩阵中，低于 最大特征值 × 该比例 的特征值视为舍入噪声
SANDWICH_NOISE_FLOOR = 1e-14
RANK_TOL_SCALE = 1e-10


def _check_finite(matrix: np.ndarray, what: str) -> None:
    if not np.isfinite(matrix).all():
        raise LinalgError(f"non-finite entries in {what}")


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.T) / 2.0


def summarize(embeddings: EmbeddingSet) -> GaussianSummary:
    """
    估计（加权）均值与协方差。

    两遍算法：先算均值，再累加中心化外积。无权重时要求 n >= 2。
    """
    data = embeddings.data
    if embeddings.weights is None:
        if embeddings.n < 2:
            raise InsufficientSamplesError("unweighted covariance needs n >= 2")
        mean = data.mean(axis=0)
        centered = data - mean
        cov = centered.T @ centered / embeddings.n
    else:
        weights = embeddings.weights
        total = float(weights.sum())
        if total <= 0.0:
            raise InsufficientSamplesError("all weights are zero")
        weights = weights / total
        mean = weights @ data
        centered = data - mean
        cov = (centered * weights[:, None]).T @ centered
    return GaussianSummary(mean=mean, cov=_symmetrize(cov), n_source=embeddings.n)


def default_rank_tol(matrix: np.ndarray) -> float:
    return RANK_TOL_SCALE * max(float(np.trace(matrix)), 0.0)


def eigh(matrix: np.ndarray, rank_tol: Optional[float] = None) -> EigenDecomposition:
    """
    对称矩阵的特征分解，特征值降序。

    (−rank_tol, 0) 内的负特征值被截为 0；rank 为大于 rank_tol 的特征值个数。
    rank_tol 默认 1e-10 · tr(S)。
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    _check_finite(matrix, "eigh input")
    sym = _symmetrize(matrix)
    if rank_tol is None:
        rank_tol = default_rank_tol(sym)
    try:
        values, vectors = scipy.linalg.eigh(sym)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise LinalgError(f"eigendecomposition failed: {e}") from e

    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    values[(values < 0.0) & (values > -rank_tol)] = 0.0
    rank = int(np.count_nonzero(values > rank_tol))
    return EigenDecomposition(eigenvalues=values, eigenvectors=vectors, rank=rank)


def sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    """半正定矩阵的对称平方根 U·diag(√max(λ,0))·Uᵀ"""
    decomposition = eigh(matrix)
    roots = np.sqrt(np.maximum(decomposition.eigenvalues, 0.0))
    vectors = decomposition.eigenvectors
    root = (vectors * roots) @ vectors.T
    return _symmetrize(root)


def trace_sqrt_product(cov_x: np.ndarray, cov_y: np.ndarray) -> float:
    """
    计算 tr((Σ_Y^{1/2} Σ_X Σ_Y^{1/2})^{1/2})。

    使用对称夹心形式，所有特征求解都在对称矩阵上完成；
    它与 tr((Σ_X Σ_Y)^{1/2}) 相等。
    """
    cov_x = np.asarray(cov_x, dtype=np.float64)
    cov_y = np.asarray(cov_y, dtype=np.float64)
    _check_finite(cov_x, "covariance X")
    _check_finite(cov_y, "covariance Y")
    root_y = sqrtm_psd(cov_y)
    sandwich = _symmetrize(root_y @ cov_x @ root_y)
    _check_finite(sandwich, "sandwich product")
    try:
        values = scipy.linalg.eigvalsh(sandwich)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise LinalgError(f"eigendecomposition failed: {e}") from e
    if values.size == 0:
        return 0.0
    floor = SANDWICH_NOISE_FLOOR * max(float(values[-1]), 0.0)
    values = np.where(values > floor, values, 0.0)
    result = float(np.sqrt(values).sum())
    if not np.isfinite(result):
        raise LinalgError("non-finite trace of square root")
    return result
