import os
from typing import Any, Dict, List, Optional

import numpy as np

from ..repositories.abstract_repository import AbstractEmbeddingRepository
from ..domain.errors import (
    DimensionMismatchError,
    InsufficientSamplesError,
    InvalidParameterError,
)
from ..domain.models import EmbeddingSet
from ..logger import logger
from ..utils import make_rng, round_half_up

FORMAT_ALIASES = {"binary": "binary", "bin": "binary", "emb": "binary", "csv": "csv"}


# ---------------------------------
# 抽样与混合（纯函数，结果只取决于输入与种子）
# ---------------------------------

def _require_unweighted(embeddings: EmbeddingSet, what: str) -> None:
    if embeddings.is_weighted:
        raise InvalidParameterError(f"{what} requires an unweighted embedding set")


def subsample(embeddings: EmbeddingSet, m: int, seed: int) -> EmbeddingSet:
    """无放回地均匀抽取 m 行；m = n 时得到输入的一个排列"""
    _require_unweighted(embeddings, "subsample")
    if m < 1:
        raise InvalidParameterError(f"subsample size must be >= 1, got {m}")
    if m > embeddings.n:
        raise InsufficientSamplesError(f"cannot draw {m} rows from a set of {embeddings.n}")
    indices = make_rng(seed, "subsample").choice(embeddings.n, size=m, replace=False)
    return embeddings.take(indices)


def mix(set_a: EmbeddingSet, set_b: EmbeddingSet, epsilon: float, m: int, seed: int) -> EmbeddingSet:
    """
    混合扰动：从 B 抽 round(εm) 行（0.5 向上取整），其余 m − round(εm) 行取自 A，再整体打乱。

    Args:
        set_a: 主数据集
        set_b: 污染数据集
        epsilon: 污染比例，取值 [0, 1]
        m: 输出行数
        seed: 随机种子
    """
    _require_unweighted(set_a, "mix")
    _require_unweighted(set_b, "mix")
    if set_a.d != set_b.d:
        raise DimensionMismatchError(f"dimension mismatch: {set_a.d} vs {set_b.d}")
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidParameterError(f"mixture fraction must lie in [0, 1], got {epsilon}")
    if m < 1:
        raise InvalidParameterError(f"mixture size must be >= 1, got {m}")

    from_b = round_half_up(epsilon * m)
    from_a = m - from_b
    if from_b > set_b.n or from_a > set_a.n:
        raise InsufficientSamplesError(
            f"mixture needs {from_a} rows of A (has {set_a.n}) and {from_b} rows of B (has {set_b.n})")

    rng = make_rng(seed, "mix")
    rows_a = set_a.data[rng.choice(set_a.n, size=from_a, replace=False)]
    rows_b = set_b.data[rng.choice(set_b.n, size=from_b, replace=False)]
    stacked = np.concatenate([rows_a, rows_b])
    return EmbeddingSet(stacked[rng.permutation(m)])


def disjoint_subsamples(embeddings: EmbeddingSet, sizes: List[int], seed: int) -> List[EmbeddingSet]:
    """一次抽出若干个互不相交的子集"""
    _require_unweighted(embeddings, "disjoint_subsamples")
    total = int(sum(sizes))
    if any(size < 1 for size in sizes):
        raise InvalidParameterError(f"subsample sizes must be >= 1, got {sizes}")
    if total > embeddings.n:
        raise InsufficientSamplesError(
            f"pool of {embeddings.n} rows is too small for disjoint subsamples of sizes {sizes}")
    order = make_rng(seed, "disjoint").permutation(embeddings.n)
    parts = []
    start = 0
    for size in sizes:
        parts.append(embeddings.take(order[start:start + size]))
        start += size
    return parts


def truncate(embeddings: EmbeddingSet, d_prime: int) -> EmbeddingSet:
    """只保留前 d' 个坐标，权重不变"""
    if not 1 <= d_prime <= embeddings.d:
        raise InvalidParameterError(f"truncation dimension must lie in [1, {embeddings.d}], got {d_prime}")
    if d_prime == embeddings.d:
        return embeddings
    return EmbeddingSet(embeddings.data[:, :d_prime], embeddings.weights)


class EmbeddingService:
    """封装嵌入文件的读写、格式识别与转换"""

    def __init__(self, binary_repo: AbstractEmbeddingRepository, csv_repo: AbstractEmbeddingRepository,
                 metric_config: Optional[Dict[str, Any]] = None):
        self.repos = {"binary": binary_repo, "csv": csv_repo}
        self.config = metric_config or {}

    def resolve_format(self, path: str, fmt: Optional[str] = None) -> str:
        """显式格式优先；auto 时按扩展名判断，.csv 为 csv，其余按二进制处理"""
        fmt = (fmt or self.config.get("format") or "auto").lower()
        if fmt != "auto":
            if fmt not in FORMAT_ALIASES:
                raise InvalidParameterError(f"unknown embedding format {fmt!r}")
            return FORMAT_ALIASES[fmt]
        extension = os.path.splitext(path)[1].lower().lstrip(".")
        return "csv" if extension == "csv" else "binary"

    def load_embeddings(self, path: str, fmt: Optional[str] = None,
                        truncate_dim: Optional[int] = None) -> EmbeddingSet:
        resolved = self.resolve_format(path, fmt)
        embeddings = self.repos[resolved].load(path)
        logger.info(f"已读取嵌入文件 {path} ({resolved}): n={embeddings.n}, d={embeddings.d}"
                    f"{'，带权重' if embeddings.is_weighted else ''}")
        if truncate_dim:
            embeddings = truncate(embeddings, int(truncate_dim))
            logger.info(f"嵌入已截断到前 {embeddings.d} 维。")
        return embeddings

    def save_embeddings(self, embeddings: EmbeddingSet, path: str, fmt: Optional[str] = None) -> None:
        resolved = self.resolve_format(path, fmt)
        self.repos[resolved].save(embeddings, path)
        logger.info(f"已写出嵌入文件 {path} ({resolved}): n={embeddings.n}, d={embeddings.d}")

    def convert(self, source: str, target: str, source_format: Optional[str] = None,
                target_format: Optional[str] = None) -> EmbeddingSet:
        embeddings = self.load_embeddings(source, source_format)
        self.save_embeddings(embeddings, target, target_format)
        return embeddings
