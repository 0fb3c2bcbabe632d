import math
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..domain.errors import InvalidParameterError
from ..domain.models import EmbeddingSet
from ..initial_data import PRESET_DATA, PRESET_ROLES
from ..logger import logger
from ..numerics.linalg import sqrtm_psd
from ..utils import derive_seed, make_rng


def hash_seed(seed: int, index: int) -> int:
    """同一预设内各个数据池使用互不相关的子种子"""
    return derive_seed(seed, "pool", index)


def _unit_vector(d: int, seed: int, role: str) -> np.ndarray:
    direction = make_rng(seed, role).standard_normal(d)
    return direction / np.linalg.norm(direction)


class SyntheticDataService:
    """负责生成合成嵌入数据池，使所有实验都能在没有外部数据的情况下运行。"""

    def __init__(self, metric_config: Optional[Dict[str, Any]] = None):
        self.config = metric_config or {}
        self.presets = {entry[0]: entry for entry in PRESET_DATA}

    def gaussian_pool(self, n: int, d: int, seed: int, mean=None, cov: Optional[np.ndarray] = None) -> EmbeddingSet:
        """从 N(mean, cov) 抽取 n 个样本；cov 缺省为单位阵"""
        z = make_rng(seed, "gaussian").standard_normal((n, d))
        if cov is not None:
            z = z @ sqrtm_psd(np.asarray(cov, dtype=np.float64))
        if mean is not None:
            z = z + np.broadcast_to(np.asarray(mean, dtype=np.float64), (d,))
        return EmbeddingSet(z)

    def gaussian_mixture_pool(self, n: int, means: np.ndarray, seed: int, scale: float = 1.0,
                              weights: Optional[Sequence[float]] = None) -> EmbeddingSet:
        """各向同性高斯混合，means 为 k×d 的分量均值"""
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        k, d = means.shape
        probabilities = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=np.float64)
        rng = make_rng(seed, "mixture")
        components = rng.choice(k, size=n, p=probabilities)
        return EmbeddingSet(means[components] + scale * rng.standard_normal((n, d)))

    def random_covariance(self, d: int, seed: int) -> np.ndarray:
        """随机的良态协方差矩阵，迹约为 d"""
        a = make_rng(seed, "covariance").standard_normal((d, d))
        cov = (a @ a.T / d + 0.1 * np.eye(d)) / 1.1
        return (cov + cov.T) / 2.0

    def checkpoint_pools(self, n: int, d: int, seed: int, k: int = 5, start_offset: float = 1.0,
                         end_offset: float = 0.2) -> List[EmbeddingSet]:
        """k 个模型池，均值沿同一方向的偏移从 start_offset 线性减小到 end_offset"""
        if k < 2 or not start_offset > end_offset >= 0:
            raise InvalidParameterError("checkpoint pools need k >= 2 and start_offset > end_offset >= 0")
        direction = _unit_vector(d, seed, "checkpoint-direction")
        offsets = np.linspace(start_offset, end_offset, k)
        return [self.gaussian_pool(n, d, seed=hash_seed(seed, j), mean=offset * direction)
                for j, offset in enumerate(offsets)]

    def preset(self, name: str, seed: Optional[int] = None, n: Optional[int] = None,
               d: Optional[int] = None) -> Dict[str, EmbeddingSet]:
        """按名称生成一组内置数据池，返回 {角色名: EmbeddingSet}"""
        if name not in self.presets:
            raise InvalidParameterError(f"unknown preset '{name}', available: {', '.join(self.presets)}")
        _, _, kind, default_n, default_d, options = self.presets[name]
        seed = int(self.config.get("seed", 0) if seed is None else seed)
        n = int(n or default_n)
        d = int(d or default_d)

        if kind == "mean_shift":
            shift = options["shift"] * np.ones(d) / math.sqrt(d)
            pools = [self.gaussian_pool(n, d, hash_seed(seed, 0)),
                     self.gaussian_pool(n, d, hash_seed(seed, 1), mean=shift)]
        elif kind == "bimodal":
            axis = _unit_vector(d, seed, "bimodal-axis")
            half = options["separation"] / 2.0
            data = self.gaussian_mixture_pool(n, np.stack([half * axis, -half * axis]), hash_seed(seed, 0))
            initial_mean = options["initial_shift"] * _unit_vector(d, seed, "initial-direction")
            pools = [data, self.gaussian_pool(n, d, hash_seed(seed, 1), mean=initial_mean)]
        elif kind == "discrimination":
            cov = self.random_covariance(d, seed)
            model_cov = (1.0 + options["cov_shift"]) * cov
            pools = [self.gaussian_pool(n, d, hash_seed(seed, 0), cov=cov),
                     self.gaussian_pool(n, d, hash_seed(seed, 1), mean=options["mean_shift"], cov=model_cov)]
        elif kind == "checkpoints":
            pools = [self.gaussian_pool(n, d, hash_seed(seed, 0))] + self.checkpoint_pools(
                n, d, hash_seed(seed, 1), k=options["k"],
                start_offset=options["start_offset"], end_offset=options["end_offset"])
        elif kind == "contamination":
            pools = [self.gaussian_pool(n, d, hash_seed(seed, 0)),
                     self.gaussian_pool(n, d, hash_seed(seed, 1), mean=options["offset"])]
        else:
            raise InvalidParameterError(f"preset '{name}' has unknown kind '{kind}'")

        logger.info(f"已生成预设数据池 {name}: n={n}, d={d}, seed={seed}")
        return dict(zip(PRESET_ROLES[name], pools))
