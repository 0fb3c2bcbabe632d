import math

import numpy as np

from ..domain.errors import InvalidParameterError
from ..domain.models import EmbeddingSet
from ..services.embedding_service import mix, subsample
from ..utils import make_rng
from .base import BasePerturbation


class MixturePerturbation(BasePerturbation):
    """混入比例为 ε 的另一个数据集"""
    name = "mixture"
    description = "按比例 ε 混入其他数据集的样本"

    def __init__(self, other_pool: EmbeddingSet):
        self.other_pool = other_pool

    def apply(self, source: EmbeddingSet, epsilon: float, m: int, seed: int) -> EmbeddingSet:
        return mix(source, self.other_pool, epsilon, m, seed)


class GaussianNoisePerturbation(BasePerturbation):
    """
    在嵌入上叠加高斯噪声，标准差为 ε · scale。
    scale 为数据池各坐标标准差的均方根，使 ε 与嵌入的量纲无关。
    """
    name = "gaussian_noise"
    description = "在嵌入上叠加标准差为 ε·scale 的高斯噪声"

    def __init__(self, scale: float):
        if not scale > 0:
            raise InvalidParameterError(f"noise scale must be > 0, got {scale}")
        self.scale = float(scale)

    @classmethod
    def from_pool(cls, pool: EmbeddingSet) -> "GaussianNoisePerturbation":
        variances = pool.data.var(axis=0)
        return cls(math.sqrt(float(np.mean(variances))))

    def apply(self, source: EmbeddingSet, epsilon: float, m: int, seed: int) -> EmbeddingSet:
        if epsilon < 0:
            raise InvalidParameterError(f"noise level must be >= 0, got {epsilon}")
        base = subsample(source, m, seed)
        # 各级别共用同一份基底与噪声方向，只改变幅度
        noise = make_rng(seed, "noise").standard_normal(base.data.shape)
        return EmbeddingSet(base.data + (epsilon * self.scale) * noise)
