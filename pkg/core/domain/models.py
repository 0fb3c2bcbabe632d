from dataclasses import dataclass, field, asdict
from typing import Optional, List, Dict, Any, Tuple

import numpy as np

from .errors import (
    DimensionMismatchError,
    InsufficientSamplesError,
    InvalidParameterError,
    NegativeWeightError,
    NonFiniteValueError,
    WeightSumError,
)

WEIGHT_SUM_TOL = 1e-9


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    """拷贝为 C 连续的只读数组，保证实体构造后不可变。"""
    array = np.array(values, dtype=dtype, order="C", copy=True)
    array.setflags(write=False)
    return array


# ---------------------------------
# 嵌入数据实体 (Embedding Entities)
# ---------------------------------

@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """
    n×d 的嵌入矩阵，附带可选的逐行权重，即经验分布 p̂_n。

    没有权重时按均匀分布 1/n 解释。构造后不可修改，可在线程间共享。
    """
    data: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        data = _frozen_array(self.data)
        if data.ndim != 2:
            raise DimensionMismatchError(f"embedding matrix must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise InsufficientSamplesError(f"embedding set needs n >= 1 and d >= 1, got shape {data.shape}")
        finite_rows = np.isfinite(data).all(axis=1)
        if not finite_rows.all():
            raise NonFiniteValueError("non-finite embedding value", row=int(np.argmin(finite_rows)))
        object.__setattr__(self, "data", data)

        if self.weights is not None:
            weights = _frozen_array(self.weights)
            if weights.shape != (data.shape[0],):
                raise DimensionMismatchError(
                    f"weights must have length n={data.shape[0]}, got shape {weights.shape}")
            if not np.isfinite(weights).all():
                raise NonFiniteValueError("non-finite weight", row=int(np.argmin(np.isfinite(weights))))
            if (weights < 0).any():
                raise NegativeWeightError("negative weight", row=int(np.argmax(weights < 0)))
            total = float(weights.sum())
            if abs(total - 1.0) > WEIGHT_SUM_TOL:
                raise WeightSumError(f"weights sum to {total!r}, expected 1")
            object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def d(self) -> int:
        return int(self.data.shape[1])

    @property
    def is_weighted(self) -> bool:
        return self.weights is not None

    def effective_weights(self) -> np.ndarray:
        """返回实际使用的权重；无权重时为均匀 1/n。"""
        if self.weights is not None:
            return self.weights
        return np.full(self.n, 1.0 / self.n)

    def support_size(self) -> int:
        """正权重的原子个数"""
        if self.weights is None:
            return self.n
        return int(np.count_nonzero(self.weights))

    def take(self, indices: np.ndarray) -> "EmbeddingSet":
        """按行索引取子集，结果不带权重。"""
        return EmbeddingSet(self.data[np.asarray(indices)])

    @property
    def nbytes(self) -> int:
        return int(self.data.nbytes + (self.weights.nbytes if self.weights is not None else 0))


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    """嵌入集合的均值 μ 与协方差 Σ"""
    mean: np.ndarray
    cov: np.ndarray
    n_source: int

    def __post_init__(self):
        mean = _frozen_array(self.mean)
        cov = _frozen_array(self.cov)
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise DimensionMismatchError(f"summary shapes disagree: mean {mean.shape}, cov {cov.shape}")
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise NonFiniteValueError("non-finite summary")
        scale = 1.0 + float(np.max(np.abs(cov)))
        if float(np.max(np.abs(cov - cov.T))) > 1e-10 * scale:
            raise InvalidParameterError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def d(self) -> int:
        return int(self.mean.shape[0])


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """特征值降序排列，特征向量按列存放"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int


# ---------------------------------
# 最优传输配置实体 (Transport Entities)
# ---------------------------------

@dataclass(frozen=True, eq=False)
class ProjectionSet:
    """M 个 d 维单位方向，由 (seed, M, d) 唯一确定"""
    directions: np.ndarray
    seed: int

    @property
    def M(self) -> int:
        return int(self.directions.shape[0])

    @property
    def d(self) -> int:
        return int(self.directions.shape[1])


@dataclass
class MindConfig:
    projections: int = 1000
    # None 表示 auto，即 α = 3d
    alpha: Optional[float] = None
    seed: int = 0
    block_size: int = 128
    threads: int = 1

    def __post_init__(self):
        if self.projections < 1:
            raise InvalidParameterError(f"projection count must be >= 1, got {self.projections}")
        if self.alpha is not None and not self.alpha > 0:
            raise InvalidParameterError(f"alpha must be > 0, got {self.alpha}")
        if self.block_size < 1 or self.threads < 1:
            raise InvalidParameterError("block_size and threads must be >= 1")

    def resolve_alpha(self, d: int) -> float:
        return float(3 * d) if self.alpha is None else float(self.alpha)


@dataclass
class SinkhornConfig:
    # None 表示 auto，即 epsilon_scale · mean(C)
    epsilon: Optional[float] = None
    epsilon_scale: float = 0.05
    max_iter: int = 2000
    tol: float = 1e-6
    split_correction: bool = True
    seed: int = 0
    # 从 max(C) 逐级减小 ε 并沿用对偶势
    annealing: bool = True

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise InvalidParameterError(f"sinkhorn epsilon must be > 0, got {self.epsilon}")
        if not self.epsilon_scale > 0:
            raise InvalidParameterError(f"epsilon_scale must be > 0, got {self.epsilon_scale}")
        if not self.tol > 0:
            raise InvalidParameterError(f"sinkhorn tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter must be >= 1")


@dataclass
class MomentMetricConfig:
    metric: str = "fid"
    projections: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.metric not in ("fid", "mufid", "sigmafid"):
            raise InvalidParameterError(f"unknown moment metric {self.metric!r}")
        if self.metric == "sigmafid" and self.projections < 1:
            raise InvalidParameterError("sigmafid needs at least one projection")


@dataclass
class MmdConfig:
    # None 表示使用中位数启发式
    sigma: Optional[float] = None
    estimator: str = "u"
    tile_size: int = 1024
    full_matrix: bool = False
    median_max_points: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.sigma is not None and not self.sigma > 0:
            raise InvalidParameterError(f"mmd sigma must be > 0, got {self.sigma}")
        if self.estimator not in ("u", "v"):
            raise InvalidParameterError(f"mmd estimator must be 'u' or 'v', got {self.estimator!r}")
        if self.tile_size < 1 or self.median_max_points < 2:
            raise InvalidParameterError("tile_size must be >= 1 and median_max_points >= 2")


# ---------------------------------
# 攻击实体 (Hacking Entities)
# ---------------------------------

@dataclass(frozen=True, eq=False)
class WeightedPointSet:
    """
    矩匹配构造得到的离散分布：前 r 行为 μ + α u_i，后 r 行为 μ − α u_i。
    alpha_scale 即 √tr(Σ)，与 MIND 的缩放系数无关。
    """
    points: np.ndarray
    weights: np.ndarray
    alpha_scale: float
    rank: int

    def as_embedding_set(self) -> EmbeddingSet:
        return EmbeddingSet(self.points, self.weights)


@dataclass
class AttackResult:
    t_grid: List[float]
    metrics: Dict[str, List[float]]
    ratios: Dict[str, float]
    seeds: Dict[str, int] = field(default_factory=dict)
    configs: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ---------------------------------
# 统计检验实体 (Harness Entities)
# ---------------------------------

@dataclass
class TrialPlan:
    n: int
    trials: int = 512
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameterError(f"trial sample size must be >= 1, got {self.n}")
        if self.trials < 1:
            raise InvalidParameterError(f"trial count must be >= 1, got {self.trials}")
        if self.threads < 1:
            raise InvalidParameterError("threads must be >= 1")


@dataclass
class ErrorProbability:
    estimate: float
    trials: int
    failures: int
    wilson_ci: Tuple[float, float]
    # 每次试验的指标取值，用于画出试验直方图
    trial_values: List[List[float]] = field(default_factory=list)

    def to_dict(self, include_trials: bool = False) -> Dict[str, Any]:
        result = {
            "estimate": self.estimate,
            "trials": self.trials,
            "failures": self.failures,
            "ci_lo": self.wilson_ci[0],
            "ci_hi": self.wilson_ci[1],
        }
        if include_trials:
            result["trial_values"] = self.trial_values
        return result


@dataclass
class HarnessRow:
    """结果表中的一行（长格式）"""
    experiment: str
    metric: str
    n: int
    trials: int
    estimate: float
    ci_lo: float
    ci_hi: float
    seed: int


# ---------------------------------
# 基准测试与报告实体 (Bench & Report Entities)
# ---------------------------------

@dataclass
class BenchRecord:
    metric: str
    n: int
    d: int
    param: str
    reps: int
    threads: int
    t_median_s: float
    t_min_s: float
    t_max_s: float
    peak_bytes: int
    memory_method: str = "tracemalloc"
    input_bytes: int = 0

    def __post_init__(self):
        if self.reps < 3:
            raise InvalidParameterError(f"bench needs reps >= 3, got {self.reps}")


@dataclass
class MetricValue:
    """指标插件的返回值：最终值、未截断的原始值、标记以及解析后的配置"""
    value: float
    raw_value: Optional[float] = None
    flags: List[str] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)


@dataclass
class MetricReport:
    metric: str
    value: float
    flags: List[str]
    config: Dict[str, Any]
    n_a: int
    n_b: int
    d: int
    walltime_s: float
    raw_value: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
