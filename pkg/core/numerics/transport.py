"""
一维精确最优传输（排序）、随机投影、切片 Wasserstein 与熵正则 Sinkhorn。
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from ..domain.errors import (
    DimensionMismatchError,
    InvalidParameterError,
    NegativeWeightError,
    NonFiniteValueError,
    WeightSumError,
)
from ..domain.models import EmbeddingSet, MindConfig, ProjectionSet, SinkhornConfig, WEIGHT_SUM_TOL
from ..logger import logger
from ..utils import make_rng

# Sinkhorn 每隔多少次迭代检查一次边缘约束
SINKHORN_CHECK_EVERY = 10
# ε 退火时相邻两级 ε 的比例
SINKHORN_ANNEAL_FACTOR = 0.5


def _as_vector(values, what: str) -> np.ndarray:
    vector = np.asarray(values, dtype=np.float64).ravel()
    if vector.size < 1:
        raise InvalidParameterError(f"{what} must not be empty")
    if not np.isfinite(vector).all():
        raise NonFiniteValueError(f"non-finite entries in {what}")
    return vector


# ---------------------------------
# 一维最优传输
# ---------------------------------

def w2_1d(x, y) -> float:
    """等长一维样本之间的平方 2-Wasserstein：排序后逐对作差取均方。"""
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    if x.shape != y.shape:
        raise DimensionMismatchError(f"length mismatch: {x.size} vs {y.size}")
    diff = np.sort(x) - np.sort(y)
    return float(np.mean(diff * diff))


def _cumulative(sorted_weights: np.ndarray) -> np.ndarray:
    cumulative = np.cumsum(sorted_weights)
    cumulative[-1] = 1.0
    return np.minimum(cumulative, 1.0)


def _quantile_cost(xs: np.ndarray, cx: np.ndarray, ys: np.ndarray, cy: np.ndarray) -> float:
    """
    对齐两个分位数函数：在合并后的 CDF 断点区间上，两边的分位数都是常数。
    xs/ys 已排序，cx/cy 为对应的累积权重（末项为 1）。
    """
    breaks = np.union1d(cx, cy)
    lower = np.concatenate(([0.0], breaks[:-1]))
    widths = breaks - lower
    mids = lower + widths / 2.0
    ix = np.minimum(np.searchsorted(cx, mids, side="left"), xs.size - 1)
    iy = np.minimum(np.searchsorted(cy, mids, side="left"), ys.size - 1)
    diff = xs[ix] - ys[iy]
    return float(np.dot(widths, diff * diff))


def _check_weights(weights: np.ndarray, size: int, what: str) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if weights.size != size:
        raise DimensionMismatchError(f"{what} has {weights.size} entries for {size} points")
    if (weights < 0).any():
        raise NegativeWeightError(f"negative entries in {what}", row=int(np.argmax(weights < 0)))
    total = float(weights.sum())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise WeightSumError(f"{what} sum to {total!r}, expected 1")
    return weights


def w2_1d_weighted(x, wx, y, wy) -> float:
    """两个加权一维离散测度之间精确的平方 2-Wasserstein。"""
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    wx = _check_weights(wx, x.size, "wx")
    wy = _check_weights(wy, y.size, "wy")
    order_x = np.argsort(x, kind="stable")
    order_y = np.argsort(y, kind="stable")
    return _quantile_cost(x[order_x], _cumulative(wx[order_x]),
                          y[order_y], _cumulative(wy[order_y]))


# ---------------------------------
# 随机投影
# ---------------------------------

# 方向按固定大小的块生成，第 k 块只依赖 (seed, k, d)
DIRECTION_CHUNK = 256


def _directions(M: int, d: int, seed: int) -> np.ndarray:
    chunks = []
    for k in range(-(-M // DIRECTION_CHUNK)):
        block = make_rng(seed, "directions", k).standard_normal((DIRECTION_CHUNK, d))
        norms = np.sqrt(np.einsum("ij,ij->i", block, block))
        # 零向量的概率为 0，出现时按行重抽
        for i in np.flatnonzero(norms == 0.0):
            redraw = make_rng(seed, "directions", k, int(i))
            while norms[i] == 0.0:
                block[i] = redraw.standard_normal(d)
                norms[i] = math.sqrt(float(np.dot(block[i], block[i])))
        chunks.append(block / norms[:, None])
    rows = np.concatenate(chunks)[:M].copy()
    rows.setflags(write=False)
    return rows


def sample_directions(M: int, d: int, seed: int) -> ProjectionSet:
    """在单位球面上均匀采样 M 个方向（标准正态向量归一化）"""
    if M < 1 or d < 1:
        raise InvalidParameterError(f"need M >= 1 and d >= 1, got M={M}, d={d}")
    return ProjectionSet(directions=_directions(int(M), int(d), int(seed)), seed=int(seed))


# ---------------------------------
# 切片 Wasserstein
# ---------------------------------

def _uniform_block(a: np.ndarray, b: np.ndarray, directions: np.ndarray) -> np.ndarray:
    projected_a = a @ directions.T
    projected_b = b @ directions.T
    projected_a.sort(axis=0)
    projected_b.sort(axis=0)
    diff = projected_a - projected_b
    return np.mean(diff * diff, axis=0)


def _weighted_block(a: np.ndarray, wa: np.ndarray, b: np.ndarray, wb: np.ndarray,
                    directions: np.ndarray) -> np.ndarray:
    projected_a = a @ directions.T
    projected_b = b @ directions.T
    values = np.empty(directions.shape[0], dtype=np.float64)
    for j in range(directions.shape[0]):
        order_a = np.argsort(projected_a[:, j], kind="stable")
        order_b = np.argsort(projected_b[:, j], kind="stable")
        values[j] = _quantile_cost(projected_a[order_a, j], _cumulative(wa[order_a]),
                                   projected_b[order_b, j], _cumulative(wb[order_b]))
    return values


def projected_w2(set_a: EmbeddingSet, set_b: EmbeddingSet, proj: ProjectionSet,
                 block_size: int = 128, threads: int = 1) -> np.ndarray:
    """
    返回每个投影方向上的 W₂²，长度为 M。

    方向按固定大小分块，块的划分与线程数无关，所以结果与并行度无关。
    任一集合带权重时走加权一维 OT（此时不要求 n 相等）。
    """
    if set_a.d != set_b.d or set_a.d != proj.d:
        raise DimensionMismatchError(
            f"dimension mismatch: A has d={set_a.d}, B has d={set_b.d}, projections d={proj.d}")
    weighted = set_a.is_weighted or set_b.is_weighted
    if not weighted and set_a.n != set_b.n:
        raise DimensionMismatchError(
            f"unequal unweighted sizes: n_A={set_a.n}, n_B={set_b.n}; pass weights to compare unequal sizes")

    directions = proj.directions
    starts = list(range(0, proj.M, block_size))

    def run_block(start: int) -> np.ndarray:
        block = directions[start:start + block_size]
        if weighted:
            return _weighted_block(set_a.data, set_a.effective_weights(),
                                   set_b.data, set_b.effective_weights(), block)
        return _uniform_block(set_a.data, set_b.data, block)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = list(pool.map(run_block, starts))
    else:
        blocks = [run_block(start) for start in starts]
    return np.concatenate(blocks)


def sliced_w2(set_a: EmbeddingSet, set_b: EmbeddingSet, proj: ProjectionSet,
              block_size: int = 128, threads: int = 1) -> float:
    """(1/M)·Σ_i W₂²(u_iᵀA, u_iᵀB)，按方向序号归约"""
    return float(np.mean(projected_w2(set_a, set_b, proj, block_size=block_size, threads=threads)))


def mind(set_a: EmbeddingSet, set_b: EmbeddingSet, cfg: MindConfig) -> float:
    """α · sliced_w2，α 缺省为 3d。结果是平方量，不开根号。"""
    proj = sample_directions(cfg.projections, set_a.d, cfg.seed)
    return cfg.resolve_alpha(set_a.d) * sliced_w2(set_a, set_b, proj,
                                                   block_size=cfg.block_size, threads=cfg.threads)


# ---------------------------------
# 熵正则最优传输
# ---------------------------------

@dataclass
class SinkhornResult:
    cost: float
    epsilon: float
    iterations: int
    marginal_error: float
    converged: bool


def resolve_epsilon(cost_matrix: np.ndarray, cfg: SinkhornConfig) -> float:
    if cfg.epsilon is not None:
        return float(cfg.epsilon)
    return cfg.epsilon_scale * float(cost_matrix.mean())


def annealing_schedule(cost_matrix: np.ndarray, epsilon: float) -> List[float]:
    """从 max(C) 开始按固定比例递减到目标 ε 的各级 ε，最后一级恰为目标值"""
    schedule = []
    level = float(cost_matrix.max())
    while level * SINKHORN_ANNEAL_FACTOR > epsilon:
        level *= SINKHORN_ANNEAL_FACTOR
        schedule.append(level)
    schedule.append(float(epsilon))
    return schedule


def _sinkhorn_iterate(cost_matrix: np.ndarray, log_a: np.ndarray, log_b: np.ndarray, wa: np.ndarray,
                      f: np.ndarray, g: np.ndarray, epsilon: float, max_iter: int, tol: float):
    plan = None
    error = math.inf
    iteration = 0
    for iteration in range(1, max_iter + 1):
        f = -epsilon * logsumexp((g[None, :] - cost_matrix) / epsilon + log_b[None, :], axis=1)
        g = -epsilon * logsumexp((f[:, None] - cost_matrix) / epsilon + log_a[:, None], axis=0)
        if iteration % SINKHORN_CHECK_EVERY == 0 or iteration == max_iter:
            plan = np.exp((f[:, None] + g[None, :] - cost_matrix) / epsilon
                          + log_a[:, None] + log_b[None, :])
            # g 刚更新过，列边缘精确成立，只需检查行边缘
            error = float(np.max(np.abs(plan.sum(axis=1) - wa)))
            if error <= tol:
                return f, g, plan, iteration, error, True
    return f, g, plan, iteration, error, False


def _sinkhorn_log(cost_matrix: np.ndarray, wa: np.ndarray, wb: np.ndarray, epsilon: float, max_iter: int,
                  tol: float, annealing: bool = True) -> Tuple[np.ndarray, int, float, bool]:
    """
    对数域交替缩放，返回传输计划、总迭代次数、最大边缘误差与是否收敛。

    开启退火时先在较大的 ε 上求解，再以对偶势为初值逐级减小 ε；
    每一级最多 max_iter 次迭代，收敛判定只看最后一级。
    """
    with np.errstate(divide="ignore"):
        log_a = np.log(wa)
        log_b = np.log(wb)
    f = np.zeros(wa.size)
    g = np.zeros(wb.size)
    schedule = annealing_schedule(cost_matrix, epsilon) if annealing else [float(epsilon)]
    total = 0
    for level in schedule:
        f, g, plan, iterations, error, converged = _sinkhorn_iterate(
            cost_matrix, log_a, log_b, wa, f, g, level, max_iter, tol)
        total += iterations
    return plan, total, error, converged


def sinkhorn_cost(set_a: EmbeddingSet, set_b: EmbeddingSet, cfg: SinkhornConfig) -> SinkhornResult:
    """
    熵正则 OT 收敛计划下的传输代价 ⟨π, C⟩，C 为平方欧氏距离，不含熵项。

    不收敛时仍返回数值，并在结果中标记 converged=False。
    """
    if set_a.d != set_b.d:
        raise DimensionMismatchError(f"dimension mismatch: {set_a.d} vs {set_b.d}")
    cost_matrix = cdist(set_a.data, set_b.data, "sqeuclidean")
    if float(cost_matrix.max()) == 0.0:
        # 所有点重合，任何耦合的代价都是 0
        eps = float(cfg.epsilon) if cfg.epsilon is not None else 0.0
        return SinkhornResult(cost=0.0, epsilon=eps, iterations=0, marginal_error=0.0, converged=True)
    epsilon = resolve_epsilon(cost_matrix, cfg)
    if not epsilon > 0:
        raise InvalidParameterError(f"sinkhorn epsilon must be > 0, got {epsilon}")

    plan, iterations, error, converged = _sinkhorn_log(
        cost_matrix, set_a.effective_weights(), set_b.effective_weights(),
        epsilon, cfg.max_iter, cfg.tol, annealing=cfg.annealing)
    if not converged:
        logger.warning(f"Sinkhorn 在 {iterations} 次迭代后未收敛，边缘误差 {error:.3e} > tol {cfg.tol:.1e}")
    cost = float(np.sum(plan * cost_matrix))
    return SinkhornResult(cost=cost, epsilon=epsilon, iterations=iterations,
                          marginal_error=error, converged=converged)


def _halves(embeddings: EmbeddingSet, seed: int, role: str) -> Tuple[EmbeddingSet, EmbeddingSet]:
    """带种子打乱后取前后两半"""
    if embeddings.n % 2 != 0:
        raise InvalidParameterError(f"split correction needs an even sample count, got n={embeddings.n}")
    order = make_rng(seed, "split", role).permutation(embeddings.n)
    half = embeddings.n // 2
    return embeddings.take(order[:half]), embeddings.take(order[half:])


@dataclass
class SinkhornDivergenceResult:
    value: float
    epsilon: float
    split_correction: bool
    converged: bool
    terms: List[SinkhornResult]


def sinkhorn_divergence(set_a: EmbeddingSet, set_b: EmbeddingSet,
                        cfg: SinkhornConfig) -> SinkhornDivergenceResult:
    """
    W_ε(A₁,B₁) − ½W_ε(A₁,A₂) − ½W_ε(B₁,B₂)。

    开启 split_correction 时，两个集合各自打乱后对半切分，修正项取自独立的两半；
    关闭时使用同一样本的自项。带权重的输入无法对半切分，自动退回不切分。
    """
    split = cfg.split_correction
    if split and (set_a.is_weighted or set_b.is_weighted):
        logger.warning("输入带权重，Sinkhorn 散度的对半修正已关闭，改用同样本自项。")
        split = False

    if split:
        a1, a2 = _halves(set_a, cfg.seed, "a")
        b1, b2 = _halves(set_b, cfg.seed, "b")
    else:
        a1, a2 = set_a, set_a
        b1, b2 = set_b, set_b

    cross = sinkhorn_cost(a1, b1, cfg)
    # 自项沿用交叉项的 ε
    fixed = SinkhornConfig(epsilon=cross.epsilon if cross.epsilon > 0 else None,
                           epsilon_scale=cfg.epsilon_scale, max_iter=cfg.max_iter,
                           tol=cfg.tol, split_correction=False, seed=cfg.seed,
                           annealing=cfg.annealing)
    self_a = sinkhorn_cost(a1, a2, fixed)
    self_b = sinkhorn_cost(b1, b2, fixed)
    value = cross.cost - 0.5 * self_a.cost - 0.5 * self_b.cost
    terms = [cross, self_a, self_b]
    return SinkhornDivergenceResult(value=value, epsilon=cross.epsilon, split_correction=split,
                                    converged=all(t.converged for t in terms), terms=terms)
