import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..domain.errors import DimensionMismatchError, InsufficientSamplesError, InvalidParameterError
from ..domain.models import AttackResult, EmbeddingSet, GaussianSummary, WeightedPointSet
from ..logger import logger
from ..numerics.linalg import RANK_TOL_SCALE, eigh, summarize
from ..utils import derive_seed, make_rng
from .metric_service import MetricService

ATTACK_METRICS = ("fid", "mufid", "sigmafid", "mmd", "mind", "sinkhorn")


def moment_match_targets(target: GaussianSummary, rank_tol: Optional[float] = None) -> WeightedPointSet:
    """
    构造与给定均值、协方差完全一致的 2r 点离散分布。

    对 Σ 做特征分解 Σ = Σ_i λ_i u_i u_iᵀ，取秩 r 个正特征值：
        v_i^(±) = μ ± α u_i，π_i^(±) = λ_i / (2 Σ_k λ_k)，α = √(Σ_k λ_k)
    其中 Σ_k λ_k 为保留特征值之和（满秩时即 tr(Σ)）。
    于是加权均值为 μ，加权协方差为 Σ_i 2π_i α² u_i u_iᵀ = Σ，两个分布的 FID 为 0。
    """
    trace = float(np.trace(target.cov))
    if not trace > 0.0:
        raise InvalidParameterError(f"moment matching needs a covariance with positive trace, got {trace}")

    decomposition = eigh(target.cov, rank_tol=rank_tol)
    r = decomposition.rank
    if r < 1:
        raise InvalidParameterError("covariance has no eigenvalue above the rank tolerance")
    eigenvalues = decomposition.eigenvalues[:r]
    directions = decomposition.eigenvectors[:, :r].T
    kept = float(eigenvalues.sum())
    alpha = math.sqrt(kept)

    offsets = alpha * directions
    points = np.concatenate([target.mean + offsets, target.mean - offsets])
    half = eigenvalues / (2.0 * kept)
    weights = np.concatenate([half, half])
    logger.debug(f"矩匹配目标: d={target.d}, rank={r}, alpha={alpha:.6g}")
    return WeightedPointSet(points=points, weights=weights, alpha_scale=alpha, rank=r)


def attack_assignment(size: int, seed: int) -> np.ndarray:
    """第 j 行攻击样本对应的目标点序号 τ(j)，为带种子的随机双射"""
    return make_rng(seed, "assignment").permutation(size)


def prepare_initial(initial: EmbeddingSet, size: int, seed: int) -> np.ndarray:
    """把初始集合调整为 size 行：多则无放回抽取，少则按顺序循环复制"""
    if initial.n == size:
        return initial.data
    if initial.n > size:
        keep = make_rng(seed, "prepare").choice(initial.n, size=size, replace=False)
        return initial.data[np.sort(keep)]
    return initial.data[np.arange(size) % initial.n]


def embed_attack(initial: EmbeddingSet, targets: WeightedPointSet, t: float,
                 assignment_seed: int) -> EmbeddingSet:
    """
    在嵌入空间中直接把初始样本插值到矩匹配目标：
    第 j 行为 (1−t)·x_j + t·v_{τ(j)}，权重为 π_{τ(j)}。

    t=0 得到（重排、带权的）初始嵌入；t=1 逐位复现目标点。
    """
    if initial.n < 1:
        raise InsufficientSamplesError("attack needs a non-empty initial set")
    if initial.d != targets.points.shape[1]:
        raise DimensionMismatchError(f"dimension mismatch: initial d={initial.d}, targets d={targets.points.shape[1]}")
    if not 0.0 <= t <= 1.0:
        raise InvalidParameterError(f"interpolation level must lie in [0, 1], got {t}")

    size = targets.points.shape[0]
    rows = prepare_initial(initial, size, assignment_seed)
    tau = attack_assignment(size, assignment_seed)
    moved = (1.0 - t) * rows + t * targets.points[tau]
    return EmbeddingSet(moved, targets.weights[tau])


class HackingService:
    """矩匹配攻击与各指标的鲁棒性扫描"""

    def __init__(self, metric_service: MetricService, metric_config: Dict[str, Any]):
        self.metric_service = metric_service
        self.config = metric_config

    def _check_grid(self, t_grid: Sequence[float]) -> List[float]:
        grid = [float(t) for t in t_grid]
        if not grid or grid[0] != 0.0 or grid[-1] != 1.0:
            raise InvalidParameterError(f"t grid must start at 0 and end at 1, got {grid}")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidParameterError(f"t grid must be strictly increasing, got {grid}")
        return grid

    def _frozen_overrides(self, name: str, details: Dict[str, Any]) -> Dict[str, Any]:
        """
        沿 t 轴固定数据相关的超参数：MMD 带宽与 Sinkhorn 的 ε 取基线行的值，
        Sinkhorn 一律不做对半修正（攻击样本带权重）。
        """
        if name == "mmd":
            return {"mmd": {"sigma": details["sigma"]}}
        if name == "sinkhorn":
            frozen = {"split_correction": False}
            if details.get("epsilon", 0.0) > 0.0:
                frozen["epsilon"] = details["epsilon"]
            return {"sinkhorn": frozen}
        return {}

    def robustness_sweep(self, data: EmbeddingSet, initial: EmbeddingSet, metrics: Sequence[str],
                         t_grid: Optional[Sequence[float]] = None, seed: Optional[int] = None,
                         overrides: Optional[Dict[str, Any]] = None,
                         threads: Optional[int] = None) -> AttackResult:
        """
        对每个 t 生成攻击样本并与 data 比较。

        Args:
            data: 参考分布（矩匹配的目标）
            initial: 攻击的起点
            metrics: 参与比较的指标名称
            t_grid: 插值级别，必须从 0 开始、到 1 结束
            seed: 主种子，派生出攻击分配与指标使用的子种子

        Returns:
            AttackResult，ratio = value(t=1) / value(t=0)
        """
        # 1. 参数与种子
        grid = self._check_grid(t_grid if t_grid is not None else self.config.get("attack", {}).get(
            "t_grid", [0.0, 0.25, 0.5, 0.75, 1.0]))
        if data.d != initial.d:
            raise DimensionMismatchError(f"dimension mismatch: data d={data.d}, initial d={initial.d}")
        for name in metrics:
            self.metric_service.get_metric(name)
        master = int(self.config.get("seed", 0) if seed is None else seed)
        workers = int(self.config.get("threads", 1) if threads is None else threads)
        seeds = {"master": master,
                 "assignment": derive_seed(master, "assignment"),
                 "metric": derive_seed(master, "metric")}

        # 2. 构造矩匹配目标
        summary = summarize(data)
        rank_tol_scale = float(self.config.get("linalg", {}).get("rank_tol_scale", RANK_TOL_SCALE))
        targets = moment_match_targets(summary, rank_tol=rank_tol_scale * float(np.trace(summary.cov)))
        logger.info(f"矩匹配目标已生成: rank={targets.rank}，共 {targets.points.shape[0]} 个点")

        # 3. 基线行 (t=0)：直接比较 initial 与 data，并固定后续行的超参数
        base_overrides = dict(overrides or {})
        sinkhorn_base = dict(base_overrides.get("sinkhorn", {}))
        sinkhorn_base["split_correction"] = False
        base_overrides["sinkhorn"] = sinkhorn_base

        values: Dict[str, List[float]] = {name: [math.nan] * len(grid) for name in metrics}
        frozen: Dict[str, Dict[str, Any]] = {}
        configs: Dict[str, Any] = {}
        for name in metrics:
            baseline = self.metric_service.evaluate(name, initial, data, seed=seeds["metric"],
                                                    overrides=base_overrides, threads=1)
            values[name][0] = baseline.value
            row_overrides = dict(base_overrides)
            for section, pinned in self._frozen_overrides(name, baseline.details).items():
                row_overrides[section] = {**row_overrides.get(section, {}), **pinned}
            frozen[name] = row_overrides
            metric = self.metric_service.get_metric(name)
            echo = dict(self.metric_service.build_context(metric, seed=seeds["metric"],
                                                          overrides=row_overrides).settings)
            echo.update(baseline.details)
            configs[name] = echo

        # 4. 其余各行按 (t, metric) 并行
        attacked = {i: embed_attack(initial, targets, grid[i], seeds["assignment"]) for i in range(1, len(grid))}
        cells = [(i, name) for i in range(1, len(grid)) for name in metrics]

        def run_cell(cell):
            i, name = cell
            return self.metric_service.evaluate(name, attacked[i], data, seed=seeds["metric"],
                                                overrides=frozen[name], threads=1).value

        if workers > 1 and len(cells) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_cell, cells))
        else:
            results = [run_cell(cell) for cell in cells]
        for (i, name), value in zip(cells, results):
            values[name][i] = value

        # 5. 比值
        ratios: Dict[str, Optional[float]] = {}
        for name in metrics:
            start, end = values[name][0], values[name][-1]
            ratios[name] = end / start if start != 0.0 else None
            logger.info(f"{name}: t=0 -> {start:.6g}, t=1 -> {end:.6g}, ratio={ratios[name]}")

        configs["ratio_definition"] = "value(attacked@t=1, data) / value(initial, data)"
        configs["rank"] = targets.rank
        return AttackResult(t_grid=grid, metrics=values, ratios=ratios, seeds=seeds, configs=configs)
