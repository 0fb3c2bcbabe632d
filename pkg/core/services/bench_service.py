import os
import resource
import statistics
import time
import tracemalloc
from dataclasses import asdict
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..repositories.abstract_repository import AbstractReportRepository
from ..domain.errors import InvalidParameterError, MetricComputationError
from ..domain.models import BenchRecord, EmbeddingSet
from ..logger import logger
from ..utils import derive_seed
from .metric_service import MetricService
from .synthetic_data_service import SyntheticDataService

# 平移量，使两组输入的指标值不为 0
BENCH_MEAN_SHIFT = 0.1


def _measure_tracemalloc(run: Callable[[], Any]) -> int:
    """只在计算期间开启分配追踪，输入缓冲区在开启前已分配，因此不计入"""
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        run()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return int(peak)


def _measure_rss(run: Callable[[], Any]) -> int:
    """进程常驻内存高水位的增量；高水位已在更早时刻达到时结果偏小"""
    before = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    run()
    after = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # Linux 上 ru_maxrss 以 KiB 为单位
    return int(max(after - before, 0) * 1024)


MEMORY_METHODS = {
    "tracemalloc": _measure_tracemalloc,
    "rss_delta": _measure_rss,
}


class BenchService:
    """指标计算的耗时与峰值内存测量（只计计算，不计采样与 I/O）"""

    def __init__(self, metric_service: MetricService, synthetic_service: SyntheticDataService,
                 report_repo: AbstractReportRepository, metric_config: Dict[str, Any]):
        self.metric_service = metric_service
        self.synthetic_service = synthetic_service
        self.report_repo = report_repo
        self.config = metric_config

    def _memory_method(self) -> str:
        method = self.config.get("bench", {}).get("memory_method", "tracemalloc")
        if method not in MEMORY_METHODS:
            raise InvalidParameterError(f"unknown memory method '{method}'")
        return method

    def bench_inputs(self, n: int, d: int, seed: int):
        """为一个 (n, d) 单元生成两组高斯输入，在计时区之外完成"""
        cell_seed = derive_seed(seed, "bench", n, d)
        set_a = self.synthetic_service.gaussian_pool(n, d, derive_seed(cell_seed, "a"))
        set_b = self.synthetic_service.gaussian_pool(n, d, derive_seed(cell_seed, "b"), mean=BENCH_MEAN_SHIFT)
        return set_a, set_b

    def bench_metric(self, metric: str, n_grid: Sequence[int], d_grid: Sequence[int],
                     reps: Optional[int] = None, seed: Optional[int] = None,
                     threads_grid: Optional[Sequence[int]] = None,
                     overrides: Optional[Dict[str, Any]] = None) -> List[BenchRecord]:
        """
        对每个 (n, d, threads) 单元先预热一次，再计时 reps 次，最后单独运行一次测量峰值内存。

        Returns:
            每个单元一条 BenchRecord，median 为主要指标
        """
        reps = int(reps if reps is not None else self.config.get("bench", {}).get("reps", 5))
        if reps < 3:
            raise InvalidParameterError(f"bench needs reps >= 3, got {reps}")
        seed = int(self.config.get("seed", 0) if seed is None else seed)
        if not threads_grid:
            # 默认同时测单线程与配置的线程数
            configured = int(self.config.get("threads", 1))
            threads_grid = [1] if configured <= 1 else [1, configured]
        threads_grid = list(threads_grid)
        method = self._memory_method()
        measure = MEMORY_METHODS[method]
        self.metric_service.get_metric(metric)

        records = []
        for d in d_grid:
            for n in n_grid:
                set_a, set_b = self.bench_inputs(int(n), int(d), seed)
                for threads in threads_grid:
                    cell = {"metric": metric, "n": int(n), "d": int(d), "threads": int(threads)}
                    fn = self.metric_service.metric_function(metric, overrides=overrides, threads=int(threads))

                    def run():
                        return fn(set_a, set_b, seed)

                    try:
                        # 预热，不计入结果
                        run()
                        timings = []
                        for _ in range(reps):
                            start = time.perf_counter()
                            run()
                            timings.append(time.perf_counter() - start)
                        peak = measure(run)
                    except MetricComputationError as e:
                        raise MetricComputationError(metric, e.cause, cell=cell) from e

                    record = BenchRecord(
                        metric=metric, n=int(n), d=int(d),
                        param=self.metric_service.param_value(metric, int(d), overrides),
                        reps=reps, threads=int(threads),
                        t_median_s=float(statistics.median(timings)),
                        t_min_s=float(min(timings)), t_max_s=float(max(timings)),
                        peak_bytes=peak, memory_method=method,
                        input_bytes=set_a.nbytes + set_b.nbytes,
                    )
                    logger.info(f"[bench] {metric} n={n} d={d} threads={threads}: "
                                f"median {record.t_median_s:.4f}s, peak {record.peak_bytes / 2**20:.1f} MiB")
                    records.append(record)
        return records

    def projection_variance(self, set_a: EmbeddingSet, set_b: EmbeddingSet, m_grid: Sequence[int],
                            seeds: Sequence[int]) -> List[Dict[str, Any]]:
        """固定样本，统计 MIND 在不同投影数 M 下跨种子的均值与标准差"""
        rows = []
        for m in m_grid:
            overrides = {"mind": {"projections": int(m)}}
            values = np.array([self.metric_service.evaluate("mind", set_a, set_b, seed=int(s),
                                                            overrides=overrides).value for s in seeds])
            std = float(values.std(ddof=1)) if values.size > 1 else 0.0
            rows.append({"M": int(m), "mean": float(values.mean()), "std": std, "seeds": len(values)})
            logger.info(f"[variance] M={m}: mean={rows[-1]['mean']:.6g}, std={rows[-1]['std']:.3g}")
        return rows

    def emit_bench_report(self, records: List[BenchRecord], path: str) -> List[str]:
        """写出 CSV 与同名 JSON，返回写出的文件路径"""
        self.report_repo.validate_bench_records(records)
        stem, extension = os.path.splitext(path)
        csv_path = path if extension.lower() != ".json" else stem + ".csv"
        json_path = stem + ".json"
        self.report_repo.write_text(self.report_repo.dumps_bench_csv(records), csv_path)
        self.report_repo.write_json({"records": [asdict(record) for record in records]}, json_path)
        logger.info(f"基准报告已写出: {csv_path}, {json_path}")
        return [csv_path, json_path]
