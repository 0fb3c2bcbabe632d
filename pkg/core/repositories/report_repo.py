import csv
import io
import json
import math
from dataclasses import asdict
from typing import Any, Dict, List

import numpy as np

from .abstract_repository import AbstractReportRepository
from ..domain.errors import BenchReportError, EmbeddingIOError
from ..domain.models import BenchRecord, HarnessRow

HARNESS_COLUMNS = ["experiment", "metric", "n", "trials", "estimate", "ci_lo", "ci_hi", "seed"]
BENCH_COLUMNS = ["metric", "n", "d", "param", "reps", "threads",
                 "t_median_s", "t_min_s", "t_max_s", "peak_bytes"]
# 追加在固定列之后；缺少该列的旧报告读回为 unknown
BENCH_EXTRA_COLUMNS = ["memory_method"]
UNKNOWN_MEMORY_METHOD = "unknown"
_BENCH_INT_COLUMNS = {"n", "d", "reps", "threads", "peak_bytes"}
_BENCH_FLOAT_COLUMNS = {"t_median_s", "t_min_s", "t_max_s"}


def _json_default(obj: Any):
    """numpy 标量与数组转为原生类型"""
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"object of type {type(obj).__name__} is not JSON serializable")


def _cell(value: Any) -> str:
    # repr 给出最短的可逆十进制表示，读回后逐位一致
    if isinstance(value, float):
        return repr(value)
    return str(value)


class FileReportRepository(AbstractReportRepository):
    """把报告写成 JSON / CSV 文件的仓储实现"""

    def dumps_json(self, document: Dict[str, Any]) -> str:
        return json.dumps(document, ensure_ascii=False, indent=2, default=_json_default)

    def write_text(self, text: str, path: str) -> None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as e:
            raise EmbeddingIOError(f"cannot write report: {e}", path=path) from e

    def write_json(self, document: Dict[str, Any], path: str) -> None:
        self.write_text(self.dumps_json(document) + "\n", path)

    def _dumps_table(self, columns: List[str], rows: List[Dict[str, Any]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[column]) for column in columns])
        return buffer.getvalue()

    def dumps_harness_csv(self, rows: List[HarnessRow]) -> str:
        return self._dumps_table(HARNESS_COLUMNS, [asdict(row) for row in rows])

    def dumps_bench_csv(self, records: List[BenchRecord]) -> str:
        return self._dumps_table(BENCH_COLUMNS + BENCH_EXTRA_COLUMNS, [asdict(record) for record in records])

    # --- 基准报告 ---
    def validate_bench_records(self, records: List[BenchRecord]) -> None:
        if not records:
            raise BenchReportError("no bench records to write")
        for record in records:
            timings = (record.t_median_s, record.t_min_s, record.t_max_s)
            if not all(math.isfinite(t) for t in timings):
                raise BenchReportError(f"non-finite timing in record {record.metric} n={record.n} d={record.d}")

    def load_bench_csv(self, path: str) -> List[BenchRecord]:
        try:
            with open(path, "r", encoding="utf-8", newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as e:
            raise EmbeddingIOError(f"cannot read bench report: {e}", path=path) from e
        records = []
        for row in rows:
            values: Dict[str, Any] = {}
            for column in BENCH_COLUMNS:
                raw = row[column]
                if column in _BENCH_INT_COLUMNS:
                    values[column] = int(raw)
                elif column in _BENCH_FLOAT_COLUMNS:
                    values[column] = float(raw)
                else:
                    values[column] = raw
            values["memory_method"] = row.get("memory_method") or UNKNOWN_MEMORY_METHOD
            records.append(BenchRecord(**values))
        return records
