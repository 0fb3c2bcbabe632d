import csv
import io

import numpy as np

from .abstract_repository import AbstractEmbeddingRepository
from ..domain.errors import (
    DimensionMismatchError,
    EmbeddingFormatError,
    EmbeddingIOError,
    MalformedHeaderError,
    NegativeWeightError,
    NonFiniteValueError,
    WeightSumError,
)
from ..domain.models import EmbeddingSet, WEIGHT_SUM_TOL
from ..logger import logger

WEIGHT_COLUMN = "weight"


class CsvEmbeddingRepository(AbstractEmbeddingRepository):
    """
    CSV 格式的嵌入仓储实现。

    第一行为 d 个列名，可选的最后一列名为 weight；之后每行一个样本。
    写出时使用 %.17g，保证读回后逐位一致。
    """

    format_name = "csv"

    def load(self, path: str) -> EmbeddingSet:
        try:
            with open(path, "r", newline="", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as e:
            raise EmbeddingIOError(f"cannot read embedding file: {e}", path=path) from e

        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if not header or not any(name.strip() for name in header):
            raise MalformedHeaderError("missing CSV header", path=path, row=0)
        header = [name.strip() for name in header]
        has_weights = header[-1].lower() == WEIGHT_COLUMN
        d = len(header) - (1 if has_weights else 0)
        if d < 1:
            raise MalformedHeaderError("CSV header declares no embedding columns", path=path, row=0)

        rows = []
        # 行号从 1 开始计数数据行（表头为第 0 行）
        for row_number, record in enumerate(reader, start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DimensionMismatchError(
                    f"expected {len(header)} columns, found {len(record)}", path=path, row=row_number)
            try:
                rows.append([float(cell) for cell in record])
            except ValueError as e:
                raise EmbeddingFormatError(f"unparsable value: {e}", path=path, row=row_number) from e

        if not rows:
            raise DimensionMismatchError("CSV contains a header but no rows", path=path, row=1)
        matrix = np.asarray(rows, dtype=np.float64)
        finite_rows = np.isfinite(matrix).all(axis=1)
        if not finite_rows.all():
            raise NonFiniteValueError("non-finite value", path=path, row=int(np.argmin(finite_rows)) + 1)

        data = matrix[:, :d]
        weights = None
        if has_weights:
            weights = matrix[:, d]
            if (weights < 0).any():
                raise NegativeWeightError("negative weight", path=path, row=int(np.argmax(weights < 0)) + 1)
            total = float(weights.sum())
            if abs(total - 1.0) > WEIGHT_SUM_TOL:
                raise WeightSumError(f"weights sum to {total!r}, expected 1", path=path)

        logger.debug(f"读取 CSV 嵌入 {path}: n={data.shape[0]}, d={d}, weights={has_weights}")
        return EmbeddingSet(data, weights)

    def save(self, embeddings: EmbeddingSet, path: str) -> None:
        columns = [f"x{i}" for i in range(embeddings.d)]
        matrix = embeddings.data
        if embeddings.is_weighted:
            columns.append(WEIGHT_COLUMN)
            matrix = np.column_stack([matrix, embeddings.weights])
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                np.savetxt(fh, matrix, delimiter=",", fmt="%.17g", header=",".join(columns), comments="")
        except OSError as e:
            raise EmbeddingIOError(f"cannot write embedding file: {e}", path=path) from e
        logger.debug(f"写出 CSV 嵌入 {path}: n={embeddings.n}, d={embeddings.d}")
