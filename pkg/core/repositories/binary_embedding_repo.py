import struct

import numpy as np

# 导入抽象基类和领域模型
from .abstract_repository import AbstractEmbeddingRepository
from ..domain.errors import (
    DimensionMismatchError,
    EmbeddingIOError,
    InvalidParameterError,
    MalformedHeaderError,
    NegativeWeightError,
    NonFiniteValueError,
    PayloadTruncatedError,
    WeightSumError,
)
from ..domain.models import EmbeddingSet, WEIGHT_SUM_TOL
from ..logger import logger

# 小端序：magic(4) | version u32 | dtype u8 | flags u8 | n u64 | d u64
HEADER = struct.Struct("<4sIBBQQ")
MAGIC = b"EMB1"
VERSION = 1
FLAG_WEIGHTS = 0x01
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
DTYPE_CODES = {"f32": 0, "f64": 1}

# 头部各字段的字节偏移，用于错误定位
OFFSET_VERSION = 4
OFFSET_DTYPE = 8
OFFSET_FLAGS = 9
OFFSET_N = 10
OFFSET_D = 18


class BinaryEmbeddingRepository(AbstractEmbeddingRepository):
    """EMB1 二进制格式的嵌入仓储实现"""

    format_name = "binary"

    def __init__(self, save_dtype: str = "f64"):
        if save_dtype not in DTYPE_CODES:
            raise ValueError(f"unsupported dtype {save_dtype!r}")
        self.save_dtype = save_dtype

    # --- 私有解析辅助方法 ---
    def _parse_header(self, raw: bytes, path: str):
        if len(raw) < HEADER.size:
            raise MalformedHeaderError(f"header truncated: {len(raw)} of {HEADER.size} bytes",
                                       path=path, offset=len(raw))
        magic, version, dtype_code, flags, n, d = HEADER.unpack_from(raw, 0)
        if magic != MAGIC:
            raise MalformedHeaderError(f"bad magic {magic!r}", path=path, offset=0)
        if version != VERSION:
            raise MalformedHeaderError(f"unsupported version {version}", path=path, offset=OFFSET_VERSION)
        if dtype_code not in DTYPES:
            raise MalformedHeaderError(f"unknown dtype code {dtype_code}", path=path, offset=OFFSET_DTYPE)
        if flags & ~FLAG_WEIGHTS:
            raise MalformedHeaderError(f"unknown flag bits 0x{flags:02x}", path=path, offset=OFFSET_FLAGS)
        if n < 1:
            raise MalformedHeaderError("declared n must be >= 1", path=path, offset=OFFSET_N)
        if d < 1:
            raise MalformedHeaderError("declared d must be >= 1", path=path, offset=OFFSET_D)
        return DTYPES[dtype_code], bool(flags & FLAG_WEIGHTS), int(n), int(d)

    def _check_payload(self, raw: bytes, path: str, dtype: np.dtype, has_weights: bool, n: int, d: int) -> None:
        itemsize = dtype.itemsize
        expected = n * d * itemsize + (n * itemsize if has_weights else 0)
        actual = len(raw) - HEADER.size
        if actual < expected:
            complete_rows = min(actual // (d * itemsize), n)
            raise PayloadTruncatedError(
                f"payload truncated: declared n={n}, d={d} needs {expected} bytes, found {actual}",
                path=path, offset=len(raw), row=complete_rows)
        if actual > expected:
            raise DimensionMismatchError(
                f"payload has {actual - expected} bytes beyond declared n={n}, d={d}",
                path=path, offset=HEADER.size + expected)

    def load(self, path: str) -> EmbeddingSet:
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as e:
            raise EmbeddingIOError(f"cannot read embedding file: {e}", path=path) from e

        dtype, has_weights, n, d = self._parse_header(raw, path)
        self._check_payload(raw, path, dtype, has_weights, n, d)
        itemsize = dtype.itemsize

        data = np.frombuffer(raw, dtype=dtype, count=n * d, offset=HEADER.size).reshape(n, d)
        data = data.astype(np.float64)
        bad = ~np.isfinite(data)
        if bad.any():
            flat = int(np.argmax(bad.ravel()))
            raise NonFiniteValueError("non-finite embedding value", path=path,
                                      offset=HEADER.size + flat * itemsize, row=flat // d)

        weights = None
        if has_weights:
            start = HEADER.size + n * d * itemsize
            weights = np.frombuffer(raw, dtype=dtype, count=n, offset=start).astype(np.float64)
            if not np.isfinite(weights).all():
                row = int(np.argmax(~np.isfinite(weights)))
                raise NonFiniteValueError("non-finite weight", path=path, offset=start + row * itemsize, row=row)
            if (weights < 0).any():
                row = int(np.argmax(weights < 0))
                raise NegativeWeightError(f"negative weight {weights[row]!r}", path=path,
                                          offset=start + row * itemsize, row=row)
            total = float(weights.sum())
            if abs(total - 1.0) > WEIGHT_SUM_TOL:
                raise WeightSumError(f"weights sum to {total!r}, expected 1", path=path, offset=start)

        logger.debug(f"读取二进制嵌入 {path}: n={n}, d={d}, dtype={dtype.name}, weights={has_weights}")
        return EmbeddingSet(data, weights)

    def save(self, embeddings: EmbeddingSet, path: str) -> None:
        if embeddings.is_weighted and self.save_dtype != "f64":
            # f32 舍入后权重和可能超出 1e-9 容差
            raise InvalidParameterError("weighted embedding sets must be saved as f64")
        code = DTYPE_CODES[self.save_dtype]
        dtype = DTYPES[code]
        flags = FLAG_WEIGHTS if embeddings.is_weighted else 0
        header = HEADER.pack(MAGIC, VERSION, code, flags, embeddings.n, embeddings.d)
        try:
            with open(path, "wb") as fh:
                fh.write(header)
                fh.write(embeddings.data.astype(dtype).tobytes(order="C"))
                if embeddings.is_weighted:
                    fh.write(embeddings.weights.astype(dtype).tobytes())
        except OSError as e:
            raise EmbeddingIOError(f"cannot write embedding file: {e}", path=path) from e
        logger.debug(f"写出二进制嵌入 {path}: n={embeddings.n}, d={embeddings.d}")
