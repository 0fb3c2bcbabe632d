from typing import Optional


class MindMetricsError(Exception):
    """本项目所有异常的基类"""


# ---------------------------------
# 嵌入文件相关 (embedding-store)
# ---------------------------------

class EmbeddingFormatError(MindMetricsError):
    """嵌入文件内容不符合格式约定，尽量给出字节偏移或行号"""

    def __init__(self, message: str, path: Optional[str] = None,
                 offset: Optional[int] = None, row: Optional[int] = None):
        self.path = path
        self.offset = offset
        self.row = row
        location = []
        if path:
            location.append(f"file={path}")
        if offset is not None:
            location.append(f"offset={offset}")
        if row is not None:
            location.append(f"row={row}")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")


class MalformedHeaderError(EmbeddingFormatError):
    """文件头损坏：魔数、版本、dtype、flags 或表头不合法"""


class PayloadTruncatedError(EmbeddingFormatError):
    """声明的 n·d 大于实际数据量"""


class DimensionMismatchError(EmbeddingFormatError):
    """声明维度与实际数据不一致，或两个集合维度不同"""


class NonFiniteValueError(EmbeddingFormatError):
    """出现 NaN 或 Inf"""


class NegativeWeightError(EmbeddingFormatError):
    """出现负权重"""


class WeightSumError(EmbeddingFormatError):
    """权重之和偏离 1"""


class EmbeddingIOError(MindMetricsError):
    """读写文件时的 I/O 失败"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{message} (file={path})" if path else message)


# ---------------------------------
# 计算相关
# ---------------------------------

class InvalidParameterError(MindMetricsError):
    """参数不满足前置条件"""


class InsufficientSamplesError(MindMetricsError):
    """样本数量不足以完成计算"""


class LinalgError(MindMetricsError):
    """线性代数运算失败或出现非有限中间量"""


class DegenerateBandwidthError(MindMetricsError):
    """中位数启发式得到 0 带宽"""


class UnknownMetricError(MindMetricsError):
    """未注册的指标名称"""


class MetricComputationError(MindMetricsError):
    """指标计算失败，附带指标名称及（可选的）基准单元坐标"""

    def __init__(self, metric: str, cause: Exception, cell: Optional[dict] = None):
        self.metric = metric
        self.cause = cause
        self.cell = cell
        where = f" at {cell}" if cell else ""
        super().__init__(f"metric '{metric}' failed{where}: {cause}")


class BenchReportError(MindMetricsError):
    """基准记录无法写出（空记录或 NaN 计时）"""
