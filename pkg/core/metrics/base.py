from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict

from ..domain.models import EmbeddingSet, MetricValue


@dataclass
class MetricContext:
    """
    一个数据容器，封装了计算指标时需要的全部运行参数。
    由 MetricService 在调用前填充。
    """
    seed: int
    threads: int
    # 对应 metric_config 中本指标的配置段（已合并覆盖项）
    settings: Dict[str, Any] = field(default_factory=dict)


class BaseMetric(ABC):
    """所有指标插件的抽象基类（接口）"""

    # 每个子类都必须定义这些属性
    name: str
    description: str
    # 读取的 metric_config 配置段名称
    config_section: str
    # 基准报告 param 列使用的参数名，e.g. 'M' / 'sigma' / 'epsilon'
    param_label: str = ""

    @abstractmethod
    def compute(self, set_a: EmbeddingSet, set_b: EmbeddingSet, context: MetricContext) -> MetricValue:
        """
        核心计算逻辑。
        返回 Δ(p̂_A, p̂_B) 以及回显所需的解析后配置。
        """
        pass

    def param_value(self, context: MetricContext, d: int) -> str:
        """基准报告中 param 列的取值，没有可变参数的指标返回空串。"""
        return ""


def optional_number(value: Any, keyword: str = "auto"):
    """配置中的 'auto' / 'median' 等关键字映射为 None，其余转为 float"""
    if value is None:
        return None
    if isinstance(value, str):
        if value.strip().lower() == keyword:
            return None
        return float(value)
    return float(value)
