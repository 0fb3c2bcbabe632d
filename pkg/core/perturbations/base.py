from abc import ABC, abstractmethod

from ..domain.models import EmbeddingSet


class BasePerturbation(ABC):
    """所有嵌入扰动的抽象基类（接口）"""

    # 每个子类都必须定义这些属性
    name: str
    description: str

    @abstractmethod
    def apply(self, source: EmbeddingSet, epsilon: float, m: int, seed: int) -> EmbeddingSet:
        """
        从 source 构造强度为 epsilon、大小为 m 的扰动样本。
        同一 (source, epsilon, m, seed) 永远得到相同结果。
        """
        pass
