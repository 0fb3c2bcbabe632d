from abc import ABC, abstractmethod
from typing import Any, Dict, List

# 从领域模型导入所有需要的实体
from ..domain.models import EmbeddingSet, HarnessRow, BenchRecord


class AbstractEmbeddingRepository(ABC):
    """嵌入文件仓储接口"""
    # 文件格式名称，e.g. 'binary' / 'csv'
    format_name: str = ""
    # 读取并校验一个嵌入文件
    @abstractmethod
    def load(self, path: str) -> EmbeddingSet: pass
    # 写出一个嵌入集合
    @abstractmethod
    def save(self, embeddings: EmbeddingSet, path: str) -> None: pass


class AbstractReportRepository(ABC):
    """结果报告仓储接口"""
    # 序列化为 JSON 文本
    @abstractmethod
    def dumps_json(self, document: Dict[str, Any]) -> str: pass
    # 写出 JSON 文档
    @abstractmethod
    def write_json(self, document: Dict[str, Any], path: str) -> None: pass
    # 序列化统计检验结果表
    @abstractmethod
    def dumps_harness_csv(self, rows: List[HarnessRow]) -> str: pass
    # 序列化基准测试记录
    @abstractmethod
    def dumps_bench_csv(self, records: List[BenchRecord]) -> str: pass
    # 写出文本文件
    @abstractmethod
    def write_text(self, text: str, path: str) -> None: pass
    # 读回基准测试 CSV
    @abstractmethod
    def load_bench_csv(self, path: str) -> List[BenchRecord]: pass
    # 写出前校验基准记录（非空、计时有限）
    @abstractmethod
    def validate_bench_records(self, records: List[BenchRecord]) -> None: pass
