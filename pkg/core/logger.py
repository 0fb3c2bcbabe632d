import logging
import sys

# 全局共享的日志对象，所有模块通过 `from ..logger import logger` 使用
logger = logging.getLogger("mind_metrics")
logger.addHandler(logging.NullHandler())

LOG_FORMAT = "[%(asctime)s] [%(levelname)s] %(name)s: %(message)s"


def setup_logging(level: int = logging.INFO) -> None:
    """
    为命令行配置日志输出。

    日志只写入 stderr，保证 stdout 在 json 模式下只输出一个 JSON 文档。
    重复调用只会调整级别，不会重复添加 handler。
    """
    for handler in logger.handlers:
        if getattr(handler, "_mind_metrics_cli", False):
            handler.setStream(sys.stderr)
            handler.setLevel(level)
            logger.setLevel(level)
            return

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%H:%M:%S"))
    handler.setLevel(level)
    handler._mind_metrics_cli = True
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False
