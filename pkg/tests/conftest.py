import numpy as np
import pytest

from core.domain.models import EmbeddingSet
from core.services.metric_service import MetricService
from main import load_schema_defaults


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def metric_config():
    """_conf_schema.json 中的默认配置"""
    return load_schema_defaults()


@pytest.fixture
def metric_service(metric_config):
    return MetricService(metric_config)


@pytest.fixture
def gaussian_pair(rng):
    """两组 n=200, d=4 的高斯样本，B 的均值平移 0.5"""
    set_a = EmbeddingSet(rng.standard_normal((200, 4)))
    set_b = EmbeddingSet(rng.standard_normal((200, 4)) + 0.5)
    return set_a, set_b



def _drop_cli_log_handler():
    """测试隔离：移除 setup_logging 添加的 handler，避免其持有 pytest 已关闭的捕获流"""
    from core.logger import logger
    for handler in list(logger.handlers):
        if getattr(handler, "_mind_metrics_cli", False):
            logger.removeHandler(handler)


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_call(item):
    # fixture 阶段（如 preset_files 调用 main）绑定的 stderr 在测试主体运行前已被 pytest 关闭
    _drop_cli_log_handler()


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_teardown(item):
    _drop_cli_log_handler()
