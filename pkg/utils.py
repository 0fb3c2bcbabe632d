from typing import Any, Dict, List, Optional

from core.domain.models import AttackResult, BenchRecord, HarnessRow, MetricReport


def to_percentage(value: Optional[float]) -> str:
    """将比例转换为百分比字符串"""
    if value is None:
        return "n/a"
    return f"{value * 100:.2f}%"


def parse_float_list(text: str) -> List[float]:
    """解析逗号分隔的浮点数列表，如 '0.01,0.03,0.05'"""
    items = [item.strip() for item in str(text).split(",") if item.strip()]
    if not items:
        raise ValueError(f"empty list: {text!r}")
    return [float(item) for item in items]


def parse_int_list(text: str) -> List[int]:
    """解析逗号分隔的整数列表，支持 1k / 10k 这样的写法"""
    values = []
    for item in str(text).split(","):
        item = item.strip().lower()
        if not item:
            continue
        multiplier = 1
        if item.endswith("k"):
            multiplier, item = 1000, item[:-1]
        values.append(int(float(item) * multiplier))
    if not values:
        raise ValueError(f"empty list: {text!r}")
    return values


def parse_on_off(text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("on", "true", "1", "yes"):
        return True
    if value in ("off", "false", "0", "no"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def parse_positive_or_keyword(text: str, keyword: str):
    """'auto' / 'median' 之类的关键字原样返回，其余必须是正数"""
    value = str(text).strip().lower()
    if value == keyword:
        return keyword
    try:
        number = float(value)
    except ValueError:
        raise ValueError(f"expected '{keyword}' or a positive number, got {text!r}") from None
    if not number > 0 or number == float("inf"):
        raise ValueError(f"expected '{keyword}' or a positive number, got {text!r}")
    return number


def _format_config(config: Dict[str, Any]) -> str:
    return ", ".join(f"{key}={value}" for key, value in sorted(config.items()))


def format_report_text(report: Any) -> str:
    """把各类结果渲染为便于阅读的文本"""
    if isinstance(report, MetricReport):
        message = f"📏 指标: {report.metric}\n"
        message += f" - 数值: {report.value:.6g}\n"
        if report.raw_value is not None and report.raw_value != report.value:
            message += f" - 原始值: {report.raw_value:.6g}\n"
        message += f" - 样本: n_A={report.n_a}, n_B={report.n_b}, d={report.d}\n"
        message += f" - 耗时: {report.walltime_s:.3f}s\n"
        if report.flags:
            message += f" - ⚠️ 标记: {', '.join(report.flags)}\n"
        message += f" - 配置: {_format_config(report.config)}\n"
        return message

    if isinstance(report, AttackResult):
        message = "🎯 矩匹配攻击结果\n"
        message += f" - t: {', '.join(f'{t:g}' for t in report.t_grid)}\n"
        for name, values in report.metrics.items():
            message += f" - {name}: {', '.join(f'{v:.4g}' for v in values)}  (剩余 {to_percentage(report.ratios.get(name))})\n"
        return message

    if isinstance(report, list) and report and isinstance(report[0], HarnessRow):
        message = "📊 统计检验结果\n"
        for row in report:
            message += (f" - [{row.experiment}] {row.metric} n={row.n}: 错误率 {row.estimate:.4f} "
                        f"(95% CI {row.ci_lo:.4f}–{row.ci_hi:.4f}, {row.trials} 次试验)\n")
        return message

    if isinstance(report, list) and report and isinstance(report[0], BenchRecord):
        message = "⏱️ 基准测试结果\n"
        for record in report:
            message += (f" - {record.metric} n={record.n} d={record.d} {record.param} threads={record.threads}: "
                        f"median {record.t_median_s:.4f}s, peak {record.peak_bytes / 2 ** 20:.1f} MiB\n")
        return message

    return str(report)
