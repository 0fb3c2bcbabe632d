import argparse
import copy
import json
import logging
import os
import sys
from dataclasses import asdict
from typing import Any, Dict, List, Optional

import yaml

# ==========================================================
# 导入所有模块
# ==========================================================
# 仓储实现
from core.repositories.binary_embedding_repo import BinaryEmbeddingRepository
from core.repositories.csv_embedding_repo import CsvEmbeddingRepository
from core.repositories.report_repo import FileReportRepository
# 服务
from core.services.embedding_service import EmbeddingService
from core.services.metric_service import MetricService
from core.services.hacking_service import ATTACK_METRICS, HackingService
from core.services.harness_service import EXPERIMENTS, ExperimentInputs, HarnessService
from core.services.bench_service import BenchService
from core.services.synthetic_data_service import SyntheticDataService
from core.perturbations.embedding_perturbations import GaussianNoisePerturbation, MixturePerturbation
# 其他
from core.domain.errors import (
    EmbeddingFormatError,
    EmbeddingIOError,
    InvalidParameterError,
    MindMetricsError,
    UnknownMetricError,
)
from core.domain.models import HarnessRow, TrialPlan
from core.initial_data import PRESET_DATA
from core.logger import logger, setup_logging
from utils import format_report_text, parse_float_list, parse_int_list, parse_on_off, parse_positive_or_keyword

ROOT_DIR = os.path.dirname(os.path.abspath(__file__))
SCHEMA_PATH = os.path.join(ROOT_DIR, "_conf_schema.json")
METADATA_PATH = os.path.join(ROOT_DIR, "metadata.yaml")

# 退出码是对外约定，不随版本变化
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FILE = 3
EXIT_METRIC = 4

# 取值为关键字或正数的配置项
NUMBER_OR_KEYWORD_KEYS = [("mind", "alpha", "auto"), ("sinkhorn", "epsilon", "auto"), ("mmd", "sigma", "median")]


# ==========================================================
# 配置：命令行参数 > YAML 配置文件 > _conf_schema.json 默认值
# ==========================================================

def load_schema_defaults(path: str = SCHEMA_PATH) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as fh:
        schema = json.load(fh)
    defaults: Dict[str, Any] = {}
    for key, entry in schema.items():
        if entry.get("type") == "object":
            defaults[key] = {name: item.get("default") for name, item in entry.get("items", {}).items()}
        else:
            defaults[key] = entry.get("default")
    return defaults


def deep_merge(base: Dict[str, Any], overlay: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in (overlay or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        elif value is not None:
            merged[key] = value
    return merged


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """只收集命令行上显式给出的参数"""
    get = lambda name: getattr(args, name, None)  # noqa: E731

    overrides: Dict[str, Any] = {
        "seed": get("seed"),
        "threads": get("threads"),
        "format": get("format"),
        "mind": {"projections": get("projections"), "alpha": get("alpha")},
        "sinkhorn": {"epsilon": get("epsilon"),
                     "split_correction": parse_on_off(get("split_correction"))
                     if get("split_correction") is not None else None},
        "mmd": {"sigma": get("sigma"), "estimator": get("mmd_estimator"),
                "full_matrix": True if get("full_matrix") else None},
        "harness": {"trials": get("trials")},
        "attack": {"t_grid": parse_float_list(get("t_grid")) if get("t_grid") else None},
        "bench": {"reps": get("reps"), "memory_method": get("memory_method")},
    }
    return overrides


def build_config(args: argparse.Namespace) -> Dict[str, Any]:
    # --- 1. 加载配置 ---
    config = load_schema_defaults()
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_config = yaml.safe_load(fh) or {}
        except OSError as e:
            raise EmbeddingIOError(f"cannot read config file: {e}", path=args.config) from e
        if not isinstance(file_config, dict):
            raise InvalidParameterError(f"config file {args.config} must contain a mapping")
        config = deep_merge(config, file_config)
    config = deep_merge(config, flag_overrides(args))

    # 关键字或正数，格式错误属于用法错误
    for section, key, keyword in NUMBER_OR_KEYWORD_KEYS:
        if section in config and config[section].get(key) is not None:
            config[section][key] = parse_positive_or_keyword(config[section][key], keyword)
    return config


def read_version() -> str:
    try:
        with open(METADATA_PATH, "r", encoding="utf-8-sig") as fh:
            return str(yaml.safe_load(fh).get("version", "unknown"))
    except (OSError, yaml.YAMLError):
        return "unknown"


# ==========================================================
# 组合根
# ==========================================================

class MindMetricsApp:
    def __init__(self, metric_config: Dict[str, Any]):
        self.metric_config = metric_config

        # --- 2. 组合根：实例化所有仓储层 ---
        self.binary_repo = BinaryEmbeddingRepository()
        self.csv_repo = CsvEmbeddingRepository()
        self.report_repo = FileReportRepository()

        # --- 3. 组合根：实例化所有服务层，并注入依赖 ---
        self.embedding_service = EmbeddingService(self.binary_repo, self.csv_repo, self.metric_config)
        self.metric_service = MetricService(self.metric_config)
        self.synthetic_service = SyntheticDataService(self.metric_config)
        self.hacking_service = HackingService(self.metric_service, self.metric_config)
        self.harness_service = HarnessService(self.metric_service, self.metric_config)
        self.bench_service = BenchService(self.metric_service, self.synthetic_service, self.report_repo,
                                          self.metric_config)

    # ===========输出==========
    def _emit(self, args: argparse.Namespace, document: Dict[str, Any], csv_text: str, report: Any) -> None:
        """json 模式 stdout 只输出一个 JSON 文档；指定 --out-file 时写入文件"""
        if args.output == "json":
            text = self.report_repo.dumps_json(document) + "\n"
        elif args.output == "csv":
            text = csv_text
        else:
            text = format_report_text(report)
        if args.out_file:
            self.report_repo.write_text(text, args.out_file)
            logger.info(f"结果已写入 {args.out_file}")
        else:
            sys.stdout.write(text)
            sys.stdout.flush()

    def _load(self, path: Optional[str], flag: str, args: argparse.Namespace):
        if not path:
            raise InvalidParameterError(f"missing required input {flag}")
        return self.embedding_service.load_embeddings(path, args.format,
                                                      truncate_dim=getattr(args, "truncate_dim", None))

    # ===========子命令==========
    def cmd_compute(self, args: argparse.Namespace) -> int:
        """计算一个指标 Δ(p̂_A, p̂_B)"""
        self.metric_service.get_metric(args.metric)
        set_a = self._load(args.a, "--a", args)
        set_b = self._load(args.b, "--b", args)
        report = self.metric_service.compute(args.metric, set_a, set_b)
        row = [report.metric, repr(report.value), report.n_a, report.n_b, report.d,
               repr(report.walltime_s), ";".join(report.flags)]
        csv_text = "metric,value,n_a,n_b,d,walltime_s,flags\n" + ",".join(str(v) for v in row) + "\n"
        self._emit(args, report.to_dict(), csv_text, report)
        return EXIT_OK

    def cmd_attack(self, args: argparse.Namespace) -> int:
        """矩匹配攻击下各指标的鲁棒性扫描"""
        metrics = self._metric_list(args, default=list(ATTACK_METRICS))
        data = self._load(args.a, "--a (data)", args)
        initial = self._load(args.b, "--b (initial)", args)
        result = self.hacking_service.robustness_sweep(data, initial, metrics,
                                                       t_grid=self.metric_config["attack"]["t_grid"])
        lines = ["t,metric,value"]
        for name, values in result.metrics.items():
            lines += [f"{t!r},{name},{v!r}" for t, v in zip(result.t_grid, values)]
        self._emit(args, result.to_dict(), "\n".join(lines) + "\n", result)
        return EXIT_OK

    def cmd_harness(self, args: argparse.Namespace) -> int:
        """运行判别 / 单调性 / 扰动排序检验"""
        if args.experiment not in EXPERIMENTS:
            raise InvalidParameterError(f"unknown experiment '{args.experiment}'")
        metrics = self._metric_list(args, default=["mind"])
        for name in metrics:
            self.metric_service.get_metric(name)
        inputs = self._experiment_inputs(args)
        n_grid = parse_int_list(args.n) if args.n else [1000]
        trials = int(self.metric_config["harness"]["trials"])
        seed = int(self.metric_config["seed"])
        threads = int(self.metric_config["threads"])

        results = []
        if len(n_grid) == 1 and len(metrics) == 1:
            plan = TrialPlan(n=n_grid[0], trials=trials, seed=seed, threads=threads)
            result = self.harness_service.run_experiment(args.experiment, inputs, metrics[0], plan)
            row = HarnessRow(experiment=args.experiment, metric=metrics[0], n=plan.n, trials=plan.trials,
                             estimate=result.estimate, ci_lo=result.wilson_ci[0], ci_hi=result.wilson_ci[1],
                             seed=plan.seed)
            results.append((row, result))
        else:
            results = self.harness_service.sample_size_sweep(args.experiment, n_grid, metrics, inputs,
                                                             trials=trials, seed=seed, threads=threads)

        rows = [row for row, _ in results]
        document = {
            "experiment": args.experiment,
            "rows": [dict(asdict(row), **result.to_dict(include_trials=args.include_trials))
                     for row, result in results],
            "eps_grid": inputs.eps_grid,
            "config": self.metric_config,
        }
        self._emit(args, document, self.report_repo.dumps_harness_csv(rows), rows)
        return EXIT_OK

    def cmd_bench(self, args: argparse.Namespace) -> int:
        """测量指标计算的耗时与峰值内存"""
        metrics = self._metric_list(args, default=["mind", "fid"])
        n_grid = parse_int_list(args.n) if args.n else [1000]
        d_grid = parse_int_list(args.d) if args.d else [64]
        threads_grid = parse_int_list(args.threads_grid) if args.threads_grid else None

        if args.projection_variance:
            set_a, set_b = self.bench_service.bench_inputs(n_grid[0], d_grid[0], int(self.metric_config["seed"]))
            rows = self.bench_service.projection_variance(set_a, set_b, parse_int_list(args.projection_variance),
                                                          seeds=range(args.variance_seeds))
            lines = ["M,mean,std,seeds"] + [f"{r['M']},{r['mean']!r},{r['std']!r},{r['seeds']}" for r in rows]
            self._emit(args, {"projection_variance": rows, "n": n_grid[0], "d": d_grid[0]},
                       "\n".join(lines) + "\n", rows)
            return EXIT_OK

        records = []
        for name in metrics:
            records += self.bench_service.bench_metric(name, n_grid, d_grid, threads_grid=threads_grid)
        if args.out_file and args.output != "text":
            self.bench_service.emit_bench_report(records, args.out_file)
            return EXIT_OK
        self.report_repo.validate_bench_records(records)
        self._emit(args, {"records": [asdict(r) for r in records]}, self.report_repo.dumps_bench_csv(records),
                   records)
        return EXIT_OK

    def cmd_convert(self, args: argparse.Namespace) -> int:
        """在二进制与 CSV 格式之间转换嵌入文件"""
        if not args.a or not args.out_file:
            raise InvalidParameterError("convert needs --a <input> and --out-file <output>")
        embeddings = self.embedding_service.convert(args.a, args.out_file, args.format, args.to_format)
        logger.info(f"转换完成: {args.a} -> {args.out_file} (n={embeddings.n}, d={embeddings.d})")
        return EXIT_OK

    def cmd_generate(self, args: argparse.Namespace) -> int:
        """把内置合成数据池写成嵌入文件"""
        pools = self.synthetic_service.preset(args.preset, n=args.n_rows, d=args.d_dim)
        os.makedirs(args.out_dir, exist_ok=True)
        extension = "csv" if (args.format or "").lower() == "csv" else "emb"
        written = {}
        for role, embeddings in pools.items():
            path = os.path.join(args.out_dir, f"{args.preset}_{role}.{extension}")
            self.embedding_service.save_embeddings(embeddings, path, args.format)
            written[role] = path
        sys.stdout.write(self.report_repo.dumps_json({"preset": args.preset, "files": written}) + "\n")
        return EXIT_OK

    # ===========辅助方法==========
    def _metric_list(self, args: argparse.Namespace, default: List[str]) -> List[str]:
        if getattr(args, "metrics", None):
            return [m.strip() for m in args.metrics.split(",") if m.strip()]
        if getattr(args, "metric", None):
            return [args.metric]
        return default

    def _experiment_inputs(self, args: argparse.Namespace) -> ExperimentInputs:
        data_pool = self._load(args.a, "--a (data pool)", args)
        model_pools = []
        if args.pools:
            model_pools = [self._load(path.strip(), "--pools", args) for path in args.pools.split(",") if path.strip()]
        elif args.b:
            model_pools = [self._load(args.b, "--b", args)]

        inputs = ExperimentInputs(data_pool=data_pool, model_pools=model_pools)
        if args.experiment == "perturbation":
            inputs.eps_grid = parse_float_list(args.eps) if args.eps else [0.01, 0.03, 0.05, 0.07, 0.10]
            if args.perturbation == "mixture":
                other = args.other or args.b
                inputs.perturbation = MixturePerturbation(self._load(other, "--other", args))
            else:
                inputs.perturbation = GaussianNoisePerturbation.from_pool(data_pool)
        return inputs


# ==========================================================
# 命令行
# ==========================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--a", help="嵌入文件 A（数据 / 数据池）")
    common.add_argument("--b", help="嵌入文件 B（模型 / 初始集合）")
    common.add_argument("--format", choices=["auto", "binary", "csv"], help="嵌入文件格式")
    common.add_argument("--seed", type=int, help="主随机种子（默认 0）")
    common.add_argument("--threads", type=int, help="内部并行线程数")
    common.add_argument("--output", choices=["json", "csv", "text"], default="json", help="输出格式")
    common.add_argument("--out-file", help="输出文件，缺省写到 stdout")
    common.add_argument("--config", help="YAML 配置文件")
    common.add_argument("--truncate-dim", type=int, help="只使用嵌入的前 d' 维")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="输出调试日志")
    verbosity.add_argument("--quiet", action="store_true", help="只输出警告与错误")

    metric_flags = argparse.ArgumentParser(add_help=False)
    metric_flags.add_argument("--metric", help="指标: mind, fid, mufid, sigmafid, mmd, sinkhorn")
    metric_flags.add_argument("--metrics", help="逗号分隔的指标列表")
    metric_flags.add_argument("--projections", type=int, help="投影方向数 M")
    metric_flags.add_argument("--alpha", help="MIND 缩放系数：auto 或正数")
    metric_flags.add_argument("--epsilon", help="Sinkhorn 的 ε：auto 或正数")
    metric_flags.add_argument("--sigma", help="MMD 带宽：median 或正数")
    metric_flags.add_argument("--mmd-estimator", choices=["u", "v"], help="MMD 估计量")
    metric_flags.add_argument("--full-matrix", action="store_true", help="MMD 一次性构造完整核矩阵")
    metric_flags.add_argument("--split-correction", choices=["on", "off"], help="Sinkhorn 对半修正")

    parser = argparse.ArgumentParser(prog="mind_metrics", description="嵌入分布距离工具箱")
    parser.add_argument("--version", action="version", version=f"%(prog)s {read_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("compute", parents=[common, metric_flags], help="计算一个指标")

    attack = sub.add_parser("attack", parents=[common, metric_flags], help="矩匹配攻击鲁棒性扫描")
    attack.add_argument("--t-grid", help="插值级别，如 0,0.25,0.5,0.75,1")

    harness = sub.add_parser("harness", parents=[common, metric_flags], help="统计检验")
    harness.add_argument("--experiment", required=True, choices=list(EXPERIMENTS))
    harness.add_argument("--n", help="每次试验的样本数，逗号分隔时做样本量扫描")
    harness.add_argument("--trials", type=int, help="试验次数（默认 512）")
    harness.add_argument("--pools", help="逗号分隔的模型池文件（单调性检验，按由差到好排列）")
    harness.add_argument("--perturbation", choices=["mixture", "gaussian_noise"], default="mixture")
    harness.add_argument("--other", help="混合扰动使用的污染数据池")
    harness.add_argument("--eps", help="扰动级别，如 0.01,0.03,0.05,0.07,0.10")
    harness.add_argument("--include-trials", action="store_true", help="JSON 中附带每次试验的取值")

    bench = sub.add_parser("bench", parents=[common, metric_flags], help="耗时与内存基准测试")
    bench.add_argument("--n", help="样本数列表，如 1000,5000")
    bench.add_argument("--d", help="维度列表，如 256,2048")
    bench.add_argument("--reps", type=int, help="计时次数（默认 5，不少于 3）")
    bench.add_argument("--threads-grid", help="线程数列表，如 1,4")
    bench.add_argument("--memory-method", choices=["tracemalloc", "rss_delta"])
    bench.add_argument("--projection-variance", help="投影数列表；给出时改为统计 MIND 的方差")
    bench.add_argument("--variance-seeds", type=int, default=100, help="方差统计使用的种子数")

    convert = sub.add_parser("convert", parents=[common], help="嵌入文件格式转换")
    convert.add_argument("--to-format", choices=["auto", "binary", "csv"], default="auto")

    generate = sub.add_parser("generate", parents=[common], help="写出内置合成数据池")
    generate.add_argument("--preset", required=True, choices=[entry[0] for entry in PRESET_DATA])
    generate.add_argument("--out-dir", default=".")
    generate.add_argument("--n", dest="n_rows", type=int, help="覆盖预设的样本数")
    generate.add_argument("--d", dest="d_dim", type=int, help="覆盖预设的维度")
    return parser


COMMANDS = {
    "compute": MindMetricsApp.cmd_compute,
    "attack": MindMetricsApp.cmd_attack,
    "harness": MindMetricsApp.cmd_harness,
    "bench": MindMetricsApp.cmd_bench,
    "convert": MindMetricsApp.cmd_convert,
    "generate": MindMetricsApp.cmd_generate,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO)

    try:
        app = MindMetricsApp(build_config(args))
        return COMMANDS[args.command](app, args)
    except UnknownMetricError as e:
        logger.error(f"未知指标: {e}")
        return EXIT_USAGE
    except (EmbeddingFormatError, EmbeddingIOError) as e:
        logger.error(f"文件错误: {e}")
        return EXIT_FILE
    except ValueError as e:
        logger.error(f"参数错误: {e}")
        return EXIT_USAGE
    except MindMetricsError as e:
        logger.error(f"计算失败: {e}")
        return EXIT_METRIC


if __name__ == "__main__":
    sys.exit(main())
