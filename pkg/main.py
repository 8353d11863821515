"""
DMN结构学习工具主程序
子命令：generate（生成数据集）、learn（学习结构）、plan（规划划分）、bench（加速比基准）、verify（PI验证）
"""
import sys
import logging
import argparse
from logging.handlers import RotatingFileHandler
from pathlib import Path
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

from tabulate import tabulate

from config import Config
from discrete_data import DatasetFormatError, read_dataset, write_dataset
from chordal import Graph, GraphFormatError, write_graph
from search import SearchConfig, SearchTrace, learn, write_trace
from executor_factory import ExecutorFactory, MODES
from messages import BACKENDS, WorkerError
from planner import plan_partition, plan_report, topology_estimate
from modelgen import ModelError, ModelFormatError, expected_counts, read_model, sample, verify_pi
from benchmark import BENCH_MODES, run_bench

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# 命令行参数名 → 配置键
LEARN_FLAGS = {
    "eta": "search.eta",
    "kappa": "search.kappa",
    "delta_h": "search.delta_h",
    "max_candidates": "search.max_candidates",
    "explorers": "runtime.explorers",
    "servers": "runtime.servers",
    "mode": "runtime.mode",
    "backend": "runtime.backend",
    "timeout": "runtime.timeout",
    "format": "data.format",
}
GENERATE_FLAGS = {"total": "data.total", "seed": "data.seed", "format": "data.format"}
BENCH_FLAGS = {
    **LEARN_FLAGS,
    "workers": "bench.workers",
    "repetitions": "bench.repetitions",
    "modes": "bench.modes",
    "backend": "bench.backend",
}
PLAN_FLAGS = {"alpha": "plan.alpha", "md": "plan.memory_mb"}


def setup_logging(log_path: str = "", level: str = "INFO", max_bytes: int = 5 * 1024 * 1024,
                  backup_count: int = 3):
    """
    设置日志配置

    配置了日志目录时写入按日期命名的滚动日志文件；标准输出留给命令结果，控制台日志写到 stderr。
    """
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_path:
        log_dir = Path(log_path)
        log_dir.mkdir(parents=True, exist_ok=True)
        log_file = log_dir / f"dmn_learner_{datetime.now().strftime('%Y%m%d')}.log"
        handlers.append(RotatingFileHandler(
            log_file,
            maxBytes=max_bytes,
            backupCount=backup_count,
            encoding='utf-8'  # 避免中文乱码
        ))
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ValueError(f"未知日志级别: {level}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT, handlers=handlers, force=True)


def _apply_flags(config: Config, args: argparse.Namespace, flags: Dict[str, str]):
    """显式给出的命令行参数覆盖配置文件与默认值"""
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            config.set(key, value, save=False)


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的整数: {text}") from None


def _name_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


class StructureLearner:
    """DMN结构学习流程：读取数据 → 多链接前瞻搜索 → 写出图与轨迹"""

    def __init__(self, config: Config):
        """
        初始化学习器

        Args:
            config: 已合并命令行参数的配置
        """
        self.config = config
        self.logger = logging.getLogger(__name__)
        self._init_components()

    def _init_components(self):
        """初始化搜索参数与执行器"""
        self.search_config = SearchConfig.from_config(self.config)
        self.executor = ExecutorFactory.create_from_config(self.config.config)
        self.logger.info(f"已初始化 {self.executor.mode} 执行器（探索者 {self.executor.explorers}，"
                         f"服务器 {self.config.get('runtime.servers', 0)}）")

    def run(self, dataset: str, prefix: Optional[str] = None) -> Tuple[Graph, SearchTrace]:
        """
        运行一次完整学习

        Args:
            dataset: 数据集路径
            prefix: 输出前缀，默认为去掉扩展名的数据集路径

        Returns:
            (学习到的图, 搜索轨迹)
        """
        self.logger.info("=" * 80)
        self.logger.info("开始学习DMN结构")
        self.logger.info("=" * 80)

        try:
            fmt = self.config.get("data.format", "text")
            self.logger.info(f"步骤1: 读取数据集 {dataset}（{fmt}）...")
            data = read_dataset(dataset, fmt)
            self.logger.info(f"共 {len(data.scheme)} 个变量，{len(data)} 种不同配置，总数 {data.total:g}")

            c = self.search_config
            self.logger.info(f"步骤2: 多链接前瞻搜索（η={c.eta}, κ={c.kappa}, δh={c.delta_h}）...")
            graph, trace = learn(c, data, self.executor)
            self.logger.info(f"加入 {len(trace.adopted)} 组链接，共 {len(graph.edges)} 条边")
            for worker, idle in self.executor.stats.idle().items():
                self.logger.info(f"[*] {worker} 空闲 {idle:.3f} 秒")

            out = Path(prefix) if prefix else Path(dataset).with_suffix("")
            graph_path = out.parent / (out.name + ".graph")
            trace_path = out.parent / (out.name + ".trace")
            self.logger.info(f"步骤3: 写出 {graph_path} 与 {trace_path}...")
            write_graph(graph, graph_path)
            write_trace(trace, trace_path, data.scheme)

            self.logger.info("=" * 80)
            self.logger.info(f"完成！共 {len(trace.records)} 轮搜索")
            self.logger.info("=" * 80)
            return graph, trace
        except Exception as e:
            self.logger.error(f"学习过程中出错: {e}", exc_info=True)
            raise


def cmd_generate(args: argparse.Namespace, config: Config) -> int:
    """由模型文件生成采样数据集或期望计数数据集"""
    logger = logging.getLogger(__name__)
    _apply_flags(config, args, GENERATE_FLAGS)
    model = read_model(args.model)
    if args.expected:
        total = float(config.get("data.total", 10000))
        table = expected_counts(model, total)
        logger.info(f"期望计数: {len(table)} 行，总数 {total:g}")
    else:
        if args.count is None:
            raise ValueError("需要 --count 或 --expected")
        seed = int(config.get("data.seed", 1))
        table = sample(model, args.count, seed)
        logger.info(f"采样 {args.count} 个样本（种子 {seed}）: {len(table)} 种不同配置")
    write_dataset(table, args.output, config.get("data.format", "text"))
    print(f"{args.output}\t{len(table.scheme)} vars\t{len(table)} rows\ttotal {table.total:g}")
    return 0


def cmd_learn(args: argparse.Namespace, config: Config) -> int:
    _apply_flags(config, args, LEARN_FLAGS)
    graph, _ = StructureLearner(config).run(args.dataset, args.output)
    print(f"edges {len(graph.edges)}")
    return 0


def cmd_plan(args: argparse.Namespace, config: Config) -> int:
    """求解探索者/服务器划分并打印拓扑与消息时间估计"""
    _apply_flags(config, args, PLAN_FLAGS)
    plan = plan_partition(args.data, args.vars, args.workers, float(config.get("plan.alpha")), args.de,
                          config.get("plan.memory_mb"))
    print(plan_report(plan, topology_estimate(args.workers + 1)))
    return 0


def cmd_bench(args: argparse.Namespace, config: Config) -> int:
    logger = logging.getLogger(__name__)
    _apply_flags(config, args, BENCH_FLAGS)
    data = read_dataset(args.dataset, config.get("data.format", "text"))
    workers = config.get("bench.workers", [1, 2, 4])
    modes = config.get("bench.modes", list(BENCH_MODES))
    report = run_bench(
        SearchConfig.from_config(config), data,
        workers=[workers] if isinstance(workers, int) else list(workers),
        repetitions=int(config.get("bench.repetitions", 3)),
        modes=[modes] if isinstance(modes, str) else list(modes),
        servers=int(config.get("runtime.servers", 0)),
        backend=config.get("bench.backend", "process"),
        cache_size=int(config.get("runtime.cache_size", 4096)),
        timeout=float(config.get("runtime.timeout", 300.0)),
    )
    if args.output:
        report.write(args.output)
        logger.info(f"基准报告已写入 {args.output}")
        print(tabulate([[r.mode, r.n, f"{r.seconds:.3f}", f"{r.speedup:.3f}", f"{r.efficiency:.3f}",
                         f"{r.idle_max:.3f}"] for r in report.rows],
                       headers=["mode", "n", "T(n)", "S", "E", "idle_max"]))
    else:
        sys.stdout.write(report.to_tsv())
    return 0


def cmd_verify(args: argparse.Namespace, config: Config) -> int:
    """子集是集体相关且含边缘独立变量对的PI子模型时返回0，否则返回1"""
    model = read_model(args.model)
    report = verify_pi(model, _name_list(args.subset), args.tol)
    rows = [[f"{a},{b}", "independent" if v.independent else "dependent", f"{v.deviation:.3g}"]
            for (a, b), v in report.pairwise.items()]
    print(tabulate(rows, headers=["pair", "verdict", "max |P(a,b) - P(a)P(b)|"]))
    print(f"collective {'dependent' if report.collective else 'not dependent'}")
    print(f"PI {'yes' if report.is_pi else 'no'}")
    return 0 if report.is_pi else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="DMN结构学习工具（多链接前瞻搜索）")
    parser.add_argument("--config", type=str, help="配置文件路径（JSON 或 key = value，可选）")
    parser.add_argument("--log-path", dest="log_path", type=str, help="日志目录（默认不写文件）")
    parser.add_argument("--log-level", dest="log_level", type=str, help="日志级别（默认:INFO）")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="由模型文件生成数据集")
    generate.add_argument("model", help="模型文件")
    source = generate.add_mutually_exclusive_group(required=True)
    source.add_argument("--count", type=int, help="采样样本数")
    source.add_argument("--expected", action="store_true", help="输出期望计数而不是采样")
    generate.add_argument("--total", type=float, help="期望计数的总数（默认:10000）")
    generate.add_argument("--seed", type=int, help="随机种子（默认:1）")
    generate.add_argument("-o", "--output", required=True, help="输出数据集路径")
    generate.add_argument("--format", choices=("text", "binary"), help="数据集格式（默认:text）")
    generate.set_defaults(handler=cmd_generate)

    def add_search_flags(sub: argparse.ArgumentParser):
        sub.add_argument("dataset", help="数据集路径")
        sub.add_argument("--format", choices=("text", "binary"), help="数据集格式（默认:text）")
        sub.add_argument("--eta", type=int, help="最大团规模 η（默认:3）")
        sub.add_argument("--kappa", type=int, help="最大前瞻链接数 κ（默认:1）")
        sub.add_argument("--delta-h", dest="delta_h", type=float, help="熵减阈值 δh（默认:0.003）")
        sub.add_argument("--max-candidates", dest="max_candidates", type=int, help="每轮候选数上限")
        sub.add_argument("-m", "--servers", type=int, help="边缘服务器数 m（默认:0）")
        sub.add_argument("--timeout", type=float, help="等待工作者消息的超时（秒）")

    learn_cmd = commands.add_parser("learn", help="学习DMN结构")
    add_search_flags(learn_cmd)
    learn_cmd.add_argument("-n", "--explorers", type=int, help="探索者数 n（默认:1）")
    learn_cmd.add_argument("--mode", choices=MODES, help="分配方式（默认:two-stage）")
    learn_cmd.add_argument("--backend", choices=BACKENDS, help="工作者后端（默认:thread）")
    learn_cmd.add_argument("-o", "--output", help="输出前缀（默认:数据集路径去掉扩展名）")
    learn_cmd.set_defaults(handler=cmd_learn)

    plan = commands.add_parser("plan", help="规划探索者/服务器划分")
    plan.add_argument("--data", type=float, required=True, help="数据集大小 |D|（MB）")
    plan.add_argument("--vars", type=int, required=True, help="变量数 N")
    plan.add_argument("--workers", type=int, required=True, help="除管理者外的工作者数 W′")
    plan.add_argument("--alpha", type=float, help="α = k_g/k_d（默认:0.005）")
    plan.add_argument("--de", type=float, required=True, help="每个探索者的数据量 |D_e|（MB）")
    plan.add_argument("--md", type=float, help="每个处理器的数据内存上限（MB）")
    plan.set_defaults(handler=cmd_plan)

    bench = commands.add_parser("bench", help="加速比与效率基准")
    add_search_flags(bench)
    bench.add_argument("--workers", type=_int_list, help="探索者数列表（默认:1,2,4）")
    bench.add_argument("--repetitions", type=int, help="每个配置的重复次数（默认:3）")
    bench.add_argument("--modes", type=_name_list, help="分配方式列表（默认:even,two-stage）")
    bench.add_argument("--backend", choices=BACKENDS, help="工作者后端（默认:process）")
    bench.add_argument("-o", "--output", help="TSV 报告路径（默认输出到标准输出）")
    bench.set_defaults(handler=cmd_bench)

    verify = commands.add_parser("verify", help="验证变量子集是否为PI子模型")
    verify.add_argument("model", help="模型文件")
    verify.add_argument("--subset", required=True, help="逗号分隔的变量名")
    verify.add_argument("--tol", type=float, default=1e-9, help="容差（默认:1e-9）")
    verify.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    主函数

    Returns:
        退出码：0 成功，1 验证结论为否，2 用法错误，3 运行失败
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    logger = logging.getLogger(__name__)
    try:
        config = Config(args.config)
        _apply_flags(config, args, {"log_path": "logging.log_path", "log_level": "logging.level"})
        setup_logging(config.get("logging.log_path", ""), config.get("logging.level", "INFO"),
                      int(config.get("logging.max_bytes", 5 * 1024 * 1024)),
                      int(config.get("logging.backup_count", 3)))
        return args.handler(args, config)
    except (DatasetFormatError, GraphFormatError, ModelFormatError, ModelError, WorkerError, OSError) as e:
        logger.error(f"运行失败: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        logger.error(f"参数错误: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
