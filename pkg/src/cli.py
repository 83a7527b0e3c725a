#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
命令行模块
子命令 analyze / levi / partition / scan / trace / solve / dump，
结果写成 JSON/CSV，退出码 0 成功、2 输入不合法、3 数值计算中止
"""

import math
import logging
import argparse
from dataclasses import dataclass, field

import numpy as np

from src import __version__
from src.cauchy_solver import load_cauchy_data, solve_cauchy
from src.errors import NumericalAbort, SpecValidationError
from src.hyperbolicity_analyzer import (
    GridConfig, HyperbolicityAnalyzer, check_levi, classify_hyperbolicity, m2_equivalences,
)
from src.mode_solver import (
    H_MAX, RTOL, energy_trace, estimate_energy_constants, growth_scan, integrate_mode, qb_commutator_bound,
)
from src.operator_model import build_frame, load_operator_spec
from src.partition_builder import EPS_MAX, build_partition, estimate_pq
from src.report_writer import ReportWriter
from src.settings import load_settings
from src.symmetriser import compute_symmetriser
from src.task_pool import ModeTaskPool

logger = logging.getLogger("HypAn.CLI")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

SUBCOMMANDS = ("analyze", "levi", "partition", "scan", "trace", "solve", "dump")
# 可由 --tol NAME=VALUE 覆盖的容差及默认值
TOLERANCES = {
    "rtol": RTOL,
    "h_max": H_MAX,
    "zero_radius": GridConfig.zero_radius,
    "stability_tol": GridConfig.stability_tol,
}


@dataclass
class RunConfig:
    """一次运行的完整配置，写入每个产物"""
    subcommand: str
    spec_path: str
    out_dir: str = "output"
    seed: int = 0
    grid_t: int = 256
    xi_decades: int = 4
    directions: int = 64
    refine: bool = True
    mode: str = "complex"
    l_max: object = None
    xi_dir: object = None
    eps: float = EPS_MAX
    eps_sweep: bool = False
    xi_mags: list = field(default_factory=list)
    v0: str = "ones"
    xi: object = None
    data_path: object = None
    t_out: list = field(default_factory=list)
    t: object = None
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise SpecValidationError(f"未知子命令 {self.subcommand!r}")
        for name, value in self.tolerances.items():
            if name not in TOLERANCES:
                raise SpecValidationError(f"未知容差 {name!r}，可选: {', '.join(sorted(TOLERANCES))}")
            if not (isinstance(value, float) and value > 0.0 and math.isfinite(value)):
                raise SpecValidationError(f"容差 {name} 必须为正有限数，收到 {value!r}")

    def tol(self, name):
        return self.tolerances.get(name, TOLERANCES[name])

    def grid(self, settings=None):
        return GridConfig(
            t_nodes=self.grid_t,
            xi_decades=self.xi_decades,
            directions=self.directions,
            zero_radius=self.tol("zero_radius"),
            stability_tol=self.tol("stability_tol"),
            refine=self.refine,
            threads=settings.threads if settings else None,
            progress=settings.progress if settings else False,
        )

    def to_dict(self):
        data = dict(self.__dict__)
        data["tolerances"] = dict(sorted(self.tolerances.items()))
        return data


def _float_list(text, what):
    try:
        return [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise SpecValidationError(f"{what} 必须是逗号分隔的数字，收到 {text!r}")


def parse_magnitudes(text, dyadic=True):
    """解析 '16..1024'（按 2 倍展开）或逗号列表"""
    if ".." in str(text):
        lo_text, hi_text = str(text).split("..", 1)
        lo, hi = float(lo_text), float(hi_text)
        if not dyadic:
            raise SpecValidationError("范围形式的 --xi 需要 --dyadic")
        if not 0.0 < lo <= hi:
            raise SpecValidationError(f"量级范围不合法: {text!r}")
        mags = []
        s = lo
        while s <= hi * (1.0 + 1e-12):
            mags.append(s)
            s *= 2.0
        return mags
    return _float_list(text, "--xi")


def parse_tolerances(items):
    result = {}
    for item in items or []:
        if "=" not in item:
            raise SpecValidationError(f"--tol 需要 NAME=VALUE 形式，收到 {item!r}")
        name, value = item.split("=", 1)
        try:
            result[name.strip()] = float(value)
        except ValueError:
            raise SpecValidationError(f"--tol {name} 的值不是数字: {value!r}")
    return result


def _add_common(parser, settings):
    parser.add_argument("spec", help="算子描述 JSON 文件")
    parser.add_argument("--out", default=settings.output_dir, help="输出目录（默认 HYPAN_OUTPUT_DIR 或 output）")
    parser.add_argument("--seed", type=int, default=0, help="随机种子（默认 0）")
    parser.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help=f"覆盖容差，可重复；可选: {', '.join(sorted(TOLERANCES))}")


def _add_grid(parser):
    parser.add_argument("--grid-t", type=int, default=256, help="时间节点数")
    parser.add_argument("--xi-decades", type=int, default=4, help="频率量级 2^0..2^D")
    parser.add_argument("--directions", type=int, default=64, help="n≥2 时的方向数")
    parser.add_argument("--refine", action=argparse.BooleanOptionalAction, default=True,
                        help="是否做加密与频率扩展稳定性检验")


def build_parser(settings=None):
    """构造 argparse 解析器"""
    settings = settings or load_settings()
    parser = argparse.ArgumentParser(prog="hypan", description="弱双曲 Cauchy 问题的对称化子分析与逐模态求解")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    p = subparsers.add_parser("analyze", help="双曲性分类、GR1m 与 Levi 条件检验")
    _add_common(p, settings)
    _add_grid(p)

    p = subparsers.add_parser("levi", help="Levi 条件检验")
    _add_common(p, settings)
    _add_grid(p)
    p.add_argument("--mode", choices=("complex", "real", "graded"), default="complex")
    p.add_argument("--l-max", type=int, default=None, help="graded 模式检查的最高级")

    p = subparsers.add_parser("partition", help="时间区间划分与 (p, q) 估计")
    _add_common(p, settings)
    p.add_argument("--xi-dir", default=None, help="方向，逗号分隔（默认全 1）")
    p.add_argument("--eps", type=float, default=EPS_MAX, help="ε，须在 (0, e^-1] 内")
    p.add_argument("--eps-sweep", action="store_true", help="对 ε = e^-1, e^-2, e^-3 拟合 p, q")

    p = subparsers.add_parser("scan", help="二进频率扫描与增长拟合")
    _add_common(p, settings)
    p.add_argument("--xi", default="16..1024", help="量级，'LO..HI' 或逗号列表")
    p.add_argument("--dyadic", action=argparse.BooleanOptionalAction, default=True, help="范围按 2 倍展开")
    p.add_argument("--xi-dir", default=None, help="方向，逗号分隔（默认全 1）")
    p.add_argument("--v0", choices=("ones", "random"), default="ones")

    p = subparsers.add_parser("trace", help="单个频率的能量轨迹与 Gronwall 包络")
    _add_common(p, settings)
    p.add_argument("--xi", required=True, help="频率向量，逗号分隔")
    p.add_argument("--eps", type=float, default=EPS_MAX)

    p = subparsers.add_parser("solve", help="周期网格上的 Cauchy 问题求解 (n = 1)")
    _add_common(p, settings)
    p.add_argument("--data", required=True, help="初值文件（JSON 或 CSV）")
    p.add_argument("--t-out", required=True, help="输出时刻，逗号分隔")

    p = subparsers.add_parser("dump", help="输出单点 (t, ξ) 上的全部符号量")
    _add_common(p, settings)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--xi", required=True, help="频率向量，逗号分隔")
    return parser


def parse_config(args):
    """由 argparse 结果生成 RunConfig"""
    kwargs = {
        "subcommand": args.subcommand,
        "spec_path": args.spec,
        "out_dir": args.out,
        "seed": args.seed,
        "tolerances": parse_tolerances(args.tol),
    }
    for name in ("grid_t", "xi_decades", "directions", "refine", "mode", "l_max", "eps", "eps_sweep", "v0", "t"):
        if hasattr(args, name):
            kwargs[name] = getattr(args, name)
    if getattr(args, "xi_dir", None):
        kwargs["xi_dir"] = _float_list(args.xi_dir, "--xi-dir")
    if args.subcommand == "scan":
        kwargs["xi_mags"] = parse_magnitudes(args.xi, args.dyadic)
    elif getattr(args, "xi", None):
        kwargs["xi"] = _float_list(args.xi, "--xi")
    if args.subcommand == "solve":
        kwargs["data_path"] = args.data
        kwargs["t_out"] = _float_list(args.t_out, "--t-out")
    return RunConfig(**kwargs)


def _direction(config, spec):
    return np.asarray(config.xi_dir if config.xi_dir else [1.0] * spec.n, dtype=float)


def cmd_analyze(config, spec, writer, settings):
    grid = config.grid(settings)
    analyzer = HyperbolicityAnalyzer(spec, grid)
    report = analyzer.get_analysis_results()
    if report["hyperbolicity"] != "not_hyperbolic" and spec.m == 2:
        report["m2_equivalences"] = m2_equivalences(spec, grid, analyzer.pool).to_dict()
    writer.write_json("analysis.json", report)
    if report["hyperbolicity"] == "not_hyperbolic":
        logger.error(f"算子非双曲，见证点 (t, ξ) = {report['witnesses']['hyperbolicity']}")
        return EXIT_INVALID
    return EXIT_OK


def cmd_levi(config, spec, writer, settings):
    result = check_levi(spec, config.grid(settings), mode=config.mode, l_max=config.l_max)
    writer.write_json("levi.json", result.to_dict())
    return EXIT_OK


def cmd_partition(config, spec, writer, settings):
    direction = _direction(config, spec)
    partition = build_partition(spec, direction, config.eps)
    payload = {"partition": partition.to_dict()}
    if config.eps_sweep:
        estimate = estimate_pq(spec, [direction], [math.exp(-1.0), math.exp(-2.0), math.exp(-3.0)])
        payload["pq"] = estimate.to_dict()
        writer.write_csv("pq_sweep.csv", estimate.rows)
    writer.write_json("partition.json", payload)
    return EXIT_OK


def cmd_scan(config, spec, writer, settings):
    pool = ModeTaskPool(threads=settings.threads, progress=settings.progress, desc="scan")
    fit = growth_scan(spec, _direction(config, spec), config.xi_mags, v0_policy=config.v0, seed=config.seed,
                      pool=pool, h_max=config.tol("h_max"), rtol=config.tol("rtol"))
    writer.write_csv("growth.csv", fit.to_frame())
    writer.write_json("growth.json", fit.to_dict())
    return EXIT_OK


def cmd_trace(config, spec, writer, settings):
    xi = np.asarray(config.xi, dtype=float)
    if xi.size != spec.n:
        raise SpecValidationError(f"--xi 的维数必须为 n={spec.n}")
    partition = build_partition(spec, xi, config.eps)
    nodes = [t for interval in partition.kept for t in interval]
    trace = integrate_mode(spec, xi, np.ones(spec.m, dtype=complex), (spec.a, spec.b),
                           h_max=config.tol("h_max"), rtol=config.tol("rtol"), extra_nodes=nodes)
    constants = estimate_energy_constants(spec, xi, partition)
    trace = energy_trace(spec, trace, partition, constants)
    writer.write_csv("trace.csv", trace.to_frame())
    writer.write_json("trace.json", {
        "trace": trace.summary(),
        "constants": constants.to_dict(),
        "partition": partition.to_dict(),
    })
    return EXIT_OK


def cmd_solve(config, spec, writer, settings):
    data = load_cauchy_data(config.data_path, default_t0=spec.t0)
    pool = ModeTaskPool(threads=settings.threads, progress=settings.progress, desc="solve")
    solution = solve_cauchy(spec, data, config.t_out, pool=pool, h_max=config.tol("h_max"), rtol=config.tol("rtol"))
    for idx, t in enumerate(solution.t_out):
        writer.write_csv(f"solution_t={t:g}.csv", solution.to_frame(idx))
    writer.write_json("solution.json", solution.summary())
    return EXIT_OK


def cmd_dump(config, spec, writer, settings):
    xi = np.asarray(config.xi, dtype=float)
    frame = build_frame(spec, config.t, xi)
    symm = compute_symmetriser(spec, config.t, xi)
    cls = classify_hyperbolicity(spec, config.t, xi)
    writer.write_json("dump.json", {
        "t": frame.t,
        "xi": frame.xi,
        "bracket": frame.bracket,
        "A": frame.A,
        "B": frame.B,
        "h": frame.h,
        "eigenvalues": np.sort_complex(np.linalg.eigvals(frame.A)),
        "Q": symm.Q,
        "dQ": symm.dQ,
        "minors": symm.minors,
        "delta": symm.delta,
        "d_delta": symm.d_delta,
        "delta_tilde": symm.delta_tilde,
        "psi": symm.psi,
        "hamilton_cayley": symm.hc,
        "qb_commutator_norm": qb_commutator_bound(frame, symm),
        "classification": {"kind": cls.kind, "r": cls.r, "label": cls.label},
    })
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "levi": cmd_levi,
    "partition": cmd_partition,
    "scan": cmd_scan,
    "trace": cmd_trace,
    "solve": cmd_solve,
    "dump": cmd_dump,
}


def run(config, settings=None):
    """执行一次运行并返回退出码"""
    settings = settings or load_settings()
    try:
        spec = load_operator_spec(config.spec_path)
        writer = ReportWriter(config.out_dir, config.to_dict())
        logger.info(f"运行子命令 {config.subcommand}: {config.spec_path}")
        return COMMANDS[config.subcommand](config, spec, writer, settings)
    except SpecValidationError as e:
        logger.error(f"输入不合法: {e}")
        return EXIT_INVALID
    except NumericalAbort as e:
        logger.error(f"数值计算中止: {e}")
        return EXIT_NUMERICAL


def main(argv=None):
    try:
        settings = load_settings()
        args = build_parser(settings).parse_args(argv)
        config = parse_config(args)
    except SpecValidationError as e:
        logger.error(f"参数不合法: {e}")
        return EXIT_INVALID
    return run(config, settings)


if __name__ == "__main__":
    raise SystemExit(main())
