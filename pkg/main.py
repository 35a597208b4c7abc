#!/usr/bin/env python
# -*- coding: utf-8 -*-

import argparse
import json
import sys
from typing import Callable, Dict, List, Optional

from rich.console import Console

from evaluation.evaluator import Evaluator, run_oracle_suite
from spinboson.errors import (ConfigError, ConvergenceError, DomainError, InvariantError, MemoryBudgetError,
                              QuadratureError, TruncationError)
from ui.renderer import ReportRenderer
from utils.config_loader import NumericsSettings, RunConfig, get_numerics_settings, load_config
from utils.log import configure_logging, get_logger
from utils.presets import PRESET_CATALOG_VERSION, Preset, get_preset, list_presets
from utils.writers import write_csv, write_text

logger = get_logger(__name__)

# 各命令未指定预设时使用的默认预设
DEFAULT_PRESETS = {"sdf": "all-densities", "dynamics": "a-wc4", "calibrate": "a-wc4", "sweep": "a-wc4"}

# 异常到退出码的映射，按顺序匹配
EXIT_CODES = (
    (OSError, 3),
    ((ConvergenceError, QuadratureError, InvariantError, TruncationError, MemoryBudgetError), 2),
    (DomainError, 1),
)


def resolve_preset(config: RunConfig) -> Preset:
    """取预设并合并覆盖项"""
    name = config.preset or DEFAULT_PRESETS[config.command]
    return get_preset(name).with_overrides(config.overrides)


def _output_path(config: RunConfig, preset: Optional[Preset], suffix: str) -> str:
    if config.output_path:
        return config.output_path
    stem = preset.name if preset is not None else "oracle"
    return f"{config.command}_{stem}.{suffix}"


def run_sdf(config: RunConfig, numerics: NumericsSettings, renderer: ReportRenderer):
    """采样谱密度曲线"""
    preset = resolve_preset(config)
    evaluator = Evaluator(preset, numerics, config.deterministic)
    renderer.render_header("有效谱密度", preset.provenance)
    path = _output_path(config, preset, "csv")
    write_csv(path, evaluator.sample_densities())
    renderer.render_output(path)


def run_dynamics(config: RunConfig, numerics: NumericsSettings, renderer: ReportRenderer):
    """传播约化密度矩阵并比较各谱密度"""
    preset = resolve_preset(config)
    evaluator = Evaluator(preset, numerics, config.deterministic, progress=sys.stderr.isatty())
    renderer.render_header("约化动力学", preset.provenance)
    trajectories = evaluator.run_dynamics()
    path = _output_path(config, preset, "csv")
    write_csv(path, evaluator.dynamics_columns(trajectories))
    renderer.render_runs(evaluator.results["runs"])
    renderer.render_comparison(evaluator.compare_variants(trajectories))
    renderer.render_output(path)


def run_calibrate(config: RunConfig, numerics: NumericsSettings, renderer: ReportRenderer):
    """求满足 J(ω₀)/ω₀ = η′ 的 η"""
    preset = resolve_preset(config)
    if preset.eta_prime is None:
        raise ConfigError(f"预设 {preset.name} 直接给定 η，没有可标定的 η′")
    rows = Evaluator(preset, numerics, config.deterministic).calibrate()
    renderer.render_calibration(rows)
    if config.output_path:
        lines = ["density eta eta_prime omega0 iho_mass gamma"]
        for row in rows:
            lines.append(f"{row['density']} {row['eta']:.17g} {row['eta_prime']:.17g} {row['omega0']:.17g} "
                         f"{row['iho_mass']:.17g} {row['gamma']:.17g}")
        write_text(config.output_path, "\n".join(lines) + "\n")
        renderer.render_output(config.output_path)


def run_oracle(config: RunConfig, numerics: NumericsSettings, renderer: ReportRenderer):
    """运行全部参考检验"""
    renderer.render_header("参考检验")
    reports = run_oracle_suite(numerics, progress=not config.deterministic and sys.stderr.isatty())
    renderer.render_oracle_reports(reports)
    path = _output_path(config, None, "txt")
    write_text(path, "\n".join(report.to_text() for report in reports))
    renderer.render_output(path)
    failed = [report.name for report in reports if report.gating and not report.passed]
    if failed:
        raise ConvergenceError(f"参考检验未通过: {', '.join(failed)}")


def run_sweep(config: RunConfig, numerics: NumericsSettings, renderer: ReportRenderer):
    """步长减半与记忆加一的收敛扫描"""
    preset = resolve_preset(config)
    evaluator = Evaluator(preset, numerics, config.deterministic, progress=sys.stderr.isatty())
    renderer.render_header("收敛扫描", preset.provenance)
    reports = evaluator.run_sweep()
    renderer.render_sweep(reports)
    path = _output_path(config, preset, "txt")
    write_text(path, "\n".join(f"# {density}\n{report.to_text()}" for density, report in reports.items()))
    renderer.render_output(path)
    failed = [str(density) for density, report in reports.items() if not report.converged]
    if failed:
        raise ConvergenceError(f"收敛扫描偏差超过阈值 {numerics.convergence_threshold}: {', '.join(failed)}")


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig, NumericsSettings, ReportRenderer], None]] = {
    "sdf": run_sdf,
    "dynamics": run_dynamics,
    "calibrate": run_calibrate,
    "oracle": run_oracle,
    "sweep": run_sweep,
}


def error_record(error: BaseException, exit_code: int) -> str:
    """诊断流上的单行机器可读错误记录"""
    return json.dumps({"error": type(error).__name__, "message": str(error), "exit_code": exit_code},
                      ensure_ascii=False)


def _report_error(error: BaseException, console: Console) -> Optional[int]:
    for types, code in EXIT_CODES:
        if isinstance(error, types):
            console.print(f"[bold red]错误：{error}[/bold red]")
            print(error_record(error, code), file=sys.stderr)
            return code
    return None


def run(config: RunConfig, numerics: Optional[NumericsSettings] = None,
        console: Optional[Console] = None) -> int:
    """执行一次命令

    Args:
        config: 运行配置
        numerics: 数值设置
        console: 输出控制台

    Returns:
        int: 退出码，0 成功，1 定义域错误，2 收敛失败，3 I/O 错误
    """
    renderer = ReportRenderer(console)
    try:
        numerics = numerics or get_numerics_settings()
        COMMAND_HANDLERS[config.command](config, numerics, renderer)
        return 0
    except Exception as e:
        logger.debug("命令 %s 失败", config.command, exc_info=True)
        code = _report_error(e, renderer.console)
        if code is None:
            raise
        return code


def show_presets(args) -> int:
    """列出预设目录"""
    ReportRenderer().render_presets(list_presets(), PRESET_CATALOG_VERSION)
    return 0


def _parse_set(items: Optional[List[str]]) -> Dict[str, str]:
    overrides = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set 需要 key=value 形式，得到 {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def build_run_config(args) -> RunConfig:
    """合并配置文件与命令行参数，命令行优先"""
    overrides = _parse_set(getattr(args, "set", None))
    for key in ("delta_t", "memory", "steps", "omega0", "eta_prime"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = repr(value)
    model = getattr(args, "model", None)
    if model:
        variants = [args.variant] if getattr(args, "variant", None) else ["I", "F"]
        overrides["densities"] = ",".join(f"{model}_{v}" for v in variants)

    preset, file_overrides, output_path, deterministic = None, {}, None, False
    if args.config:
        parser = load_config(args.config)
        if parser.has_section("run"):
            from_file = RunConfig.from_parser(parser)
            preset, file_overrides = from_file.preset, from_file.overrides
            output_path, deterministic = from_file.output_path, from_file.deterministic
    return RunConfig(command=args.command,
                     preset=getattr(args, "preset", None) or preset,
                     overrides={**file_overrides, **overrides},
                     output_path=args.out or output_path,
                     deterministic=args.deterministic or deterministic)


def _add_common(parser: argparse.ArgumentParser, with_preset: bool = True):
    if with_preset:
        parser.add_argument("--preset", type=str, help="预设名称，见 list-presets")
        parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="覆盖参数（可重复）")
        parser.add_argument("--delta-t", dest="delta_t", type=float, help="时间步长 δt")
        parser.add_argument("--memory", type=int, help="记忆长度 Δk_max")
        parser.add_argument("--steps", type=int, help="总步数")
    parser.add_argument("--out", type=str, help="输出文件路径")
    parser.add_argument("--deterministic", action="store_true", help="确定性模式（逐位可复现）")


def main(argv: Optional[List[str]] = None) -> int:
    """主函数"""
    parser = argparse.ArgumentParser(description="量子比特自旋-玻色子模型：有效谱密度与约化动力学")

    # 基本配置
    parser.add_argument("--config", type=str, help="配置文件路径")

    # 子命令
    subparsers = parser.add_subparsers(dest="command", help="命令")

    sdf_parser = subparsers.add_parser("sdf", help="采样有效谱密度曲线")
    _add_common(sdf_parser)

    dynamics_parser = subparsers.add_parser("dynamics", help="计算约化密度矩阵的演化")
    _add_common(dynamics_parser)

    calibrate_parser = subparsers.add_parser("calibrate", help="按有效耦合 η′ 标定 η")
    _add_common(calibrate_parser)
    calibrate_parser.add_argument("--model", type=str, choices=["A", "B", "C", "D"], help="模型")
    calibrate_parser.add_argument("--variant", type=str, choices=["I", "F"], help="截止类型")
    calibrate_parser.add_argument("--omega0", type=float, help="特征频率 ω₀")
    calibrate_parser.add_argument("--eta-prime", dest="eta_prime", type=float, help="目标有效耦合 η′")

    oracle_parser = subparsers.add_parser("oracle", help="运行参考检验")
    _add_common(oracle_parser, with_preset=False)

    sweep_parser = subparsers.add_parser("sweep", help="收敛扫描")
    _add_common(sweep_parser)

    subparsers.add_parser("list-presets", help="列出预设")

    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1
    if args.command == "list-presets":
        return show_presets(args)

    configure_logging()
    console = Console()
    numerics = None
    try:
        if args.config:
            numerics = get_numerics_settings(load_config(args.config))
            configure_logging(numerics.log_level)
        config = build_run_config(args)
    except Exception as e:
        code = _report_error(e, console)
        if code is None:
            raise
        return code
    return run(config, numerics, console)


if __name__ == "__main__":
    sys.exit(main())
