from typing import Any, Dict, List, Optional, Sequence, Tuple

from rich.box import ROUNDED
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from evaluation.oracle import OracleReport
from spinboson.quapi import ConvergenceReport
from spinboson.spectral import SpectralDensityId


def _fmt(value: Optional[float], digits: int = 4) -> str:
    if value is None:
        return "-"
    return f"{value:.{digits}g}"


class ReportRenderer:
    """命令结果的终端渲染器"""

    def __init__(self, console: Optional[Console] = None):
        """初始化渲染器

        Args:
            console: 输出控制台，默认标准输出
        """
        self.console = console or Console()

    def render_header(self, title: str, subtitle: str = ""):
        """渲染命令标题"""
        text = f"[bold cyan]{title}[/bold cyan]"
        if subtitle:
            text += f" - {subtitle}"
        self.console.print(Panel(text, border_style="cyan", box=ROUNDED))

    def render_presets(self, presets: Sequence[Tuple[str, str]], version: str):
        table = Table(title=f"预设目录 (版本 {version})")
        table.add_column("名称", style="cyan")
        table.add_column("出处", style="green")
        for name, provenance in presets:
            table.add_row(name, provenance)
        self.console.print(table)

    def render_calibration(self, rows: List[Dict[str, Any]]):
        table = Table(title="η 标定")
        table.add_column("谱密度", style="cyan")
        table.add_column("η", style="green")
        table.add_column("η′", style="blue")
        table.add_column("ω₀")
        table.add_column("M")
        table.add_column("Γ", style="yellow")
        for row in rows:
            table.add_row(row["density"], f"{row['eta']:.12g}", _fmt(row["eta_prime"]),
                          _fmt(row["omega0"]), _fmt(row["iho_mass"]), _fmt(row["gamma"]))
        self.console.print(table)

    def render_runs(self, runs: List[Dict[str, Any]]):
        """渲染每次传播的结构检查"""
        table = Table(title="传播记录")
        table.add_column("谱密度", style="cyan")
        table.add_column("δt")
        table.add_column("Δk_max")
        table.add_column("步数")
        table.add_column("迹偏差", style="green")
        table.add_column("厄米偏差", style="green")
        table.add_column("最小本征值", style="yellow")
        for run in runs:
            eig = run["min_eigenvalue"]
            eig_text = f"[red]{eig:.3g}[/red]" if eig < -1e-6 else f"{eig:.3g}"
            table.add_row(run["density"], _fmt(run["delta_t"]), str(run["memory_length"]), str(run["n_steps"]),
                          f"{run['trace_drift']:.2e}", f"{run['hermiticity_defect']:.2e}", eig_text)
        self.console.print(table)

    def render_comparison(self, summary: Dict[str, Any]):
        table = Table(title="衰减时间（包络降到 e⁻²）")
        table.add_column("谱密度", style="cyan")
        table.add_column("弛豫 ρ₁₁", style="green")
        table.add_column("退相干 |ρ₁₂|", style="blue")
        for density, times in summary["decay_times"].items():
            table.add_row(density, _fmt(times["rho11"]), _fmt(times["abs_rho12"]))
        self.console.print(table)
        for key, label in (("rho11", "弛豫"), ("abs_rho12", "退相干")):
            self.console.print(f"{label}由快到慢: {' > '.join(summary['faster_first'][key])}")
        for pair, dev in summary["max_pointwise_difference"].items():
            self.console.print(f"  {pair}: max|Δρ₁₁| = {dev['rho11']:.3g}, "
                               f"max|Δ|ρ₁₂|| = {dev['abs_rho12']:.3g}")

    def render_sweep(self, reports: Dict[SpectralDensityId, ConvergenceReport]):
        table = Table(title="收敛扫描")
        table.add_column("谱密度", style="cyan")
        table.add_column("δt/2 偏差")
        table.add_column("Δk_max+1 偏差")
        table.add_column("两者同时")
        table.add_column("阈值")
        table.add_column("结论")
        for density, report in reports.items():
            half = max(report.deviations["half_step"].values())
            deeper = max(report.deviations["memory_plus_one"].values())
            both = max(report.deviations["half_step_memory_plus_one"].values())
            verdict = "[green]收敛[/green]" if report.converged else "[red]未收敛[/red]"
            table.add_row(str(density), f"{half:.3g}", f"{deeper:.3g}", f"{both:.3g}", _fmt(report.threshold), verdict)
        self.console.print(table)

    def render_oracle_reports(self, reports: List[OracleReport]):
        table = Table(title="参考检验")
        table.add_column("名称", style="cyan")
        table.add_column("最大绝对误差")
        table.add_column("最大相对误差")
        table.add_column("容差")
        table.add_column("比较点", style="blue")
        table.add_column("结果")
        for report in reports:
            if report.passed:
                status = "[green]通过[/green]"
            elif report.gating:
                status = "[bold red]失败[/bold red]"
            else:
                status = "[yellow]仅报告[/yellow]"
            table.add_row(report.name, f"{report.max_abs_error:.3e}", f"{report.max_rel_error:.3e}",
                          f"{report.tolerance:.1e}", report.grid, status)
        self.console.print(table)

    def render_output(self, path: str):
        self.console.print(f"\n结果已写入: [bold]{path}[/bold]")
