import json
import math
import os
import time
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from evaluation.oracle import (DiscreteModeBath, OracleReport, chi_term_quadrature, coefficient_quadrature,
                               discrete_dephasing, exact_dephasing, pv_quadrature_R, shi_quadrature,
                               small_bath_exact, w_real_quadrature)
from spinboson.bath import InfluenceCoefficients, ThermalBathSpec, build_coefficients
from spinboson.errors import InvariantError, SpinBosonError
from spinboson.quapi import (ConvergenceReport, PropagationConfig, SystemSpec, TrajectoryResult,
                             convergence_sweep, envelope, max_deviation, propagate)
from spinboson.specfun import chi_term, r_function, shi, w_function
from spinboson.spectral import FrequencyGrid, ModelParams, SpectralDensityId, reduction_check, sample
from utils.config_loader import NumericsSettings
from utils.log import get_logger
from utils.presets import Preset, get_preset

logger = get_logger(__name__)

STRUCTURE_TOLERANCE = 1e-10
# 衰减时间：包络降到初值的 e⁻²
DECAY_LEVEL = math.exp(-2.0)


class Evaluator:
    """对一个预设计算谱密度、动力学、收敛扫描与 I/F 对比"""

    def __init__(self, preset: Preset, numerics: Optional[NumericsSettings] = None,
                 deterministic: bool = False, progress: bool = False):
        """初始化评估器

        Args:
            preset: 预设（已合并覆盖项）
            numerics: 数值设置
            deterministic: 确定性模式，关闭并行与进度条
            progress: 是否显示进度条
        """
        self.preset = preset
        self.numerics = numerics or NumericsSettings()
        self.deterministic = deterministic
        self.progress = progress and not deterministic
        self._params: Dict[SpectralDensityId, ModelParams] = {}

        self.results: Dict[str, Any] = {
            "preset": preset.name,
            "version": preset.version,
            "runs": [],
            "summary": {}
        }

    def params(self, density: SpectralDensityId) -> ModelParams:
        """标定后的模型参数（缓存）"""
        if density not in self._params:
            self._params[density] = self.preset.resolve_params(density, self.numerics.im_w_sign)
        return self._params[density]

    def bath(self, density: SpectralDensityId) -> ThermalBathSpec:
        return self.preset.bath(density, self.params(density), self.numerics.hz_to_angular,
                                self.numerics.coverage, self.numerics.finite_band_edge, self.numerics.im_w_sign)

    def propagation(self) -> PropagationConfig:
        return self.preset.propagation(self.numerics.memory_budget, self.numerics.memory_tail)

    def calibrate(self) -> List[Dict[str, Any]]:
        """逐个谱密度给出标定结果"""
        rows = []
        for density in self.preset.densities:
            params = self.params(density)
            rows.append({"density": str(density), "eta": params.eta, "eta_prime": self.preset.eta_prime,
                         "omega0": self.preset.omega0, "iho_mass": params.iho_mass, "gamma": params.gamma})
        self.results["summary"]["calibration"] = rows
        return rows

    def sample_densities(self, grid: Optional[FrequencyGrid] = None) -> Dict[str, List[float]]:
        """在网格上采样预设中的所有谱密度，返回 CSV 列"""
        grid = grid or self.preset.frequency_grid()
        columns: Dict[str, List[float]] = {f"omega_over_{self.preset.scale_label}": list(grid.points)}
        for density in self.preset.densities:
            columns[f"J_{density}"] = [value for _, value in sample(density, self.params(density), grid,
                                                                    self.numerics.im_w_sign)]
        return columns

    def run_dynamics(self, memory_length: Optional[int] = None) -> Dict[SpectralDensityId, TrajectoryResult]:
        """对每个谱密度传播约化密度矩阵并检查结构不变量

        Args:
            memory_length: 替换预设的记忆长度

        Returns:
            Dict[SpectralDensityId, TrajectoryResult]: 各谱密度的轨迹
        """
        config = self.propagation()
        if memory_length is not None:
            config = replace(config, memory_length=memory_length)
        system = self.preset.system()
        trajectories = {}
        for density in tqdm(self.preset.densities, desc=self.preset.name, disable=not self.progress):
            start = time.time()
            coeffs = build_coefficients(self.bath(density), config.delta_t, config.memory_length,
                                        self.numerics.quadrature, self.deterministic, horizon=config.n_steps)
            result = propagate(system, coeffs, config, progress=self.progress)
            _check_structure(result, str(density))
            trajectories[density] = result
            self.results["runs"].append({
                "density": str(density),
                "delta_t": config.delta_t,
                "memory_length": config.memory_length,
                "n_steps": config.n_steps,
                "trace_drift": result.trace_drift(),
                "hermiticity_defect": result.hermiticity_defect(),
                "min_eigenvalue": float(result.min_eigenvalues.min()),
                "elapsed": time.time() - start,
            })
        return trajectories

    def dynamics_columns(self, trajectories: Dict[SpectralDensityId, TrajectoryResult]) -> Dict[str, List[float]]:
        """轨迹转成 CSV 列：时间、ρ₁₁、|ρ₁₂|"""
        first = next(iter(trajectories.values()))
        columns: Dict[str, List[float]] = {f"t_over_{self.preset.scale_label}": list(first.times)}
        for density, result in trajectories.items():
            columns[f"rho11_{density}"] = list(result.rho11())
        for density, result in trajectories.items():
            columns[f"abs_rho12_{density}"] = list(result.abs_rho12())
        return columns

    def compare_variants(self, trajectories: Dict[SpectralDensityId, TrajectoryResult]) -> Dict[str, Any]:
        """比较各谱密度下的弛豫与退相干时间

        弛豫看 ρ₁₁ 相对 1/2 的包络，退相干看 |ρ₁₂| 的包络；衰减时间取包络降到初值
        e⁻² 的时刻（相邻步线性插值），未降到时为 None。
        """
        decay = {str(density): _decay_times(result) for density, result in trajectories.items()}
        differences = {}
        ids = list(trajectories)
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                dev = max_deviation(trajectories[a], trajectories[b])
                differences[f"{a}-{b}"] = dev
        summary = {"decay_times": decay, "max_pointwise_difference": differences,
                   "faster_first": _ordering(decay)}
        self.results["summary"]["comparison"] = summary
        return summary

    def memory_comparison(self, density: SpectralDensityId, memory_length: int = 0) -> Dict[str, float]:
        """记忆长度 memory_length 与预设记忆长度之间的最大逐点偏差"""
        config = self.propagation()
        short = replace(config, memory_length=memory_length)
        system = self.preset.system()
        bath = self.bath(density)
        runs = []
        for c in (short, config):
            coeffs = build_coefficients(bath, c.delta_t, c.memory_length, self.numerics.quadrature,
                                        self.deterministic, horizon=c.n_steps)
            runs.append(propagate(system, coeffs, c))
        deviation = max_deviation(runs[0], runs[1])
        self.results["summary"]["memory_comparison"] = {"density": str(density),
                                                       "memory_lengths": [memory_length, config.memory_length],
                                                       **deviation}
        return deviation

    def run_sweep(self) -> Dict[SpectralDensityId, ConvergenceReport]:
        """对每个谱密度做收敛扫描"""
        reports = {}
        system = self.preset.system()
        for density in self.preset.densities:
            report = convergence_sweep(system, self.bath(density), self.propagation(),
                                       self.numerics.convergence_threshold, self.numerics.quadrature,
                                       self.deterministic, self.progress)
            reports[density] = report
        self.results["summary"]["sweep"] = {
            str(d): {"max_deviation": r.max_deviation, "converged": r.converged, "deviations": r.deviations}
            for d, r in reports.items()
        }
        return reports

    def save(self, output_dir: str = "results") -> str:
        """把运行记录与汇总写成 JSON"""
        os.makedirs(output_dir, exist_ok=True)
        timestamp = int(time.time())
        result_file = os.path.join(output_dir, f"{self.preset.name}_{timestamp}.json")
        with open(result_file, "w", encoding="utf-8") as f:
            json.dump(self.results, f, ensure_ascii=False, indent=2, default=_json_default)
        return result_file


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return str(value)


def _check_structure(result: TrajectoryResult, label: str) -> None:
    drift = result.trace_drift()
    defect = result.hermiticity_defect()
    if drift > STRUCTURE_TOLERANCE or defect > STRUCTURE_TOLERANCE:
        raise InvariantError(f"{label}: 迹偏差 {drift:.3g}，厄米偏差 {defect:.3g} 超过 1e-10")


def _decay_time(times: np.ndarray, env: np.ndarray, level: float = DECAY_LEVEL) -> Optional[float]:
    """包络降到 level·env[0] 的时刻，在越过的两步之间线性插值"""
    if env[0] <= 0.0:
        return None
    target = level * env[0]
    below = np.nonzero(env <= target)[0]
    if not below.size:
        return None
    i = int(below[0])
    if i == 0 or env[i - 1] == env[i]:
        return float(times[i])
    fraction = (env[i - 1] - target) / (env[i - 1] - env[i])
    return float(times[i - 1] + fraction * (times[i] - times[i - 1]))


def _decay_times(result: TrajectoryResult) -> Dict[str, Optional[float]]:
    return {"rho11": _decay_time(result.times, envelope(result.rho11(), 0.5)),
            "abs_rho12": _decay_time(result.times, envelope(result.abs_rho12()))}


def _ordering(decay: Dict[str, Dict[str, Optional[float]]]) -> Dict[str, List[str]]:
    ordering = {}
    for key in ("rho11", "abs_rho12"):
        ordering[key] = sorted(decay, key=lambda d: math.inf if decay[d][key] is None else decay[d][key])
    return ordering


# ---- 参考检验 ----

def _guarded(name: str, grid: str, check: Callable[[], OracleReport], gating: bool = True) -> OracleReport:
    try:
        return check()
    except SpinBosonError as e:
        logger.warning("参考检验 %s 失败: %s", name, e)
        return OracleReport.failure(name, grid, e, gating)


def check_special_functions() -> List[OracleReport]:
    grid = np.linspace(0.01, 5.0, 200)
    shi_grid = np.linspace(0.01, 5.0, 50)
    return [
        _guarded("w_real_vs_sine_quadrature", "m ∈ [0.01, 5], 200 点", lambda: OracleReport.compare(
            "w_real_vs_sine_quadrature", [w_real_quadrature(m) for m in grid],
            [w_function(m, 1.0).real for m in grid], "m ∈ [0.01, 5], 200 点", 1e-8)),
        _guarded("shi_vs_quadrature", "m ∈ [0.01, 5], 50 点", lambda: OracleReport.compare(
            "shi_vs_quadrature", [shi_quadrature(m) for m in shi_grid], [shi(m) for m in shi_grid],
            "m ∈ [0.01, 5], 50 点", 1e-10)),
        _guarded("chi_term_vs_quadrature", "m ∈ [0.01, 5], 50 点", lambda: OracleReport.compare(
            "chi_term_vs_quadrature", [chi_term_quadrature(m) for m in shi_grid],
            [chi_term(m) for m in shi_grid], "m ∈ [0.01, 5], 50 点", 1e-10)),
    ]


def check_principal_value() -> OracleReport:
    omegas = [0.25, 0.5, 1.0, 2.0, 4.0]
    grid = "ω ∈ {0.25, 0.5, 1, 2, 4}，ω_c = 4"
    return _guarded("r_real_vs_principal_value", grid, lambda: OracleReport.compare(
        "r_real_vs_principal_value", [-pv_quadrature_R(w, 4.0) for w in omegas],
        [r_function(w, 4.0).real for w in omegas], grid, 1e-8,
        detail="Re R 与主值积分相差一个负号"))


def check_reductions() -> List[OracleReport]:
    grid = FrequencyGrid.linspace(0.05, 20.0, 200)
    base = ModelParams(eta=0.02, omega_c=11.0, iho_omega=52.0)
    limits = [("C", "A", dict(lam=0.0, kappa1=0.0, kappa2=1.0)), ("C", "B", dict(kappa2=0.0)),
              ("D", "A", dict(lam=0.0, kappa1=0.0, kappa2=1.0)), ("D", "B", dict(kappa2=0.0))]
    reports = []
    for source, target, values in limits:
        for variant in ("I", "F"):
            name = f"reduction_{source}{variant}_to_{target}{variant}"
            params = replace(base, **values)
            id_from = SpectralDensityId.parse(f"{source}_{variant}")
            id_to = SpectralDensityId.parse(f"{target}_{variant}")
            reports.append(_guarded(name, "ω ∈ [0.05, 20], 200 点", lambda: OracleReport.compare(
                name, 0.0, reduction_check(id_from, id_to, params, grid), "ω ∈ [0.05, 20], 200 点", 1e-12)))
    return reports


def check_coefficients(numerics: NumericsSettings, preset_name: str = "a-wc4") -> List[OracleReport]:
    """影响系数与二维直接积分比较，lag 0..3"""
    preset = get_preset(preset_name)
    density = preset.densities[0]
    bath = preset.bath(density, hz_to_angular=numerics.hz_to_angular, coverage=numerics.coverage,
                       finite_band_edge=numerics.finite_band_edge, sign=numerics.im_w_sign)
    grid = f"{preset_name} {density}, δt = {preset.delta_t}, lag 0..3"

    def check() -> OracleReport:
        coeffs = build_coefficients(bath, preset.delta_t, preset.memory_length, numerics.quadrature)
        reference, candidate = [], []
        for kind, table in (("interior", coeffs.interior), ("mixed", coeffs.mixed), ("both", coeffs.both)):
            for lag in range(preset.memory_length + 1):
                if lag == 0 and kind == "both":
                    continue
                reference.append(coefficient_quadrature(bath, preset.delta_t, lag, kind))
                candidate.append(table[lag])
        return OracleReport.compare("coefficients_vs_double_quadrature", reference, candidate, grid, 1e-8)

    return [_guarded("coefficients_vs_double_quadrature", grid, check)]


def check_dephasing(numerics: NumericsSettings) -> List[OracleReport]:
    """Δ = 0 时 QUAPI 与解析退相干比较

    完整记忆（Δk_max = 步数）下应精确一致；预设步长与记忆长度下包络误差不超过 |ρ₁₂(0)| 的 2%。
    """
    preset = get_preset("dephasing")
    system = preset.system()
    envelope_tolerance = 0.02 * abs(system.initial_state[0, 1])
    reports = []
    for density in preset.densities:
        bath = preset.bath(density, hz_to_angular=numerics.hz_to_angular, coverage=numerics.coverage,
                           finite_band_edge=numerics.finite_band_edge, sign=numerics.im_w_sign)

        def full_memory(bath=bath, density=density) -> OracleReport:
            config = PropagationConfig(2.5, 8, 8, numerics.memory_budget)
            coeffs = build_coefficients(bath, config.delta_t, config.memory_length, numerics.quadrature)
            result = propagate(system, coeffs, config)
            exact = exact_dephasing(system, bath, result.times)
            return OracleReport.compare(f"dephasing_full_memory_{density}", exact, result.abs_rho12(),
                                        "δt = 2.5/ε, Δk_max = 8, 8 步", 1e-6)

        def preset_setting(bath=bath, density=density) -> OracleReport:
            config = preset.propagation(numerics.memory_budget, numerics.memory_tail)
            coeffs = build_coefficients(bath, config.delta_t, config.memory_length, numerics.quadrature,
                                        horizon=config.n_steps)
            result = propagate(system, coeffs, config)
            exact = exact_dephasing(system, bath, result.times)
            return OracleReport.compare(f"dephasing_truncated_{density}", exact, result.abs_rho12(),
                                        "δt = 0.1/ε, Δk_max = 3, t ≤ 20/ε", envelope_tolerance,
                                        detail="容差为 |ρ₁₂(0)| 的 2%")

        reports.append(_guarded(f"dephasing_full_memory_{density}", "δt = 2.5/ε", full_memory))
        reports.append(_guarded(f"dephasing_truncated_{density}", "δt = 0.1/ε", preset_setting))
    return reports


def check_small_bath(numerics: NumericsSettings) -> List[OracleReport]:
    """两模式精确对角化：退相干常数与短时 QUAPI"""
    times = np.linspace(0.0, 4.0, 9)
    modes = DiscreteModeBath((1.0, 1.7), (0.3, 0.25), beta_hbar=2.0)
    dephasing_system = SystemSpec.superposition(1.0, 0.0)

    def prefactor() -> OracleReport:
        exact = small_bath_exact(dephasing_system, modes, times, memory_budget=numerics.memory_budget)
        return OracleReport.compare("dephasing_prefactor_two_modes", exact.abs_rho12(),
                                    discrete_dephasing(dephasing_system, modes, times),
                                    "2 模式，Fock 截断 30，t ≤ 4", 1e-6)

    def short_time() -> OracleReport:
        sampled = DiscreteModeBath.from_density(SpectralDensityId.parse("A_I"),
                                                ModelParams(eta=0.05, omega_c=4.0),
                                                (1.0, 2.0), (1.0, 1.0), beta_hbar=2.0)
        system = SystemSpec.localized(0.0, 1.0)
        config = PropagationConfig(0.25, 8, 8, numerics.memory_budget)
        coeffs = InfluenceCoefficients.from_line_broadening(sampled.line_broadening, config.delta_t,
                                                            config.memory_length)
        result = propagate(system, coeffs, config)
        exact = small_bath_exact(system, sampled, result.times, memory_budget=numerics.memory_budget)
        return OracleReport.compare("small_bath_vs_quapi", exact.rho11(), result.rho11(),
                                    "2 模式粗采样 J_A^I，δt = 0.25，t ≤ 2", 0.01)

    return [_guarded("dephasing_prefactor_two_modes", "2 模式", prefactor),
            _guarded("small_bath_vs_quapi", "2 模式", short_time)]


# 定性结论：(预设, 观测量)；对角初态看 ρ₁₁，叠加初态看 |ρ₁₂|
_CLAIM_PRESETS = {
    "a-wc4": "rho11", "a-wc4-offdiag": "abs_rho12",
    "a-wc10": "rho11", "a-wc10-offdiag": "abs_rho12",
    "b-wc3-omega52": "rho11", "b-wc3-omega52-offdiag": "abs_rho12",
    "b-wc25-omega52": "rho11", "b-wc25-omega52-offdiag": "abs_rho12",
    "cd": "rho11", "cd-offdiag": "abs_rho12",
}
AGREEMENT_TOLERANCE = 0.05


def check_claims(numerics: NumericsSettings) -> List[OracleReport]:
    """预设参数下的定性结论

    - ω_c = 4 的模型 A：J^I 下弛豫与退相干都比 J^F 快；ω_c = 10 时两条轨迹逐点相差 < 0.05
    - 模型 B（Ω₀ = 52）：ω_c = 3 时 J^F 比 J^I 快的反转只报告；ω_c = 25 时逐点相差 < 0.05
    - 模型 C/D：同一变体下 D 比 C 慢
    - 收敛扫描：步长减半、记忆加一及两者同时改变，ρ₁₁ 与 |ρ₁₂| 逐点变化 < 0.02
    """
    trajectories: Dict[str, Dict[str, TrajectoryResult]] = {}

    def runs(name: str) -> Dict[str, TrajectoryResult]:
        if name not in trajectories:
            evaluator = Evaluator(get_preset(name), numerics, deterministic=True)
            trajectories[name] = {str(d): r for d, r in evaluator.run_dynamics().items()}
        return trajectories[name]

    def ordering(name: str, faster: str, slower: str, gating: bool = True) -> OracleReport:
        key = _CLAIM_PRESETS[name]
        label = f"{name} {key}: {faster} 先于 {slower} 衰减"

        def check() -> OracleReport:
            results = runs(name)
            return OracleReport.ordering(f"ordering_{name}_{faster}_{slower}", _decay_times(results[faster])[key],
                                         _decay_times(results[slower])[key], label, gating)

        return _guarded(f"ordering_{name}_{faster}_{slower}", label, check, gating)

    def agreement(name: str) -> OracleReport:
        key = _CLAIM_PRESETS[name]
        label = f"{name} {key}: I/F 逐点相差"

        def check() -> OracleReport:
            first, second = runs(name).values()
            return OracleReport.bound(f"agreement_{name}", max_deviation(first, second)[key], label,
                                      AGREEMENT_TOLERANCE)

        return _guarded(f"agreement_{name}", label, check)

    def convergence(name: str) -> OracleReport:
        key = _CLAIM_PRESETS[name]
        label = f"{name} {key}: δt/2、Δk_max+1 及两者同时"

        def check() -> OracleReport:
            evaluator = Evaluator(get_preset(name), numerics, deterministic=True)
            reports = evaluator.run_sweep()
            worst = max(dev[key] for report in reports.values() for dev in report.deviations.values())
            return OracleReport.bound(f"convergence_{name}", worst, label, numerics.convergence_threshold)

        return _guarded(f"convergence_{name}", label, check)

    reports = []
    for name in ("a-wc4", "a-wc4-offdiag"):
        reports += [ordering(name, "A_I", "A_F"), convergence(name)]
    for name in ("a-wc10", "a-wc10-offdiag", "b-wc25-omega52", "b-wc25-omega52-offdiag"):
        reports.append(agreement(name))
    for name in ("b-wc3-omega52", "b-wc3-omega52-offdiag"):
        reports.append(ordering(name, "B_F", "B_I", gating=False))
    for name in ("cd", "cd-offdiag"):
        reports += [ordering(name, f"C_{variant}", f"D_{variant}") for variant in ("I", "F")]
    return reports


def run_oracle_suite(numerics: Optional[NumericsSettings] = None, progress: bool = False) -> List[OracleReport]:
    """依次运行全部参考检验，失败的检验同样生成报告"""
    numerics = numerics or NumericsSettings()
    groups = [
        ("special_functions", lambda: check_special_functions()),
        ("principal_value", lambda: [check_principal_value()]),
        ("reductions", lambda: check_reductions()),
        ("coefficients", lambda: check_coefficients(numerics)),
        ("small_bath", lambda: check_small_bath(numerics)),
        ("dephasing", lambda: check_dephasing(numerics)),
        ("claims", lambda: check_claims(numerics)),
    ]
    reports = []
    for name, group in tqdm(groups, desc="oracle", disable=not progress):
        logger.info("运行参考检验组 %s", name)
        reports.extend(group())
    return reports
