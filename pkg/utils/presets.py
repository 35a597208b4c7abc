from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Tuple

from spinboson.bath import HZ_TO_ANGULAR, ThermalBathSpec
from spinboson.errors import ConfigError, DomainError
from spinboson.quapi import PropagationConfig, SystemSpec
from spinboson.specfun import IM_W_SIGN
from spinboson.spectral import FrequencyGrid, ModelParams, SpectralDensityId, calibrate_eta

PRESET_CATALOG_VERSION = "2"

LOCALIZED = "localized"
SUPERPOSITION = "superposition"


@dataclass(frozen=True)
class Preset:
    """一组完整的运行参数

    频率以 scale 为单位：对角元运行 scale = Δ，非对角元运行 scale = ε。
    eta_prime 给定时逐个谱密度标定 η；否则直接使用 params.eta。
    """
    name: str
    provenance: str
    densities: Tuple[SpectralDensityId, ...]
    params: ModelParams
    eta_prime: Optional[float] = None
    omega0: float = 1.0
    hold_gamma: Optional[float] = None  # 给定时保持 Γ 不变，M 由 κ₁η/Γ 导出
    epsilon: float = 0.01
    delta: float = 1.0
    initial: str = LOCALIZED
    temperature: float = 300.0
    scale_hz: float = 1e12
    delta_t: float = 0.1
    memory_length: int = 3
    n_steps: int = 400
    grid: Tuple[float, float, int] = (0.05, 20.0, 400)
    version: str = PRESET_CATALOG_VERSION

    @property
    def scale_label(self) -> str:
        """时间列的单位名"""
        return "Delta" if self.initial == LOCALIZED else "epsilon"

    def system(self) -> SystemSpec:
        if self.initial == LOCALIZED:
            return SystemSpec.localized(self.epsilon, self.delta)
        return SystemSpec.superposition(self.epsilon, self.delta)

    def propagation(self, memory_budget: Optional[int] = None, memory_tail: bool = True) -> PropagationConfig:
        if memory_budget is None:
            return PropagationConfig(self.delta_t, self.memory_length, self.n_steps, memory_tail=memory_tail)
        return PropagationConfig(self.delta_t, self.memory_length, self.n_steps, memory_budget, memory_tail)

    def frequency_grid(self) -> FrequencyGrid:
        start, stop, num = self.grid
        return FrequencyGrid.linspace(start, stop, int(num))

    def resolve_params(self, density: SpectralDensityId, sign: int = IM_W_SIGN) -> ModelParams:
        """按 η′ 标定（或直接取 η）后的模型参数"""
        params = self.params
        if self.eta_prime is not None:
            eta = calibrate_eta(density, params, self.omega0, self.eta_prime, hold_gamma=self.hold_gamma, sign=sign)
            params = params.with_eta(eta)
        if self.hold_gamma is not None:
            params = params.with_gamma(self.hold_gamma)
        return params

    def bath(self, density: SpectralDensityId, params: Optional[ModelParams] = None,
             hz_to_angular: float = HZ_TO_ANGULAR, coverage: float = 1.0,
             finite_band_edge: float = 1.0, sign: int = IM_W_SIGN) -> ThermalBathSpec:
        if params is None:
            params = self.resolve_params(density, sign)
        return ThermalBathSpec(density, params, self.temperature, self.scale_hz, hz_to_angular, coverage,
                               finite_band_edge, im_w_sign=sign)

    def with_overrides(self, overrides: Mapping[str, str]) -> "Preset":
        """合并 key=value 覆盖项，覆盖项优先；未知键抛出 ConfigError"""
        preset = self
        for key, raw in overrides.items():
            if key not in OVERRIDE_KEYS:
                raise ConfigError(f"未知参数 {key}，可用参数: {', '.join(sorted(OVERRIDE_KEYS))}")
            try:
                preset = OVERRIDE_KEYS[key](preset, raw.strip())
            except ConfigError:
                raise
            except (ValueError, DomainError) as e:
                raise ConfigError(f"参数 {key}={raw!r} 无效: {e}") from e
        return preset


def _set(name: str, cast):
    return lambda p, raw: replace(p, **{name: cast(raw)})


def _set_param(name: str):
    return lambda p, raw: replace(p, params=replace(p.params, **{name: float(raw)}))


def _set_eta(p: Preset, raw: str) -> Preset:
    # 直接给定 η 时不再标定
    return replace(p, eta_prime=None, params=p.params.with_eta(float(raw)))


def _set_initial(p: Preset, raw: str) -> Preset:
    if raw not in (LOCALIZED, SUPERPOSITION):
        raise ConfigError(f"初态必须是 {LOCALIZED} 或 {SUPERPOSITION}，得到 {raw}")
    return replace(p, initial=raw)


def _set_densities(p: Preset, raw: str) -> Preset:
    ids = tuple(SpectralDensityId.parse(item) for item in raw.split(",") if item.strip())
    if not ids:
        raise ConfigError("densities 不能为空")
    return replace(p, densities=ids)


def _set_grid(index: int, cast):
    def apply(p: Preset, raw: str) -> Preset:
        grid = list(p.grid)
        grid[index] = cast(raw)
        return replace(p, grid=tuple(grid))
    return apply


OVERRIDE_KEYS = {
    "eta": _set_eta,
    "eta_prime": _set("eta_prime", float),
    "omega0": _set("omega0", float),
    "omega_c": _set_param("omega_c"),
    "lam": _set_param("lam"),
    "kappa1": _set_param("kappa1"),
    "kappa2": _set_param("kappa2"),
    "iho_mass": _set_param("iho_mass"),
    "iho_omega": _set_param("iho_omega"),
    "gamma": _set("hold_gamma", float),
    "epsilon": _set("epsilon", float),
    "delta": _set("delta", float),
    "initial": _set_initial,
    "temperature": _set("temperature", float),
    "scale_hz": _set("scale_hz", float),
    "delta_t": _set("delta_t", float),
    "memory": _set("memory_length", int),
    "steps": _set("n_steps", int),
    "densities": _set_densities,
    "grid_start": _set_grid(0, float),
    "grid_stop": _set_grid(1, float),
    "grid_points": _set_grid(2, int),
}


def _pair(model: str) -> Tuple[SpectralDensityId, ...]:
    return (SpectralDensityId.parse(f"{model}_I"), SpectralDensityId.parse(f"{model}_F"))


def _diagonal(**kwargs) -> Dict:
    return dict(epsilon=0.01, delta=1.0, initial=LOCALIZED, **kwargs)


def _off_diagonal(**kwargs) -> Dict:
    return dict(epsilon=1.0, delta=0.01, initial=SUPERPOSITION, **kwargs)


def _build_catalog() -> Dict[str, Preset]:
    catalog: Dict[str, Preset] = {}

    def add(preset: Preset) -> None:
        catalog[preset.name] = preset

    # 模型 A：I 与 F 两种截止的对比
    for suffix, setup, label in (("", _diagonal, "ρ₁₁, ρ(0) = |0⟩⟨0|, ε = 0.01Δ"),
                                 ("-offdiag", _off_diagonal, "|ρ₁₂|, ρ(0) = |Ψ₀⟩⟨Ψ₀|, Δ = 0.01ε")):
        for omega_c in (4.0, 4.1, 4.3, 10.0):
            add(Preset(name=f"a-wc{omega_c:g}{suffix}",
                       provenance=f"模型 A，ω_c = {omega_c:g}，η′ = 0.004，T = 300 K；{label}",
                       densities=_pair("A"), params=ModelParams(eta=0.0, omega_c=omega_c),
                       eta_prime=0.004, **setup()))

    # 模型 B：正文读法 Ω₀ = 52 与图注读法 Ω₀ = 10，两者都取 Γ = 52
    for suffix, setup, label in (("", _diagonal, "ρ₁₁"), ("-offdiag", _off_diagonal, "|ρ₁₂|")):
        for omega_c in (3.0, 5.0, 10.0, 25.0):
            base = ModelParams(eta=0.0, omega_c=omega_c, lam=1.0, kappa1=1.0)
            add(Preset(name=f"b-wc{omega_c:g}-omega52{suffix}",
                       provenance=f"模型 B，ω_c = {omega_c:g}，η′ = 0.0035，Ω₀ = 52，Γ = 52；{label}",
                       densities=_pair("B"), params=replace(base, iho_omega=52.0),
                       eta_prime=0.0035, hold_gamma=52.0, **setup()))
            add(Preset(name=f"b-wc{omega_c:g}-gamma52{suffix}",
                       provenance=f"模型 B，ω_c = {omega_c:g}，η′ = 0.0035，Γ = 52，Ω₀ = 10；{label}",
                       densities=_pair("B"), params=replace(base, iho_omega=10.0),
                       eta_prime=0.0035, hold_gamma=52.0, **setup()))

    # 八个谱密度的曲线数据
    add(Preset(name="all-densities",
               provenance="八个有效谱密度，η = 0.02，λ = κ₁ = κ₂ = 1，Γ = 52，Ω₀ = 10，ω_c = 11，ω ∈ (0, 20]",
               densities=tuple(SpectralDensityId.all()),
               params=ModelParams(eta=0.02, omega_c=11.0, iho_omega=10.0).with_gamma(52.0),
               hold_gamma=52.0, omega0=10.0, grid=(0.05, 20.0, 400)))

    # 模型 C 与 D
    cd = _pair("C") + _pair("D")
    for suffix, setup, label in (("", _diagonal, "ρ₁₁"), ("-offdiag", _off_diagonal, "|ρ₁₂|")):
        add(Preset(name=f"cd{suffix}",
                   provenance=f"模型 C 对比 D，κ₁ = κ₂ = λ = 1，Ω₀ = 10，Γ = 52，ω_c = 7，η′ = 0.0035；{label}",
                   densities=cd, params=ModelParams(eta=0.0, omega_c=7.0, iho_omega=10.0),
                   eta_prime=0.0035, hold_gamma=52.0, **setup()))

    # 纯退相干基准：Δ 严格为 0
    add(Preset(name="dephasing",
               provenance="Δ = 0，ε = 1，模型 A（I 与 F），ω_c = 4，η′ = 0.004，t ∈ [0, 20/ε]",
               densities=_pair("A"), params=ModelParams(eta=0.0, omega_c=4.0),
               eta_prime=0.004, epsilon=1.0, delta=0.0, initial=SUPERPOSITION, n_steps=200))
    return catalog


PRESETS: Dict[str, Preset] = _build_catalog()


def _build_aliases() -> Dict[str, str]:
    aliases = {"fig4": "all-densities", "fig5": "cd", "fig5-offdiag": "cd-offdiag",
               "figB-text": "b-wc3-omega52", "figB-caption": "b-wc3-gamma52"}
    for letters, suffix in (("abcd", ""), ("efgh", "-offdiag")):
        for letter, omega_c in zip(letters, ("4", "4.1", "4.3", "10")):
            aliases[f"fig2-{letter}"] = f"a-wc{omega_c}{suffix}"
        for letter, omega_c in zip(letters, ("3", "5", "10", "25")):
            aliases[f"fig3-{letter}"] = f"b-wc{omega_c}-omega52{suffix}"
            aliases[f"fig3-caption-{letter}"] = f"b-wc{omega_c}-gamma52{suffix}"
    return aliases


# 别名 → 目录中的预设名；a–d 为 ρ₁₁ 运行，e–h 为对应的 |ρ₁₂| 运行
PRESET_ALIASES: Dict[str, str] = _build_aliases()


def get_preset(name: str) -> Preset:
    """按名称或别名取预设；别名取到的预设以别名命名"""
    if name in PRESET_ALIASES:
        return replace(PRESETS[PRESET_ALIASES[name]], name=name)
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"未知预设 {name}，可用预设见 list-presets") from None


def list_presets() -> List[Tuple[str, str]]:
    """预设名与一行出处说明，别名排在目录之后"""
    rows = [(name, preset.provenance) for name, preset in PRESETS.items()]
    rows.extend((alias, f"同 {target}") for alias, target in PRESET_ALIASES.items())
    return rows
