import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from multiprocessing import Pool, cpu_count
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import constants, integrate

from spinboson.errors import DomainError, InvariantError, QuadratureError
from spinboson.specfun import IM_W_SIGN
from spinboson.spectral import ModelParams, SpectralDensityId, evaluate, grows_without_bound, resonances
from utils.log import get_logger

logger = get_logger(__name__)

# 预设中的 "Hz" 数值按角频率解读；改为 2π 即按普通频率解读
HZ_TO_ANGULAR = 1.0


@dataclass(frozen=True)
class QuadratureSettings:
    """频率积分的数值参数"""
    epsabs: float = 1e-11
    epsrel: float = 1e-10
    limit: int = 2000
    resonance_window: float = 0.05  # 共振窗口半宽，以 Ω₀ 为单位
    tail_tolerance: float = 1e-8
    resonance_levels: int = 6  # 共振两侧按 10^-j 加密的断点层数


DEFAULT_QUADRATURE = QuadratureSettings()


@dataclass(frozen=True)
class ThermalBathSpec:
    """给定温度下由有效谱密度描述的热库

    频率以 scale_hz（换算为角频率后）为单位，时间以其倒数为单位。
    """
    density: SpectralDensityId
    params: ModelParams
    temperature: float  # K
    scale_hz: float = 1e12
    hz_to_angular: float = HZ_TO_ANGULAR
    coverage: float = 1.0  # 无穷截止积分上限的下界，以 scale 为单位的 1/50
    finite_band_edge: float = 1.0  # 随 Θ 指数增长的 F 型谱密度的硬带边，以 ω_c 为单位
    amplitude: float = 1.0  # J 的整体倍数
    im_w_sign: int = IM_W_SIGN

    def __post_init__(self):
        if not self.temperature > 0.0:
            raise DomainError(f"温度 T={self.temperature} K 必须为正")
        if not self.scale_hz > 0.0:
            raise DomainError(f"频率标度 {self.scale_hz} 必须为正")
        if not self.finite_band_edge > 0.0:
            raise DomainError(f"带边 {self.finite_band_edge} 必须为正")
        if self.im_w_sign not in (1, -1):
            raise DomainError(f"Im W 的分支符号必须是 ±1，得到 {self.im_w_sign}")

    @property
    def beta_hbar(self) -> float:
        """无量纲 ħβ·scale"""
        scale = self.scale_hz * self.hz_to_angular
        return constants.hbar * scale / (constants.k * self.temperature)

    @property
    def band_limited(self) -> bool:
        """J 含 ηωΘ 直接项时随 e^{ω/ω_c} 增长，热库积分只能取到带边"""
        return grows_without_bound(self.density, self.params)

    def support(self) -> float:
        """频率积分上限 ω_max"""
        top = max(50.0 * self.params.omega_c, 50.0 * self.coverage)
        if self.band_limited:
            return min(top, self.finite_band_edge * self.params.omega_c)
        return top

    def spectral_density(self, omega: float) -> float:
        if omega > self.support():
            return 0.0
        return self.amplitude * evaluate(self.density, self.params, omega, self.im_w_sign)

    def thermal_factor(self, omega: float) -> float:
        """coth(ħβω/2)"""
        return 1.0 / math.tanh(0.5 * self.beta_hbar * omega)

    def resonances(self) -> List[float]:
        top = self.support()
        return [r for r in resonances(self.density, self.params) if 0.0 < r < top]

    def breakpoints(self, levels: int = DEFAULT_QUADRATURE.resonance_levels) -> List[float]:
        """共振频率及其两侧 r(1 ± 10^-j) 的断点，j = 2..levels+1

        Γ 固定而 Ω₀ ≫ ω_c 时 J^I 的共振宽度约为 Γe^{−Ω₀/ω_c}/2，需要逐级加密。
        """
        top = self.support()
        points = set()
        for r in self.resonances():
            points.add(r)
            for j in range(2, levels + 2):
                for side in (-1.0, 1.0):
                    p = r * (1.0 + side * 10.0 ** -j)
                    if 0.0 < p < top:
                        points.add(p)
        return sorted(points)


def _quad(fun: Callable[[float], float], a: float, b: float, settings: QuadratureSettings,
          points: Sequence[float] = (), weight: Optional[str] = None, wvar: float = 0.0) -> float:
    """scipy.integrate.quad 的包装，不收敛时报告误差最大的子区间"""
    if b <= a:
        return 0.0
    kwargs = dict(epsabs=settings.epsabs, epsrel=settings.epsrel, limit=settings.limit, full_output=1)
    if weight is not None:
        kwargs.update(weight=weight, wvar=wvar)
    else:
        inner = [p for p in points if a < p < b]
        if inner:
            kwargs["points"] = inner
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        result = integrate.quad(fun, a, b, **kwargs)
    value, error, info = result[0], result[1], result[2]
    if error > 100.0 * max(settings.epsabs, settings.epsrel * abs(value)) or not math.isfinite(value):
        worst = (a, b)
        if isinstance(info, dict) and "elist" in info and info.get("last", 0) > 0:
            last = info["last"]
            i = int(np.argmax(info["elist"][:last]))
            worst = (float(info["alist"][i]), float(info["blist"][i]))
        raise QuadratureError(f"频率积分不收敛: 估计误差 {error:.3g}，最差子区间 {worst}",
                              worst_interval=worst)
    return float(value)


def _segments(bath: ThermalBathSpec, t: float,
              settings: QuadratureSettings) -> List[Tuple[float, float, bool]]:
    """把 [0, ω_max] 切分为 (a, b, 是否直接积分) 的区间

    低频段（ωt ≤ π）与共振窗口直接积分组合被积函数，其余区间拆成 QAWO 振荡积分。
    """
    top = bath.support()
    low = top if t == 0.0 else min(top, math.pi / abs(t))
    edges = {0.0, low, top}
    windows = []
    for r in bath.resonances():
        lo = max(0.0, r * (1.0 - settings.resonance_window))
        hi = min(top, r * (1.0 + settings.resonance_window))
        windows.append((lo, hi))
        edges.update((lo, hi))
    edges = sorted(edges)
    segments = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        direct = b <= low or any(lo <= mid <= hi for lo, hi in windows)
        segments.append((a, b, direct))
    return segments


def _band_integral(bath: ThermalBathSpec, t: float, combined: Callable[[float], float],
                   pieces: Sequence[Tuple[Callable[[float], float], Optional[str]]],
                   settings: QuadratureSettings) -> float:
    total = 0.0
    points = bath.breakpoints(settings.resonance_levels)
    for a, b, direct in _segments(bath, t, settings):
        if direct:
            total += _quad(combined, a, b, settings, points=points)
        else:
            for fun, weight in pieces:
                total += _quad(fun, a, b, settings, weight=weight, wvar=abs(t))
    return total


def correlation(bath: ThermalBathSpec, t: float,
                settings: QuadratureSettings = DEFAULT_QUADRATURE) -> complex:
    """热库关联函数 α(t) = (1/π)∫₀^∞ J(ω)[coth(ħβω/2)cos ωt − i sin ωt] dω

    Args:
        bath: 热库
        t: 时间（以 1/scale 为单位），负时间按 α(−t) = α(t)* 给出

    Returns:
        complex: α(t)
    """
    tau = abs(t)
    J = bath.spectral_density
    weighted = lambda w: J(w) * bath.thermal_factor(w)
    re = _band_integral(bath, tau, lambda w: weighted(w) * math.cos(w * tau),
                        [(weighted, "cos")], settings)
    im = -_band_integral(bath, tau, lambda w: J(w) * math.sin(w * tau),
                         [(J, "sin")], settings)
    value = complex(re, im) / math.pi
    return value.conjugate() if t < 0 else value


def line_broadening(bath: ThermalBathSpec, t: float,
                    settings: QuadratureSettings = DEFAULT_QUADRATURE) -> complex:
    """线型函数 g(t)，满足 g'' = α，g(0) = g'(0) = 0

    Re g = (1/π)∫ J coth (1 − cos ωt)/ω²，Im g = (1/π)∫ J (sin ωt − ωt)/ω²。
    """
    if t < 0.0:
        raise DomainError(f"时间 t={t} 不能为负")
    if t == 0.0:
        return 0j
    J = bath.spectral_density
    damped = lambda w: J(w) * bath.thermal_factor(w) / w ** 2
    re = _band_integral(
        bath, t,
        lambda w: J(w) * bath.thermal_factor(w) * 2.0 * math.sin(0.5 * w * t) ** 2 / w ** 2,
        [(damped, None), (lambda w: -damped(w), "cos")],
        settings)
    im = _band_integral(
        bath, t,
        lambda w: J(w) * (math.sin(w * t) - w * t) / w ** 2,
        [(lambda w: J(w) / w ** 2, "sin"), (lambda w: -t * J(w) / w, None)],
        settings)
    return complex(re, im) / math.pi


def reorganization_energy(bath: ThermalBathSpec,
                          settings: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """重组能 (1/π)∫ J(ω)/ω dω"""
    return _quad(lambda w: bath.spectral_density(w) / w, 0.0, bath.support(), settings,
                 points=bath.breakpoints(settings.resonance_levels)) / math.pi


def tail_estimate(bath: ThermalBathSpec, settings: QuadratureSettings = DEFAULT_QUADRATURE) -> float:
    """截断到 ω_max 后丢失的 Re g 上界估计，硬带边之外 J 取零，估计为 0"""
    if bath.band_limited:
        return 0.0
    top = bath.support()
    J = lambda w: abs(bath.amplitude * evaluate(bath.density, bath.params, w, bath.im_w_sign))
    bound = _quad(lambda w: 2.0 * J(w) * bath.thermal_factor(w) / w ** 2, top, 2.0 * top, settings)
    return bound / math.pi


@dataclass(frozen=True)
class InfluenceCoefficients:
    """对称 Trotter 分裂下的影响泛函系数表

    时间轴上第 k 个路径点占据 [(k−½)δt, (k+½)δt] 与 [0, Nδt] 的交集。
    interior[l] 是两个内部点相隔 l 步的系数（l = 0 为自身项），mixed[l] 是
    一个端点与一个内部点，both[l] 是起点与终点；mixed[0] 是端点的自身项。
    g_half[j] = g(jδt/2)，覆盖到 tail_steps 步时可折叠记忆尾部。
    """
    delta_t: float
    memory_length: int
    interior: Tuple[complex, ...]
    mixed: Tuple[complex, ...]
    both: Tuple[complex, ...]
    g_half: Tuple[complex, ...] = field(default=(), repr=False)

    def __post_init__(self):
        size = self.memory_length + 1
        if not (len(self.interior) == len(self.mixed) == len(self.both) == size):
            raise DomainError(f"系数表长度必须为 {size}")

    @classmethod
    def from_half_table(cls, half: Sequence[complex], delta_t: float,
                        memory_length: int) -> "InfluenceCoefficients":
        """由 g(jδt/2)（j = 0, 1, …，half[0] = 0）的二阶差分构造系数表"""
        if not delta_t > 0.0:
            raise DomainError(f"时间步长 δt={delta_t} 必须为正")
        if memory_length < 0:
            raise DomainError(f"记忆长度 {memory_length} 不能为负")
        half = tuple(complex(v) for v in half)
        if len(half) < 2 * memory_length + 3:
            raise DomainError(f"记忆长度 {memory_length} 需要 {2 * memory_length + 3} 个 g 值，只有 {len(half)} 个")

        def at(x: float) -> complex:
            # x 以 δt 为单位，取值为半整数倍
            return half[int(round(2 * x))]

        interior = [at(1)]
        mixed = [at(0.5)]
        both = [at(0.5)]
        for l in range(1, memory_length + 1):
            interior.append(at(l + 1) - 2.0 * at(l) + at(l - 1))
            mixed.append(at(l + 0.5) - at(l) - at(l - 0.5) + at(l - 1))
            both.append(at(l) - 2.0 * at(l - 0.5) + at(l - 1))
        return cls(delta_t, memory_length, tuple(interior), tuple(mixed), tuple(both), half)

    @classmethod
    def from_line_broadening(cls, g: Callable[[float], complex], delta_t: float,
                             memory_length: int, parallel: bool = False,
                             horizon: int = 0) -> "InfluenceCoefficients":
        """在半步网格上求线型函数 g(t)，再构造系数表

        Args:
            g: 线型函数
            delta_t: 时间步长
            memory_length: 记忆长度 Δk_max
            parallel: 是否用进程池并行求 g 的各个取值（g 须可序列化）
            horizon: 记忆尾部折叠要覆盖的步数，通常取总步数
        """
        if not delta_t > 0.0:
            raise DomainError(f"时间步长 δt={delta_t} 必须为正")
        if memory_length < 0:
            raise DomainError(f"记忆长度 {memory_length} 不能为负")
        if horizon < 0:
            raise DomainError(f"折叠步数 {horizon} 不能为负")
        count = max(2 * memory_length + 2, 2 * horizon + 1)
        times = [0.5 * j * delta_t for j in range(1, count + 1)]
        if parallel:
            with Pool(processes=min(cpu_count(), len(times))) as pool:
                values = pool.map(g, times)
        else:
            values = [g(t) for t in times]
        return cls.from_half_table((0j,) + tuple(values), delta_t, memory_length)

    @property
    def tail_steps(self) -> int:
        """g_half 足以折叠记忆尾部的最大步数"""
        if not self.g_half:
            return 0
        return (len(self.g_half) - 2) // 2

    def _half(self, j: int) -> complex:
        if j >= len(self.g_half):
            raise DomainError(f"第 {j} 个半步超出线型函数表（共 {len(self.g_half)} 项）")
        return self.g_half[j]

    def folded(self, n: int) -> complex:
        """第 n 步上相隔 Δk_max 的内部系数，吸收第 n − Δk_max 个路径点及更早的全部历史

        [g(n+½) − g(n−½)] − [g(K) − g(K−1)]，n = K 时等于 mixed[K]。
        """
        K = self.memory_length
        if K < 1 or n < K:
            raise DomainError(f"记忆长度 {K} 下第 {n} 步没有可折叠的尾部")
        return (self._half(2 * n + 1) - self._half(2 * n - 1)) - (self._half(2 * K) - self._half(2 * K - 2))

    def folded_final(self, n: int) -> complex:
        """终点为第 n 步时的折叠系数，n = K 时等于 both[K]"""
        K = self.memory_length
        if K < 1 or n < K:
            raise DomainError(f"记忆长度 {K} 下第 {n} 步没有可折叠的尾部")
        return (self._half(2 * n) - self._half(2 * n - 1)) - (self._half(2 * K - 1) - self._half(2 * K - 2))

    def resampled(self, delta_t: float, memory_length: int) -> "InfluenceCoefficients":
        """取 δt 为本表步长整数倍的粗网格系数，复用同一张 g 表"""
        stride = int(round(delta_t / self.delta_t))
        if stride < 1 or not math.isclose(stride * self.delta_t, delta_t, rel_tol=1e-12):
            raise DomainError(f"步长 {delta_t} 不是 {self.delta_t} 的整数倍")
        if not self.g_half:
            raise DomainError("系数表没有保存线型函数")
        return InfluenceCoefficients.from_half_table(self.g_half[::stride], delta_t, memory_length)

    def coefficient(self, k: int, k_prime: int, n_final: int) -> complex:
        """路径终点为 n_final 时的 η_{k,k′}（k ≥ k′），不含尾部折叠"""
        if not 0 <= k_prime <= k <= n_final:
            raise DomainError(f"非法下标 k={k}, k′={k_prime}, N={n_final}")
        lag = k - k_prime
        if lag > self.memory_length:
            return 0j
        k_end = k == 0 or k == n_final
        kp_end = k_prime == 0 or k_prime == n_final
        if lag == 0:
            return self.mixed[0] if k_end else self.interior[0]
        if k_end and kp_end:
            return self.both[lag]
        if k_end or kp_end:
            return self.mixed[lag]
        return self.interior[lag]

    def check_damping(self, tolerance: float = 1e-14) -> None:
        """自身项实部必须非负"""
        for label, value in (("内部", self.interior[0]), ("端点", self.mixed[0])):
            if value.real < -tolerance:
                raise InvariantError(f"{label}自身系数实部为负: {value}")

    def to_text(self) -> str:
        """导出为纯文本表，17 位有效数字；保存有 g 表时附在末尾"""
        lines = [f"# delta_t={self.delta_t!r} memory_length={self.memory_length}",
                 "lag re_interior im_interior re_mixed im_mixed re_both im_both"]
        for l in range(self.memory_length + 1):
            row = [self.interior[l], self.mixed[l], self.both[l]]
            lines.append(" ".join([str(l)] + [f"{v.real:.17g} {v.imag:.17g}" for v in row]))
        if self.g_half:
            lines.append("# g_half")
            lines.extend(f"{j} {v.real:.17g} {v.imag:.17g}" for j, v in enumerate(self.g_half))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "InfluenceCoefficients":
        lines = [line for line in text.splitlines() if line.strip()]
        meta = dict(item.split("=") for item in lines[0].lstrip("# ").split())
        body = lines[2:]
        half: Tuple[complex, ...] = ()
        if "# g_half" in body:
            split = body.index("# g_half")
            half = tuple(complex(float(r.split()[1]), float(r.split()[2])) for r in body[split + 1:])
            body = body[:split]
        rows = [line.split() for line in body]
        columns = []
        for j in range(3):
            columns.append(tuple(complex(float(r[1 + 2 * j]), float(r[2 + 2 * j])) for r in rows))
        return cls(float(meta["delta_t"]), int(meta["memory_length"]), *columns, g_half=half)


def build_coefficients(bath: ThermalBathSpec, delta_t: float, memory_length: int,
                       settings: QuadratureSettings = DEFAULT_QUADRATURE,
                       deterministic: bool = True, horizon: int = 0) -> InfluenceCoefficients:
    """把热库离散为影响泛函系数

    Args:
        bath: 热库
        delta_t: 时间步长（以 1/scale 为单位）
        memory_length: 记忆长度 Δk_max
        settings: 积分参数
        deterministic: 为 False 时并行求线型函数
        horizon: 记忆尾部折叠要覆盖的步数，传播前须不小于总步数

    Returns:
        InfluenceCoefficients: 系数表
    """
    tail = tail_estimate(bath, settings)
    if tail > settings.tail_tolerance:
        logger.warning("J_%s 在 ω_max=%.4g 之外的尾部估计 %.3g 超过容差", bath.density,
                       bath.support(), tail)
    coeffs = InfluenceCoefficients.from_line_broadening(
        partial(line_broadening, bath, settings=settings), delta_t, memory_length,
        parallel=not deterministic, horizon=horizon)
    coeffs.check_damping()
    logger.debug("J_%s 系数表:\n%s", bath.density, coeffs.to_text())
    return coeffs
