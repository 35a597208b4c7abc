import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, linalg

from spinboson.bath import ThermalBathSpec
from spinboson.errors import ConvergenceError, DomainError, MemoryBudgetError, QuadratureError, TruncationError
from spinboson.quapi import ConvergenceRecord, SystemSpec, TrajectoryResult, default_memory_budget
from spinboson.spectral import ModelParams, SpectralDensityId, evaluate
from utils.log import get_logger

logger = get_logger(__name__)

# |ρ₁₂| 的衰减指数 Γ_d(t) = (4/π)∫ J coth (1 − cos ωt)/ω²，对应 J = (π/2)Σ c²/ω δ(ω − ωᵢ)
DEPHASING_PREFACTOR = 4.0 / math.pi
FOCK_CUT = 30
THERMAL_WEIGHT = 1.0 - 1e-10
TOP_FOCK_POPULATION = 1e-8
MAX_MODES = 4


@dataclass
class OracleReport:
    """参考实现与被测实现的比较结果，失败时同样生成"""
    name: str
    max_abs_error: float
    max_rel_error: float
    grid: str
    passed: bool
    tolerance: float = 0.0
    gating: bool = True  # False 表示只报告、不作为验收条件
    detail: str = ""

    @classmethod
    def compare(cls, name: str, reference, candidate, grid: str, tolerance: float,
                gating: bool = True, detail: str = "") -> "OracleReport":
        """逐点比较两组数值，以最大绝对误差判定；相对误差只记录"""
        ref = np.atleast_1d(np.asarray(reference))
        cand = np.atleast_1d(np.asarray(candidate))
        diff = np.abs(ref - cand)
        scale = np.maximum(np.abs(ref), np.finfo(float).tiny)
        max_abs = float(np.max(diff)) if diff.size else 0.0
        max_rel = float(np.max(diff / scale)) if diff.size else 0.0
        if not (math.isfinite(max_abs) and math.isfinite(max_rel)):
            max_abs = max_rel = math.inf
        passed = max_abs <= tolerance
        return cls(name, max_abs, max_rel, grid, passed, tolerance, gating, detail)

    @classmethod
    def bound(cls, name: str, value: float, grid: str, tolerance: float, gating: bool = True) -> "OracleReport":
        """单个量不超过上界；相对误差列记录 value / tolerance"""
        value = float(value) if math.isfinite(value) else math.inf
        return cls(name, value, value / tolerance, grid, value <= tolerance, tolerance, gating)

    @classmethod
    def ordering(cls, name: str, faster: Optional[float], slower: Optional[float], grid: str,
                 gating: bool = True) -> "OracleReport":
        """判定 faster < slower（None 视为无穷长）；误差列记录超出的幅度"""
        fast = math.inf if faster is None else faster
        slow = math.inf if slower is None else slower
        excess = max(0.0, fast - slow) if math.isfinite(fast) else math.inf
        relative = excess / slow if math.isfinite(slow) and slow > 0.0 else (0.0 if excess == 0.0 else math.inf)
        return cls(name, excess, relative, grid, fast < slow, 0.0, gating, f"{fast:.4g} < {slow:.4g}")

    @classmethod
    def failure(cls, name: str, grid: str, error: Exception, gating: bool = True) -> "OracleReport":
        return cls(name, math.inf, math.inf, grid, False, 0.0, gating, f"{type(error).__name__}: {error}")

    def to_text(self) -> str:
        status = "PASS" if self.passed else ("FAIL" if self.gating else "INFO")
        lines = [f"name: {self.name}",
                 f"max_abs_error: {self.max_abs_error:.6e}",
                 f"max_rel_error: {self.max_rel_error:.6e}",
                 f"tolerance: {self.tolerance:.3e}",
                 f"grid: {self.grid}",
                 f"status: {status}"]
        if self.detail:
            lines.append(f"detail: {self.detail}")
        return "\n".join(lines) + "\n"


def _quad(fun, a, b, **kwargs) -> float:
    kwargs.setdefault("epsabs", 1e-14)
    kwargs.setdefault("epsrel", 1e-13)
    kwargs.setdefault("limit", 500)
    value, error = integrate.quad(fun, a, b, **kwargs)[:2]
    if not math.isfinite(value) or error > 1e-9 * max(1.0, abs(value)):
        raise QuadratureError(f"参考积分不收敛: [{a}, {b}] 误差 {error:.3g}", worst_interval=(a, b))
    return value


def shi_quadrature(m: float) -> float:
    """直接积分 ∫₀^m sinh(t)/t dt"""
    if m < 0.0:
        raise DomainError(f"m={m} 不能为负")
    return _quad(lambda t: math.sinh(t) / t if t != 0.0 else 1.0, 0.0, m)


def chi_term_quadrature(m: float) -> float:
    """γ_E + ln m + ∫₀^m (cos t − 1)/t dt"""
    if m <= 0.0:
        raise DomainError(f"m={m} 必须为正")
    integral = _quad(lambda t: (math.cos(t) - 1.0) / t if t != 0.0 else 0.0, 0.0, m)
    return float(np.euler_gamma) + math.log(m) + integral


def w_real_quadrature(m: float) -> float:
    """Re W = −(1/π)∫₀^∞ sin(mx)/(1+x²) dx

    [0, 50/m] 上用 QAWO 加权积分，尾部用 QAWF 傅里叶积分。
    """
    if m <= 0.0:
        raise DomainError(f"m={m} 必须为正")
    lorentz = lambda x: 1.0 / (1.0 + x * x)
    split = 50.0 / m
    head = _quad(lorentz, 0.0, split, weight="sin", wvar=m)
    tail = integrate.quad(lorentz, split, np.inf, weight="sin", wvar=m, epsabs=1e-14, limlst=100)[0]
    return -(head + tail) / math.pi


def pv_integrand(x: float, omega: float, omega_c: float) -> float:
    """e^{−x/ω_c}/(x² − ω²)"""
    return math.exp(-x / omega_c) / (x * x - omega * omega)


def pv_quadrature_R(omega: float, omega_c: float, tolerance: float = 1e-9,
                    max_levels: int = 12) -> float:
    """主值积分 PV∫₀^∞ e^{−x/ω_c}/(x² − ω²) dx

    对称挖去 (ω−δ, ω+δ)，δ 依次减半，按 δ 的奇次幂做 Richardson 外推。

    Args:
        omega: 极点位置 ω > 0
        omega_c: 截止频率 ω_c > 0
        tolerance: 相邻外推值的收敛容差
        max_levels: 最多减半次数

    Returns:
        float: 主值积分

    Raises:
        ConvergenceError: 外推未在 max_levels 内收敛
    """
    if not (omega > 0.0 and omega_c > 0.0):
        raise DomainError(f"ω={omega} 与 ω_c={omega_c} 必须为正", omega=omega)
    f = lambda x: pv_integrand(x, omega, omega_c)

    def excised(delta: float) -> float:
        return _quad(f, 0.0, omega - delta) + _quad(f, omega + delta, np.inf)

    delta = 0.25 * omega
    table: List[List[float]] = [[excised(delta)]]
    for level in range(1, max_levels + 1):
        delta *= 0.5
        row = [excised(delta)]
        for i in range(1, level + 1):
            factor = 2.0 ** (2 * i - 1) - 1.0
            row.append(row[i - 1] + (row[i - 1] - table[level - 1][i - 1]) / factor)
        table.append(row)
        change = abs(row[-1] - table[level - 1][-1])
        if change < tolerance * max(1.0, abs(row[-1])):
            return row[-1]
    raise ConvergenceError(f"主值积分外推未收敛: ω={omega}, ω_c={omega_c}, 最后变化 {change:.3g}")


def decoherence_function(bath: ThermalBathSpec, times: Sequence[float]) -> np.ndarray:
    """Γ_d(t) = (4/π)∫₀^ω_max J(ω) coth(ħβω/2)(1 − cos ωt)/ω² dω，对所有时刻一次向量积分"""
    times = np.asarray(times, dtype=float)

    def integrand(w: float) -> np.ndarray:
        return (bath.spectral_density(w) * bath.thermal_factor(w)
                * 2.0 * np.sin(0.5 * w * times) ** 2 / w ** 2)

    value, error, info = integrate.quad_vec(integrand, 0.0, bath.support(), epsabs=1e-13,
                                            epsrel=1e-11, limit=20000, points=bath.breakpoints() or None,
                                            full_output=True)
    if not info.success:
        raise QuadratureError(f"退相干函数积分不收敛，误差 {error:.3g}", worst_interval=(0.0, bath.support()))
    return DEPHASING_PREFACTOR * value


def exact_dephasing(system: SystemSpec, bath: ThermalBathSpec, times: Sequence[float]) -> np.ndarray:
    """Δ = 0 时 |ρ₁₂(t)| = |ρ₁₂(0)| exp[−Γ_d(t)]"""
    if system.delta != 0.0:
        raise DomainError(f"纯退相干解要求 Δ = 0，得到 Δ={system.delta}")
    return abs(system.initial_state[0, 1]) * np.exp(-decoherence_function(bath, times))


def correlation_quadrature(bath: ThermalBathSpec, taus: Sequence[float]) -> np.ndarray:
    """对一组时间差 τ 同时积分 α(τ)，独立于热库模块的分段积分"""
    taus = np.asarray(taus, dtype=float)

    def integrand(w: float) -> np.ndarray:
        j = bath.spectral_density(w)
        return np.concatenate([j * bath.thermal_factor(w) * np.cos(w * taus), -j * np.sin(w * taus)])

    value, error, info = integrate.quad_vec(integrand, 0.0, bath.support(), epsabs=1e-14,
                                            epsrel=1e-12, limit=20000, points=bath.breakpoints() or None,
                                            full_output=True)
    if not info.success:
        raise QuadratureError(f"关联函数积分不收敛，误差 {error:.3g}", worst_interval=(0.0, bath.support()))
    n = taus.size
    return (value[:n] + 1j * value[n:]) / math.pi


# 各类系数的 (前一格, 后一格) 区间，以 δt 为单位，lag = l
_CELLS = {
    "interior": lambda l: ((0.0, 1.0), (l, l + 1.0)),
    "mixed": lambda l: ((0.0, 0.5), (l - 0.5, l + 0.5)),
    "both": lambda l: ((0.0, 0.5), (l - 0.5, l)),
}


def coefficient_quadrature(bath: ThermalBathSpec, delta_t: float, lag: int,
                           kind: str = "interior", nodes: int = 32) -> complex:
    """用二维 Gauss–Legendre 积分直接计算一个影响系数

    lag > 0 时在两个格子的乘积区域上积分 α(t − t′)；lag = 0 时在同一格子的
    三角形 t′ < t 上积分。

    Args:
        bath: 热库
        delta_t: 步长
        lag: 间隔步数
        kind: interior（两内部点）、mixed（一个端点）或 both（起点与终点）
        nodes: 每个方向的节点数
    """
    if kind not in _CELLS:
        raise DomainError(f"未知系数类型 {kind}")
    if lag < 0:
        raise DomainError(f"lag={lag} 不能为负")
    x, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    if lag == 0:
        width = delta_t * (1.0 if kind == "interior" else 0.5)
        # t ∈ [0, width]，t′ = t·s，雅可比 t
        t = width * u
        taus = (t[:, None] * (1.0 - u[None, :])).ravel()
        weights = (width * wu[:, None] * t[:, None] * wu[None, :]).ravel()
    else:
        (a0, a1), (b0, b1) = _CELLS[kind](lag)
        early = delta_t * (a0 + (a1 - a0) * u)
        late = delta_t * (b0 + (b1 - b0) * u)
        taus = (late[:, None] - early[None, :]).ravel()
        weights = (delta_t ** 2 * (b1 - b0) * (a1 - a0) * wu[:, None] * wu[None, :]).ravel()
    return complex(np.sum(weights * correlation_quadrature(bath, taus)))


@dataclass(frozen=True)
class DiscreteModeBath:
    """有限个谐振子组成的热库，质量为 1，耦合项 σ_z Σ cᵢ xᵢ

    对应 J(ω) = (π/2)Σ cᵢ²/ωᵢ δ(ω − ωᵢ)。
    """
    frequencies: Tuple[float, ...]
    couplings: Tuple[float, ...]
    beta_hbar: float

    def __post_init__(self):
        if len(self.frequencies) != len(self.couplings):
            raise DomainError("模式频率与耦合数目不一致")
        if any(w <= 0.0 for w in self.frequencies):
            raise DomainError("模式频率必须为正")
        if not self.beta_hbar > 0.0:
            raise DomainError(f"ħβ={self.beta_hbar} 必须为正")

    @classmethod
    def from_density(cls, density: SpectralDensityId, params: ModelParams, frequencies: Sequence[float],
                     widths: Sequence[float], beta_hbar: float) -> "DiscreteModeBath":
        """按 cᵢ² = (2/π) J(ωᵢ) ωᵢ Δωᵢ 粗采样连续谱密度"""
        couplings = []
        for w, dw in zip(frequencies, widths):
            couplings.append(math.sqrt(max(0.0, 2.0 / math.pi * evaluate(density, params, w) * w * dw)))
        return cls(tuple(float(w) for w in frequencies), tuple(couplings), beta_hbar)

    def line_broadening(self, t: float) -> complex:
        """g(t) = Σ cᵢ²/(2ωᵢ³)[coth(ħβωᵢ/2)(1 − cos ωᵢt) + i(sin ωᵢt − ωᵢt)]"""
        total = 0j
        for w, c in zip(self.frequencies, self.couplings):
            coth = 1.0 / math.tanh(0.5 * self.beta_hbar * w)
            total += c * c / (2.0 * w ** 3) * complex(coth * (1.0 - math.cos(w * t)),
                                                      math.sin(w * t) - w * t)
        return total


def discrete_dephasing(system: SystemSpec, modes: DiscreteModeBath, times: Sequence[float]) -> np.ndarray:
    """离散模式下的 |ρ₁₂(t)| = |ρ₁₂(0)| exp[−Σ 2cᵢ²/ωᵢ³ coth (1 − cos ωᵢt)]"""
    if system.delta != 0.0:
        raise DomainError(f"纯退相干解要求 Δ = 0，得到 Δ={system.delta}")
    decay = np.array([4.0 * modes.line_broadening(t).real for t in times])
    return abs(system.initial_state[0, 1]) * np.exp(-decay)


def _thermal_configurations(modes: DiscreteModeBath, fock_cut: int) -> List[Tuple[Tuple[int, ...], float]]:
    """按权重从大到小取热平衡 Fock 组态，直到累计权重达到 1 − 1e-10"""
    marginals = []
    for w in modes.frequencies:
        x = math.exp(-modes.beta_hbar * w)
        marginals.append([(1.0 - x) * x ** n for n in range(fock_cut)])
    configs = []
    for occupation in itertools.product(range(fock_cut), repeat=len(modes.frequencies)):
        weight = math.prod(marginals[i][n] for i, n in enumerate(occupation))
        configs.append((occupation, weight))
    configs.sort(key=lambda item: -item[1])
    kept, total = [], 0.0
    for occupation, weight in configs:
        kept.append((occupation, weight))
        total += weight
        if total >= THERMAL_WEIGHT:
            break
    if total < THERMAL_WEIGHT:
        raise TruncationError(f"Fock 截断 {fock_cut} 下热平衡权重仅 {total:.12g}")
    return [(occ, weight / total) for occ, weight in kept]


def small_bath_exact(system: SystemSpec, modes: Optional[DiscreteModeBath], times: Sequence[float],
                     fock_cut: int = FOCK_CUT, memory_budget: Optional[int] = None) -> TrajectoryResult:
    """量子比特加不多于 4 个显式谐振子的精确对角化演化

    初态为 ρ(0) ⊗ 截断热平衡态，对哈密顿量做一次本征分解后按时刻求约化密度矩阵。

    Raises:
        TruncationError: 任一模式最高 Fock 态布居超过 1e-8
        MemoryBudgetError: 矩阵超出内存预算
    """
    times = np.asarray(times, dtype=float)
    n_modes = 0 if modes is None else len(modes.frequencies)
    if n_modes > MAX_MODES:
        raise DomainError(f"最多支持 {MAX_MODES} 个模式，得到 {n_modes}")
    if n_modes == 0:
        return _bare_evolution(system, times)

    bath_dim = fock_cut ** n_modes
    dim = 2 * bath_dim
    required = 4 * 16 * dim * dim
    budget = default_memory_budget() if memory_budget is None else memory_budget
    if required > budget:
        raise MemoryBudgetError(f"精确对角化需要 {required} 字节，超出预算 {budget} 字节",
                                required_bytes=required, budget_bytes=budget)

    lower = np.diag(np.sqrt(np.arange(1, fock_cut)), 1)
    eye_f = np.eye(fock_cut)

    def embed(op: np.ndarray, index: int) -> np.ndarray:
        factors = [op if i == index else eye_f for i in range(n_modes)]
        out = factors[0]
        for f in factors[1:]:
            out = np.kron(out, f)
        return out

    h_bath = np.zeros((bath_dim, bath_dim))
    coupling = np.zeros((bath_dim, bath_dim))
    for i, (w, c) in enumerate(zip(modes.frequencies, modes.couplings)):
        number = lower.T @ lower
        h_bath += w * embed(number + 0.5 * eye_f, i)
        coupling += c * embed((lower + lower.T) / math.sqrt(2.0 * w), i)
    sigma_z = np.diag([1.0, -1.0])
    hamiltonian = (np.kron(system.hamiltonian(), np.eye(bath_dim)) + np.kron(np.eye(2), h_bath)
                   + np.kron(sigma_z, coupling))
    energies, vectors = linalg.eigh(hamiltonian)

    # 初态按 ρ(0) 的本征分解与热平衡组态展开为纯态系综
    sys_weights, sys_states = np.linalg.eigh(system.initial_state)
    columns, weights = [], []
    for occupation, bath_weight in _thermal_configurations(modes, fock_cut):
        index = 0
        for n in occupation:
            index = index * fock_cut + n
        bath_state = np.zeros(bath_dim)
        bath_state[index] = 1.0
        for p, state in zip(sys_weights, sys_states.T):
            if p > 1e-14:
                columns.append(np.kron(state, bath_state))
                weights.append(p * bath_weight)
    initial = np.array(columns).T
    weights = np.array(weights)
    amplitudes = vectors.conj().T @ initial

    rhos = []
    for t in times:
        psi = vectors @ (np.exp(-1j * energies * t)[:, None] * amplitudes)
        psi = psi.reshape(2, bath_dim, -1)
        rho = np.einsum("abk,cbk,k->ac", psi, psi.conj(), weights)
        rhos.append(rho)
        populations = (np.abs(psi) ** 2 * weights).sum(axis=(0, 2)).reshape((fock_cut,) * n_modes)
        for i in range(n_modes):
            top = float(np.take(populations, fock_cut - 1, axis=i).sum())
            if top > TOP_FOCK_POPULATION:
                raise TruncationError(f"t={t:g} 时模式 {i} 的最高 Fock 态布居 {top:.3g} 超过 1e-8")
    return TrajectoryResult(times, np.array(rhos), ConvergenceRecord())


def _bare_evolution(system: SystemSpec, times: np.ndarray) -> TrajectoryResult:
    rhos = []
    for t in times:
        u = linalg.expm(-1j * system.hamiltonian() * t)
        rhos.append(u @ system.initial_state @ u.conj().T)
    return TrajectoryResult(times, np.array(rhos), ConvergenceRecord())
