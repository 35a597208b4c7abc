import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from spinboson.bath import DEFAULT_QUADRATURE, InfluenceCoefficients, QuadratureSettings, ThermalBathSpec, build_coefficients
from spinboson.errors import DomainError, InvariantError, MemoryBudgetError
from utils.log import get_logger

logger = get_logger(__name__)

MEMORY_BUDGET_ENV = "SPINBOSON_MEMORY_BUDGET"
DEFAULT_MEMORY_BUDGET = 1 << 30  # 1 GiB
TRACE_ABORT = 1e-8
POSITIVITY_WARN = -1e-6
CONVERGENCE_THRESHOLD = 0.02

# 路径变量 p = 2a + b 对应 ρ[a, b]；a = 0 对应 σ_z = +1
_SPIN = np.array([1.0, -1.0])
_FORWARD = np.repeat(_SPIN, 2)  # [1, 1, -1, -1]
_BACKWARD = np.tile(_SPIN, 2)  # [1, -1, 1, -1]


def default_memory_budget() -> int:
    """读取环境变量中的内存预算（字节），未设置时为 1 GiB"""
    raw = os.environ.get(MEMORY_BUDGET_ENV)
    if raw is None or not raw.strip():
        return DEFAULT_MEMORY_BUDGET
    try:
        value = int(float(raw))
    except ValueError:
        raise DomainError(f"环境变量 {MEMORY_BUDGET_ENV}={raw!r} 不是有效字节数") from None
    if value <= 0:
        raise DomainError(f"内存预算 {value} 必须为正")
    return value


def _as_density_matrix(matrix) -> np.ndarray:
    rho = np.array(matrix, dtype=complex)
    if rho.shape != (2, 2):
        raise DomainError(f"初态必须是 2×2 矩阵，得到 {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise DomainError("初态含有非有限值")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise DomainError("初态不是厄米矩阵")
    if abs(np.trace(rho) - 1.0) > 1e-12:
        raise DomainError(f"初态的迹 {np.trace(rho).real:.12g} 不等于 1")
    if np.linalg.eigvalsh(rho).min() < -1e-12:
        raise DomainError("初态不是半正定矩阵")
    return rho


@dataclass(eq=False)
class SystemSpec:
    """量子比特 H = (ε σ_z + Δ σ_x)/2，频率以 scale 为单位"""
    epsilon: float
    delta: float
    initial_state: np.ndarray

    def __post_init__(self):
        for name in ("epsilon", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name}={getattr(self, name)} 不是有限数")
        self.initial_state = _as_density_matrix(self.initial_state)

    @classmethod
    def localized(cls, epsilon: float, delta: float) -> "SystemSpec":
        """初态 |0⟩⟨0|（σ_z = +1）"""
        return cls(epsilon, delta, np.array([[1.0, 0.0], [0.0, 0.0]]))

    @classmethod
    def superposition(cls, epsilon: float, delta: float) -> "SystemSpec":
        """初态 |Ψ₀⟩⟨Ψ₀|，|Ψ₀⟩ = (|0⟩ + |1⟩)/√2"""
        return cls(epsilon, delta, np.full((2, 2), 0.5))

    @property
    def rabi_frequency(self) -> float:
        return math.hypot(self.epsilon, self.delta)

    def hamiltonian(self) -> np.ndarray:
        return 0.5 * np.array([[self.epsilon, self.delta], [self.delta, -self.epsilon]], dtype=complex)


@dataclass(frozen=True)
class PropagationConfig:
    """传播参数：步长 δt、记忆长度 Δk_max、总步数"""
    delta_t: float
    memory_length: int
    n_steps: int
    memory_budget: int = field(default_factory=default_memory_budget)
    memory_tail: bool = True  # 相隔 Δk_max 的一对路径点吸收更早的全部历史

    def __post_init__(self):
        if not (self.delta_t > 0.0 and math.isfinite(self.delta_t)):
            raise DomainError(f"时间步长 δt={self.delta_t} 必须为正")
        if self.memory_length < 0:
            raise DomainError(f"记忆长度 {self.memory_length} 不能为负")
        if self.n_steps < self.memory_length:
            raise DomainError(f"总步数 {self.n_steps} 小于记忆长度 {self.memory_length}")
        if self.required_bytes > self.memory_budget:
            raise MemoryBudgetError(
                f"增广张量需要 {self.required_bytes} 字节，超出预算 {self.memory_budget} 字节",
                required_bytes=self.required_bytes, budget_bytes=self.memory_budget)

    @property
    def required_bytes(self) -> int:
        # 每步收缩前张量多一个轴
        return 16 * 4 ** (self.memory_length + 2)

    @property
    def times(self) -> np.ndarray:
        return self.delta_t * np.arange(self.n_steps + 1)

    def refined(self) -> "PropagationConfig":
        """步长减半、总时间不变"""
        return PropagationConfig(0.5 * self.delta_t, self.memory_length, 2 * self.n_steps, self.memory_budget,
                                 self.memory_tail)

    def deeper(self) -> "PropagationConfig":
        """记忆长度加一"""
        return PropagationConfig(self.delta_t, self.memory_length + 1,
                                 max(self.n_steps, self.memory_length + 1), self.memory_budget, self.memory_tail)


@dataclass
class ConvergenceRecord:
    """所用的 (δt, Δk_max) 组合，以及最细两次计算之间的最大偏差"""
    runs: List[Tuple[float, int]] = field(default_factory=list)
    max_deviation: Optional[float] = None


@dataclass(eq=False)
class TrajectoryResult:
    times: np.ndarray
    rho: np.ndarray  # (n_steps + 1, 2, 2)
    convergence: ConvergenceRecord = field(default_factory=ConvergenceRecord)
    min_eigenvalues: np.ndarray = None

    def __post_init__(self):
        if self.min_eigenvalues is None:
            self.min_eigenvalues = np.array([np.linalg.eigvalsh(_hermitian_part(r)).min() for r in self.rho])

    def rho11(self) -> np.ndarray:
        return self.rho[:, 0, 0].real

    def rho12(self) -> np.ndarray:
        return self.rho[:, 0, 1]

    def abs_rho12(self) -> np.ndarray:
        return np.abs(self.rho[:, 0, 1])

    def trace_drift(self) -> float:
        return float(np.max(np.abs(np.trace(self.rho, axis1=1, axis2=2) - 1.0)))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.rho - np.conj(np.swapaxes(self.rho, 1, 2)))))

    def positivity_violations(self, tolerance: float = POSITIVITY_WARN) -> List[float]:
        """最小本征值低于容差的时刻"""
        return [float(t) for t, v in zip(self.times, self.min_eigenvalues) if v < tolerance]


def _hermitian_part(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


def envelope(series: Sequence[float], center: float = 0.0) -> np.ndarray:
    """|x(t) − center| 的后缀最大值，即从 t 往后的最大振幅（单调不增）"""
    amplitude = np.abs(np.asarray(series, dtype=float) - center)
    return np.maximum.accumulate(amplitude[::-1])[::-1]


def short_time_propagator(system: SystemSpec, delta_t: float) -> np.ndarray:
    """单步裸系统超算符 S，vec(ρ(t+δt)) = S · vec(ρ(t))

    U = cos(Ωδt/2) I − i sin(Ωδt/2)(ε σ_z + Δ σ_x)/Ω，vec 按行优先展开。
    """
    if not (delta_t > 0.0 and math.isfinite(delta_t)):
        raise DomainError(f"时间步长 δt={delta_t} 必须为正")
    omega = system.rabi_frequency
    if omega == 0.0:
        return np.eye(4, dtype=complex)
    half = 0.5 * omega * delta_t
    generator = np.array([[system.epsilon, system.delta], [system.delta, -system.epsilon]]) / omega
    u = math.cos(half) * np.eye(2) - 1j * math.sin(half) * generator
    return np.kron(u, u.conj())


def _pair_factor(eta: complex) -> np.ndarray:
    """exp(−(s⁺ − s⁻)_后 (η s⁺ − η* s⁻)_前)，下标 [后, 前]"""
    later = (_FORWARD - _BACKWARD)[:, None]
    earlier = eta * _FORWARD[None, :] - np.conj(eta) * _BACKWARD[None, :]
    return np.exp(-later * earlier)


def _self_factor(eta: complex) -> np.ndarray:
    return np.diag(_pair_factor(eta)).copy()


def _broadcast(factor: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    # factor[后, 前] 放到 (前 → axis, 后 → 最后一轴)
    shape = [1] * ndim
    shape[axis] = 4
    shape[-1] = 4
    return factor.T.reshape(shape)


def propagate(system: SystemSpec, coeffs: InfluenceCoefficients, config: PropagationConfig,
              progress: bool = False) -> TrajectoryResult:
    """用迭代张量乘法 (ITM) 传播约化密度矩阵

    增广张量保存最近 Δk_max + 1 个路径点；每步乘以裸系统传播子与影响因子，
    再对最旧的路径点求和。相隔 Δk_max 的一对路径点使用折叠系数，把更早的历史
    并入被求和的那个点，路径冻结时与全记忆结果一致。读出时对终点做端点修正。

    Args:
        system: 量子比特参数与初态
        coeffs: 影响泛函系数，δt 与记忆长度须与 config 一致；折叠尾部时 g 表须覆盖总步数
        config: 传播参数
        progress: 是否显示 tqdm 进度条

    Returns:
        TrajectoryResult: 每个整步末的 ρ
    """
    if coeffs.memory_length != config.memory_length:
        raise DomainError(f"系数记忆长度 {coeffs.memory_length} 与配置 {config.memory_length} 不一致")
    if not math.isclose(coeffs.delta_t, config.delta_t, rel_tol=1e-12):
        raise DomainError(f"系数步长 {coeffs.delta_t} 与配置 {config.delta_t} 不一致")

    K = config.memory_length
    fold = config.memory_tail and K >= 1
    if fold and coeffs.tail_steps < config.n_steps:
        raise DomainError(f"线型函数表只覆盖 {coeffs.tail_steps} 步，折叠记忆尾部需要 {config.n_steps} 步；"
                          f"构造系数时取 horizon={config.n_steps}")
    step = short_time_propagator(system, config.delta_t).T  # [s_k, s_{k+1}]
    self_interior = _self_factor(coeffs.interior[0])
    final_self = _self_factor(coeffs.mixed[0] - coeffs.interior[0])
    pair_interior = [None] + [_pair_factor(coeffs.interior[l]) for l in range(1, K + 1)]
    pair_start = [None] + [_pair_factor(coeffs.mixed[l]) for l in range(1, K + 1)]
    # 读出修正：终点由内部点改为端点
    fix_interior = [None] + [_pair_factor(coeffs.mixed[l] - coeffs.interior[l]) for l in range(1, K + 1)]
    fix_start = [None] + [_pair_factor(coeffs.both[l] - coeffs.mixed[l]) for l in range(1, K + 1)]

    tensor = system.initial_state.reshape(4) * _self_factor(coeffs.mixed[0])
    first = 0  # 张量第 0 轴对应的路径点
    rhos = [system.initial_state.copy()]
    for n in tqdm(range(1, config.n_steps + 1), desc="ITM", disable=not progress, leave=False):
        tail = fold and n >= K
        if tail:
            folded = coeffs.folded(n)
            pair_tail = _pair_factor(folded)
            fix_tail = _pair_factor(coeffs.folded_final(n) - folded)
        tensor = tensor[..., None] * step
        tensor *= self_interior
        ndim = tensor.ndim
        for axis in range(ndim - 1):
            k = first + axis
            lag = n - k
            if lag > K:
                continue
            if tail and lag == K:
                factor = pair_tail
            else:
                factor = pair_start[lag] if k == 0 else pair_interior[lag]
            tensor *= _broadcast(factor, axis, ndim)
        if ndim > K + 1:
            tensor = tensor.sum(axis=0)
            first += 1

        readout = tensor * final_self
        ndim = readout.ndim
        for axis in range(ndim - 1):
            k = first + axis
            lag = n - k
            if tail and lag == K:
                fix = fix_tail
            else:
                fix = fix_start[lag] if k == 0 else fix_interior[lag]
            readout = readout * _broadcast(fix, axis, ndim)
        vec = readout.reshape(-1, 4).sum(axis=0)
        rho = vec.reshape(2, 2)
        drift = abs(np.trace(rho) - 1.0)
        if drift > TRACE_ABORT:
            raise InvariantError(f"第 {n} 步迹偏离 1 达 {drift:.3g}")
        rhos.append(rho)

    result = TrajectoryResult(config.times, np.array(rhos),
                              ConvergenceRecord(runs=[(config.delta_t, K)]))
    violations = result.positivity_violations()
    if violations:
        logger.warning("ρ 在 %d 个时刻失去正定性，首次 t=%.4g，最小本征值 %.3g",
                       len(violations), violations[0], float(result.min_eigenvalues.min()))
    return result


def max_deviation(coarse: TrajectoryResult, fine: TrajectoryResult) -> Dict[str, float]:
    """两条轨迹在共同时刻上 ρ₁₁ 与 |ρ₁₂| 的最大逐点偏差"""
    stride = int(round(coarse.times[1] / fine.times[1])) if len(coarse.times) > 1 and len(fine.times) > 1 else 1
    stride = max(stride, 1)
    fine_rho = fine.rho[::stride]
    n = min(len(coarse.rho), len(fine_rho))
    if not np.allclose(coarse.times[:n], fine.times[::stride][:n], rtol=1e-9, atol=1e-12):
        raise DomainError("两条轨迹没有共同的时间网格")
    a, b = coarse.rho[:n], fine_rho[:n]
    return {
        "rho11": float(np.max(np.abs(a[:, 0, 0].real - b[:, 0, 0].real))),
        "abs_rho12": float(np.max(np.abs(np.abs(a[:, 0, 1]) - np.abs(b[:, 0, 1])))),
    }


@dataclass
class ConvergenceReport:
    """收敛扫描结果"""
    base: PropagationConfig
    deviations: Dict[str, Dict[str, float]]
    threshold: float
    trajectories: Dict[str, TrajectoryResult] = field(default_factory=dict, repr=False)

    @property
    def max_deviation(self) -> float:
        return max(max(d.values()) for d in self.deviations.values())

    @property
    def converged(self) -> bool:
        return self.max_deviation <= self.threshold

    def to_text(self) -> str:
        lines = [f"# convergence δt={self.base.delta_t!r} memory={self.base.memory_length} "
                 f"steps={self.base.n_steps} threshold={self.threshold!r}",
                 "run max_dev_rho11 max_dev_abs_rho12"]
        for name, dev in self.deviations.items():
            lines.append(f"{name} {dev['rho11']:.17g} {dev['abs_rho12']:.17g}")
        lines.append(f"converged {'yes' if self.converged else 'no'}")
        return "\n".join(lines) + "\n"


def _shared_table(bath: ThermalBathSpec, configs: Sequence[PropagationConfig], settings: QuadratureSettings,
                  deterministic: bool) -> InfluenceCoefficients:
    """在最细步长上求一张覆盖全部配置的 g 表，粗步长的系数由它抽取"""
    finest = min(c.delta_t for c in configs)
    length = max(int(round(c.delta_t / finest)) * (2 * c.n_steps + 1) + 1 for c in configs)
    memory = max(c.memory_length for c in configs)
    horizon = (length - 1) // 2
    return build_coefficients(bath, finest, memory, settings, deterministic, horizon=horizon)


def convergence_sweep(system: SystemSpec, bath: ThermalBathSpec, base_config: PropagationConfig,
                      threshold: float = CONVERGENCE_THRESHOLD,
                      settings: QuadratureSettings = DEFAULT_QUADRATURE,
                      deterministic: bool = True, progress: bool = False) -> ConvergenceReport:
    """在 (δt, Δk_max)、(δt/2, Δk_max)、(δt, Δk_max+1) 与 (δt/2, Δk_max+1) 下重算并比较

    Returns:
        ConvergenceReport: 各次细化相对基准的最大逐点偏差；超过阈值时 converged 为 False
    """
    if not threshold > 0.0:
        raise DomainError(f"收敛阈值 {threshold} 必须为正")
    configs = {"base": base_config, "half_step": base_config.refined(), "memory_plus_one": base_config.deeper(),
               "half_step_memory_plus_one": base_config.refined().deeper()}
    table = _shared_table(bath, list(configs.values()), settings, deterministic)
    trajectories = {}
    for name, config in tqdm(configs.items(), desc="sweep", disable=not progress, leave=False):
        coeffs = table.resampled(config.delta_t, config.memory_length)
        trajectories[name] = propagate(system, coeffs, config)
        logger.info("收敛扫描 %s: δt=%g, Δk_max=%d", name, config.delta_t, config.memory_length)

    base = trajectories["base"]
    deviations = {name: max_deviation(base, trajectories[name]) for name in configs if name != "base"}
    report = ConvergenceReport(base_config, deviations, threshold, trajectories)
    base.convergence = ConvergenceRecord(runs=[(c.delta_t, c.memory_length) for c in configs.values()],
                                         max_deviation=report.max_deviation)
    if not report.converged:
        logger.warning("收敛扫描偏差 %.3g 超过阈值 %.3g", report.max_deviation, threshold)
    return report
