import math
from dataclasses import dataclass, replace, asdict
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import optimize

from spinboson.errors import DomainError, NoRootError, SingularityError
from spinboson.specfun import IM_W_SIGN, cutoff_ratio, theta, w_function
from utils.log import get_logger

logger = get_logger(__name__)

# 分母模长低于该值视为奇点
_SINGULAR_DENOMINATOR = 1e-300
# calibrate_eta 的搜索区间
ETA_BRACKET = (1e-8, 1e3)


class Model(Enum):
    """有效谱密度模型"""
    A = "A"  # 量子比特直接耦合欧姆热库
    B = "B"  # 经中间谐振子 (IHO) 耦合热库
    C = "C"  # B 加上比特与热库的直接耦合
    D = "D"  # 比特、IHO、热库三方耦合


class Variant(Enum):
    """截止频率类型"""
    I = "I"  # 无穷截止
    F = "F"  # 有限截止


@dataclass(frozen=True)
class SpectralDensityId:
    """八个有效谱密度之一"""
    model: Model
    variant: Variant

    def __str__(self):
        return f"{self.model.value}_{self.variant.value}"

    @classmethod
    def parse(cls, text: str) -> "SpectralDensityId":
        """解析 'A_I'、'A,I' 或 'AI' 形式的标识"""
        cleaned = text.strip().upper().replace(",", "").replace("_", "").replace(" ", "")
        if len(cleaned) != 2:
            raise DomainError(f"无法解析谱密度标识: {text}")
        try:
            return cls(Model(cleaned[0]), Variant(cleaned[1]))
        except ValueError:
            raise DomainError(f"无法解析谱密度标识: {text}") from None

    @classmethod
    def all(cls) -> List["SpectralDensityId"]:
        return [cls(model, variant) for model in Model for variant in Variant]


@dataclass(frozen=True)
class ModelParams:
    """模型 A–D 的宏观常数

    阻尼 Γ = κ₁η/M 只由 gamma 属性推导，不单独存储。
    """
    eta: float
    omega_c: float
    lam: float = 1.0  # 比特–IHO 耦合 λ
    kappa1: float = 1.0  # IHO–热库控制参数 κ₁
    kappa2: float = 1.0  # 比特–热库控制参数 κ₂
    iho_mass: float = 1.0  # IHO 质量 M
    iho_omega: float = 10.0  # IHO 频率 Ω₀

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise DomainError(f"模型参数 {name}={value} 不是有限数")
        if self.eta < 0.0:
            raise DomainError(f"η={self.eta} 不能为负")
        if self.omega_c <= 0.0:
            raise DomainError(f"ω_c={self.omega_c} 必须为正")
        if self.iho_mass <= 0.0:
            raise DomainError(f"M={self.iho_mass} 必须为正")
        if self.iho_omega <= 0.0:
            raise DomainError(f"Ω₀={self.iho_omega} 必须为正")

    @property
    def gamma(self) -> float:
        return self.kappa1 * self.eta / self.iho_mass

    def with_eta(self, eta: float) -> "ModelParams":
        return replace(self, eta=eta)

    def with_gamma(self, gamma: float) -> "ModelParams":
        """改写 M 使 Γ 取给定值；κ₁η = 0 时 Γ 恒为零，参数不变"""
        if gamma <= 0.0:
            raise DomainError(f"Γ={gamma} 必须为正")
        if self.kappa1 == 0.0 or self.eta == 0.0:
            return self
        return replace(self, iho_mass=self.kappa1 * self.eta / gamma)

    def to_dict(self) -> Dict[str, float]:
        data = asdict(self)
        data["gamma"] = self.gamma
        return data


@dataclass(frozen=True)
class FrequencyGrid:
    """严格递增的正频率网格"""
    points: Tuple[float, ...]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise DomainError("频率网格不能为空")
        if np.any(~np.isfinite(pts)) or np.any(pts <= 0.0):
            raise DomainError("频率网格必须全部为正有限数")
        if np.any(np.diff(pts) <= 0.0):
            raise DomainError("频率网格必须严格递增")
        object.__setattr__(self, "points", tuple(float(p) for p in pts))

    @classmethod
    def linspace(cls, start: float, stop: float, num: int) -> "FrequencyGrid":
        return cls(tuple(np.linspace(start, stop, num)))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def _ratio(numerator: complex, denominator: complex, omega: float, label: str) -> complex:
    if abs(denominator) < _SINGULAR_DENOMINATOR:
        raise SingularityError(f"{label} 的分母在 ω={omega} 处消失", omega=omega)
    return numerator / denominator


def xi(omega: float, params: ModelParams, sign: int = IM_W_SIGN) -> float:
    """Ξ(ω) = Ω₀² − ω² + κ₁ωΓ·Re W(ω)"""
    re_w = w_function(omega, params.omega_c, sign).real
    return params.iho_omega ** 2 - omega ** 2 + params.kappa1 * omega * params.gamma * re_w


def phi(omega: float, params: ModelParams) -> complex:
    """无穷截止下的辅助量 Φ(ω)

    按 e^{−iωt} 约定取值（被动响应虚部为正），即 (Ω₀²λ + iΓκ₂ωe^{−m}) /
    ((ω² − Ω₀²) + iκ₁ωΓe^{−m}) 的复共轭。
    """
    m = cutoff_ratio(omega, params.omega_c)
    decay = math.exp(-m)
    g = params.gamma
    numerator = complex(params.iho_omega ** 2 * params.lam, g * params.kappa2 * omega * decay)
    denominator = complex(omega ** 2 - params.iho_omega ** 2, params.kappa1 * omega * g * decay)
    return _ratio(numerator, denominator, omega, "Φ").conjugate()


def psi(omega: float, params: ModelParams, sign: int = IM_W_SIGN) -> complex:
    """有限截止下的辅助量 Ψ(ω)，与 phi 同一约定"""
    w = w_function(omega, params.omega_c, sign)
    th = theta(omega, params.omega_c, sign)
    g = params.gamma
    numerator = complex(params.iho_omega ** 2 * params.lam + g * params.kappa2 * omega * w.real,
                        g * params.kappa2 * omega * th)
    denominator = complex(-xi(omega, params, sign), params.kappa1 * omega * g * th)
    return _ratio(numerator, denominator, omega, "Ψ").conjugate()


def _iho_term_infinite(omega: float, params: ModelParams, m: float) -> float:
    g = params.gamma
    numerator = (params.lam ** 2 * params.iho_omega ** 4 * params.kappa1 ** 2
                 * omega * params.eta)
    denominator = ((omega ** 2 - params.iho_omega ** 2) ** 2 * math.exp(m)
                   + params.kappa1 ** 2 * g ** 2 * omega ** 2 * math.exp(-m))
    return _ratio(numerator, denominator, omega, "J_B^I").real


def _iho_term_finite(omega: float, params: ModelParams, th: float, sign: int) -> float:
    g = params.gamma
    numerator = (params.lam ** 2 * params.iho_omega ** 4 * params.kappa1 ** 2
                 * omega * params.eta * th)
    denominator = xi(omega, params, sign) ** 2 + params.kappa1 ** 2 * omega ** 2 * g ** 2 * th ** 2
    return _ratio(numerator, denominator, omega, "J_B^F").real


def evaluate(density: SpectralDensityId, params: ModelParams, omega: float,
             sign: int = IM_W_SIGN) -> float:
    """计算选定有效谱密度 J(ω) 的闭式值

    Args:
        density: 谱密度标识
        params: 模型参数
        omega: 角频率 ω > 0（与 ω_c、Ω₀ 同一单位）
        sign: Im W 的分支符号

    Returns:
        float: J(ω)，单位为角频率
    """
    m = cutoff_ratio(omega, params.omega_c)
    eta, k1, k2 = params.eta, params.kappa1, params.kappa2
    finite = density.variant is Variant.F
    th = theta(omega, params.omega_c, sign) if finite else 0.0
    weight = th if finite else math.exp(-m)

    if density.model is Model.A:
        value = eta * omega * weight
    elif density.model is Model.B:
        value = (_iho_term_finite(omega, params, th, sign) if finite
                 else _iho_term_infinite(omega, params, m))
    elif density.model is Model.C:
        iho = (_iho_term_finite(omega, params, th, sign) if finite
               else _iho_term_infinite(omega, params, m))
        value = eta * omega * k2 ** 2 * weight + iho
    else:
        prefactor = params.lam * params.iho_mass * params.iho_omega ** 2
        if finite:
            aux = psi(omega, params, sign)
            re_w = w_function(omega, params.omega_c, sign).real
            value = (prefactor * aux.imag
                     + omega * eta * k1 * k2 * re_w * aux.imag
                     + omega * eta * (k1 * k2 * aux.real + k2 ** 2) * th)
        else:
            aux = phi(omega, params)
            value = prefactor * aux.imag + omega * eta * (k1 * k2 * aux.real + k2 ** 2) * weight

    if not math.isfinite(value):
        raise SingularityError(f"J_{density}(ω={omega}) 不是有限值", omega=omega)
    return float(value)


def effective_coupling(density: SpectralDensityId, params: ModelParams, omega0: float,
                       sign: int = IM_W_SIGN) -> float:
    """有效耦合 η′ = J(ω₀)/ω₀"""
    return evaluate(density, params, omega0, sign) / omega0


def grows_without_bound(density: SpectralDensityId, params: ModelParams) -> bool:
    """F 型谱密度是否含 ηωκ₂²Θ 直接项

    Θ 随 cosh(ω/ω_c) 增长，含该项的 J^F 在 [0, ∞) 上不可积；模型 B 以及 κ₂ = 0 的
    C、D 只剩 IHO 项，按 1/(ωΘ) 衰减。
    """
    if density.variant is not Variant.F:
        return False
    if density.model is Model.A:
        return True
    return density.model in (Model.C, Model.D) and params.kappa2 != 0.0


def resonances(density: SpectralDensityId, params: ModelParams) -> List[float]:
    """需要在频率积分中单独细分的共振频率"""
    if density.model is Model.A:
        return []
    return [params.iho_omega]


def sample(density: SpectralDensityId, params: ModelParams, grid: FrequencyGrid,
           sign: int = IM_W_SIGN) -> List[Tuple[float, float]]:
    """在网格上逐点求值，保持顺序"""
    pairs = []
    for omega in grid:
        try:
            pairs.append((omega, evaluate(density, params, omega, sign)))
        except DomainError as e:
            raise type(e)(f"{e} (采样点 ω={omega})", omega=omega) from e
    negatives = negative_samples(pairs)
    if negatives:
        logger.warning("J_%s 在 %d 个采样点为负，最小频率 ω=%.6g",
                       density, len(negatives), negatives[0])
    return pairs


def negative_samples(pairs: Iterable[Tuple[float, float]]) -> List[float]:
    """返回 J 为负的频率"""
    return [omega for omega, value in pairs if value < 0.0]


# 各约化极限要求的参数取值
REDUCTION_LIMITS: Dict[Tuple[Model, Model], Dict[str, float]] = {
    (Model.C, Model.A): {"lam": 0.0, "kappa1": 0.0, "kappa2": 1.0},
    (Model.C, Model.B): {"kappa2": 0.0},
    (Model.D, Model.A): {"lam": 0.0, "kappa1": 0.0, "kappa2": 1.0},
    (Model.D, Model.B): {"kappa2": 0.0},
}


def reduction_check(id_from: SpectralDensityId, id_to: SpectralDensityId,
                    params: ModelParams, grid: FrequencyGrid) -> float:
    """验证约化极限，返回网格上 |J_from − J_to| 的最大值

    Raises:
        DomainError: 参数不满足文档列出的任何极限
    """
    if id_from != id_to:
        if id_from.variant is not id_to.variant:
            raise DomainError(f"{id_from} 与 {id_to} 截止类型不同，没有约化关系")
        limit = REDUCTION_LIMITS.get((id_from.model, id_to.model))
        if limit is None:
            raise DomainError(f"没有从 {id_from} 到 {id_to} 的约化极限")
        mismatched = {k: v for k, v in limit.items() if getattr(params, k) != v}
        if mismatched:
            raise DomainError(f"参数不满足 {id_from}→{id_to} 的极限条件: {mismatched}")
    deviation = 0.0
    for omega in grid:
        deviation = max(deviation, abs(evaluate(id_from, params, omega) - evaluate(id_to, params, omega)))
    return deviation


def calibrate_eta(density: SpectralDensityId, params: ModelParams, omega0: float,
                  eta_prime: float, hold_gamma: Optional[float] = None,
                  bracket: Tuple[float, float] = ETA_BRACKET, sign: int = IM_W_SIGN) -> float:
    """求 η 使 J(ω₀)/ω₀ = η′

    先在对数网格上粗扫找到第一个变号区间（弱耦合分支），再用 brentq 求根。

    Args:
        density: 谱密度标识
        params: 模型参数，其中 eta 被忽略
        omega0: 特征频率 ω₀
        eta_prime: 目标有效耦合 η′ > 0
        hold_gamma: 给定时在搜索中保持 Γ 不变（M 随 η 改变）
        bracket: 搜索区间
        sign: Im W 的分支符号

    Returns:
        float: 标定后的 η
    """
    if not eta_prime > 0.0:
        raise DomainError(f"目标有效耦合 η′={eta_prime} 必须为正")
    if not omega0 > 0.0:
        raise DomainError(f"特征频率 ω₀={omega0} 必须为正", omega=omega0)

    def trial(eta: float) -> ModelParams:
        p = params.with_eta(eta)
        return p.with_gamma(hold_gamma) if hold_gamma is not None else p

    def residual(eta: float) -> float:
        return effective_coupling(density, trial(eta), omega0, sign) - eta_prime

    etas = np.geomspace(bracket[0], bracket[1], 241)
    values = np.array([residual(e) for e in etas])
    crossings = np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) <= 0.0)[0]
    if crossings.size == 0:
        raise NoRootError(f"区间 [{bracket[0]:g}, {bracket[1]:g}] 内 J_{density}(ω₀)/ω₀ "
                          f"无法达到 η′={eta_prime:g}")
    i = int(crossings[0])
    if values[i] == 0.0:
        eta = float(etas[i])
    else:
        eta = optimize.brentq(residual, etas[i], etas[i + 1],
                              xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    achieved = effective_coupling(density, trial(eta), omega0, sign)
    if abs(achieved - eta_prime) > 1e-10 * eta_prime:
        raise NoRootError(f"标定残差过大: η′={achieved:.17g}，目标 {eta_prime:.17g}")
    logger.info("标定 J_%s: η=%.12g (η′=%g, ω₀=%g)", density, eta, eta_prime, omega0)
    return float(eta)
