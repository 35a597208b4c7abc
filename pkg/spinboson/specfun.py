import math

import numpy as np
from scipy import special

from spinboson.errors import DomainError

# Im(πW) = IM_W_SIGN·π·sinh(m)。取 +1 时 Θ(ω) = cosh(m) 恒为正
IM_W_SIGN = 1

# m 超过该值时改用指数积分形式，避免 Shi·cosh 与 Chi·sinh 相减的抵消误差
_STABLE_SWITCH = 1.0
# m 超过该值时 e^{m}E1(m) 用渐近级数
_ASYMPTOTIC_SWITCH = 40.0
# sinh(m) 在双精度下溢出前的上限
_MAX_RATIO = 700.0


def _check_ratio(m: float, allow_zero: bool = True) -> float:
    m = float(m)
    if not math.isfinite(m):
        raise DomainError(f"截止比 m={m} 不是有限数")
    if m < 0.0 or (m == 0.0 and not allow_zero):
        bound = "≥ 0" if allow_zero else "> 0"
        raise DomainError(f"截止比 m={m} 必须 {bound}")
    return m


def cutoff_ratio(omega: float, omega_c: float) -> float:
    """计算 m = ω/ω_c，两者都必须为正"""
    if not (omega > 0.0 and math.isfinite(omega)):
        raise DomainError(f"频率 ω={omega} 必须为正有限数", omega=omega)
    if not (omega_c > 0.0 and math.isfinite(omega_c)):
        raise DomainError(f"截止频率 ω_c={omega_c} 必须为正有限数")
    return omega / omega_c


def shi(m: float) -> float:
    """双曲正弦积分 Shi(m) = ∫₀^m sinh(t)/t dt

    Args:
        m: 截止比，m ≥ 0

    Returns:
        float: Shi(m)
    """
    m = _check_ratio(m)
    return float(special.shichi(m)[0])


def chi_term(m: float) -> float:
    """余弦积分 γ_E + ln(m) + ∫₀^m (cos t − 1)/t dt

    Args:
        m: 截止比，m > 0

    Returns:
        float: Ci(m)
    """
    m = _check_ratio(m, allow_zero=False)
    return float(special.sici(m)[1])


def chi(m: float) -> float:
    """双曲余弦积分 Chi(m)，即 Ci 在虚轴上的解析延拓的实部"""
    m = _check_ratio(m, allow_zero=False)
    return float(special.shichi(m)[1])


def ci_negative_imaginary(m: float, sign: int = IM_W_SIGN) -> complex:
    """按配置的分支取 Ci(−im)

    主分支给出 Chi(m) − iπ/2；这里的分支使 Im(πW) = sign·π·sinh(m)。
    """
    return complex(chi(m), (2 * sign - 1) * math.pi / 2.0)


def sine_lorentz_integral(m: float) -> float:
    """闭式计算 ∫₀^∞ sin(mx)/(1+x²) dx

    小 m 用 Shi/Chi 形式，大 m 用 ½[e^{−m}Ei(m) + e^{m}E1(m)]（两项同号，无抵消）。
    """
    m = _check_ratio(m)
    if m == 0.0:
        return 0.0
    if m <= _STABLE_SWITCH:
        s, c = special.shichi(m)
        return float(s * math.cosh(m) - c * math.sinh(m))
    head = math.exp(-m) * float(special.expi(m))
    if m <= _ASYMPTOTIC_SWITCH:
        tail = math.exp(m) * float(special.exp1(m))
    else:
        # e^{m}E1(m) ~ Σ (−1)^k k!/m^{k+1}
        tail, term = 0.0, 1.0 / m
        for k in range(1, 18):
            tail += term
            term *= -k / m
    return 0.5 * (head + tail)


def w_function(omega: float, omega_c: float, sign: int = IM_W_SIGN) -> complex:
    """W(ω) = (1/π)[−Shi(m)cosh(m) + Ci(−im)sinh(m) + (πi/2)sinh(m)]

    Args:
        omega: 角频率 ω > 0
        omega_c: 截止频率 ω_c > 0
        sign: Im W 的分支符号

    Returns:
        complex: W(ω)
    """
    m = cutoff_ratio(omega, omega_c)
    if m > _MAX_RATIO:
        raise DomainError(f"m={m} 过大，sinh(m) 溢出", omega=omega)
    if m <= _STABLE_SWITCH:
        value = (-shi(m) * math.cosh(m)
                 + ci_negative_imaginary(m, sign) * math.sinh(m)
                 + 0.5j * math.pi * math.sinh(m)) / math.pi
        return complex(value)
    return complex(-sine_lorentz_integral(m) / math.pi, sign * math.sinh(m))


def theta(omega: float, omega_c: float, sign: int = IM_W_SIGN) -> float:
    """Θ(ω) = Im W(ω) + e^{−ω/ω_c}"""
    m = cutoff_ratio(omega, omega_c)
    return w_function(omega, omega_c, sign).imag + math.exp(-m)


def r_function(omega: float, omega_c: float, sign: int = IM_W_SIGN) -> complex:
    """R(ω) = −(πi/ω)e^{−m} − (π/ω)W(ω)"""
    m = cutoff_ratio(omega, omega_c)
    w = w_function(omega, omega_c, sign)
    value = -1j * math.pi / omega * math.exp(-m) - math.pi / omega * w
    if not np.isfinite(value):
        raise DomainError(f"R(ω={omega}) 不是有限值", omega=omega)
    return complex(value)
