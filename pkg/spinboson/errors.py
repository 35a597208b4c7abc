from typing import Optional, Tuple


class SpinBosonError(Exception):
    """所有库内异常的基类"""


class DomainError(SpinBosonError, ValueError):
    """输入超出定义域"""

    def __init__(self, message: str, omega: Optional[float] = None):
        super().__init__(message)
        self.omega = omega


class SingularityError(DomainError):
    """谱密度分母在某个频率处消失"""


class ConfigError(DomainError):
    """运行配置无法解析或包含未知键"""


class NoRootError(DomainError):
    """标定区间内找不到满足目标有效耦合的 η"""


class QuadratureError(SpinBosonError):
    """数值积分不收敛

    Attributes:
        worst_interval: 误差最大的频率子区间 (下限, 上限)
    """

    def __init__(self, message: str, worst_interval: Optional[Tuple[float, float]] = None):
        super().__init__(message)
        self.worst_interval = worst_interval


class MemoryBudgetError(SpinBosonError):
    """增广张量或精确对角化矩阵超出内存预算"""

    def __init__(self, message: str, required_bytes: int = 0, budget_bytes: int = 0):
        super().__init__(message)
        self.required_bytes = required_bytes
        self.budget_bytes = budget_bytes


class InvariantError(SpinBosonError):
    """传播过程中迹或厄米性被破坏"""


class TruncationError(SpinBosonError):
    """Fock 截断不足"""


class ConvergenceError(SpinBosonError):
    """收敛扫描或外推未达到阈值"""
