"""
sfrl 异常类型
库代码只负责抛出，CLI (sfrl.py) 统一捕获并映射为退出码
"""
from typing import Any, Optional


class SfrlError(Exception):
    """所有 sfrl 错误的基类"""
    pass


class ValidationError(SfrlError):
    """输入不是合法的概率对象（负质量、归一化偏差超限、非有限值等）"""
    pass


class ShapeError(SfrlError):
    """维度 / 字母表大小不匹配"""
    pass


class ConvergenceError(SfrlError):
    """迭代在 max_iter 内未收敛，附带最后一次迭代结果"""

    def __init__(self, message: str, last_iterate: Any = None, gap: Optional[float] = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.gap = gap


class InfeasibleError(SfrlError):
    """目标不可达（失真低于最小可达值、混合目标不被任何凸组合支配）"""

    def __init__(self, message: str, coordinate: Optional[int] = None):
        super().__init__(message)
        self.coordinate = coordinate


class BudgetError(SfrlError):
    """PFR 扫描超过点数上限 cap"""
    pass


class PreconditionError(SfrlError):
    """调用前提不成立（条件分布不绝对连续于先验等）"""
    pass


class FramingError(SfrlError):
    """比特流截断或码字非法，position 为出错的比特位置"""

    def __init__(self, message: str, position: Optional[int] = None):
        super().__init__(message if position is None else f"{message} (bit {position})")
        self.position = position


class DomainError(SfrlError):
    """对零概率符号编码"""
    pass


class DesignError(SfrlError):
    """方案设计失败（候选数不足等）"""
    pass


class SizeError(SfrlError):
    """实例规模超出保护上限"""
    pass


class SessionReuseError(SfrlError):
    """同一次运行里重复使用了 substream"""
    pass
