"""
异常定义模块
所有计算模块共享的错误类型，携带机器可读的错误码与见证数据
"""

from typing import Any, Optional


class ComputationError(Exception):
    """计算异常基类

    Attributes:
        code: 错误码（如 "boundary-ambiguous"）
        message: 可读描述
        witness: 触发错误的见证对象（模式、矩阵块、参数等）
    """

    def __init__(self, code: str, message: str = "", witness: Optional[Any] = None):
        self.code = code
        self.message = message or code
        self.witness = witness
        super().__init__(f"[{code}] {self.message}")

    def to_dict(self) -> dict:
        """转换为可序列化字典"""
        return {"code": self.code, "message": self.message, "witness": repr(self.witness)}


class LatticeError(ComputationError):
    """格点/特征值异常"""
    pass


class ClusterError(ComputationError):
    """聚类异常"""
    pass


class AlgebraicError(ComputationError):
    """代数数运算异常"""
    pass


class BifurcationError(ComputationError):
    """分岔方程异常"""
    pass


class MultiscaleError(ComputationError):
    """多尺度分解异常"""
    pass


class SolverError(ComputationError):
    """级数求解异常"""
    pass


class TreeError(ComputationError):
    """树展开异常"""
    pass


class RunnerError(ComputationError):
    """运行器/记录/导出异常"""
    pass
