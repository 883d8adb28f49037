"""
测试工具函数
"""

from fractions import Fraction
from typing import Any, Optional
import sys

import numpy as np

from core.lattice import Boundary, Coefficient, EquationSpec, Family, cubic_nls_coefficients, cubic_real_coefficients

# Windows GBK 兼容 - 只在第一次导入时设置
_stdout_fixed = False
if sys.platform == "win32" and not _stdout_fixed:
    import io
    sys.stdout = io.TextIOWrapper(sys.stdout.buffer, encoding="utf-8")
    _stdout_fixed = True


def print_color(text: str, color: str = "white"):
    """彩色输出打印

    Args:
        text: 要打印的文本
        color: 颜色名称 (black, red, green, yellow, blue, magenta, cyan, white)
    """
    colors = {
        "black": "\033[30m",
        "red": "\033[31m",
        "green": "\033[32m",
        "yellow": "\033[33m",
        "blue": "\033[34m",
        "magenta": "\033[35m",
        "cyan": "\033[36m",
        "white": "\033[37m",
    }
    reset = "\033[0m"

    code = colors.get(color, colors["white"])
    print(f"{code}{text}{reset}")


def print_success(message: str):
    """打印成功消息"""
    print_color(f"[OK] {message}", "green")


def print_info(message: str):
    """打印信息消息"""
    print_color(f"[INFO] {message}", "cyan")


# ============ 方程规格构造 ============

def nls_spec(
    dim: int = 2,
    mu: Any = Fraction(3, 10),
    N: int = 2,
    eps0: float = 1e-2,
    boundary: Boundary = Boundary.DIRICHLET,
    **kwargs,
) -> EquationSpec:
    """三次 NLS（缺省 Dirichlet）"""
    return EquationSpec(
        family=Family.NLS, dim=dim, mu=mu, boundary=boundary, N=N,
        coefficients=cubic_nls_coefficients(dim), eps0=eps0, **kwargs,
    )


def nlw_spec(dim: int = 1, mu: Any = Fraction(3, 10), eps0: float = 1e-2) -> EquationSpec:
    """三次 NLW（Dirichlet）"""
    return EquationSpec(
        family=Family.NLW, dim=dim, mu=mu, boundary=Boundary.DIRICHLET, N=2,
        coefficients=cubic_real_coefficients(dim), eps0=eps0,
    )


def real_cube_spec(eps0: float = 1e-2) -> EquationSpec:
    """D=1 NLS，f = (u+ū)³，μ = 59/20

    (3,±3) 为唯一的小模式（δ₀ = 1/10），Q = {(1,±1)}。
    """
    coefficients = (
        Coefficient(3, 0, (0,), 1.0 + 0j),
        Coefficient(2, 1, (0,), 3.0 + 0j),
        Coefficient(1, 2, (0,), 3.0 + 0j),
        Coefficient(0, 3, (0,), 1.0 + 0j),
    )
    return EquationSpec(
        family=Family.NLS, dim=1, mu=Fraction(59, 20), boundary=Boundary.DIRICHLET, N=2,
        coefficients=coefficients, eps0=eps0,
    )


def random_self_adjoint(n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """随机 Hermitian 矩阵"""
    rng = rng or np.random.default_rng(0)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (A + A.conj().T) / 2
