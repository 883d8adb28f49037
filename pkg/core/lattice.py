"""
格点与特征值模块
模式向量、三类方程的线性特征值 δ_ν(ε)、Q/O/R 分类、Dirichlet 奇对称与非共振条件的数值验证
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import LatticeError

logger = logging.getLogger(__name__)

Number = Union[Fraction, float]

# μ 为浮点数时的精确判零容差
FLOAT_ZERO_TOL = 1e-12


class Family(str, Enum):
    """方程族"""
    NLS = "NLS"
    NLW = "NLW"
    NLB = "NLB"


class Boundary(str, Enum):
    """边界条件"""
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"


class SetLabel(str, Enum):
    """格点分类标签"""
    Q = "Q"
    O = "O"
    R = "R"


@dataclass(frozen=True, order=True)
class ModeVector:
    """格点向量 ν = (n, m)，|ν| 为 ℓ1 范数"""
    n: int
    m: Tuple[int, ...]

    @classmethod
    def of(cls, n: int, *m: int) -> "ModeVector":
        return cls(int(n), tuple(int(x) for x in m))

    @classmethod
    def from_tuple(cls, values: Sequence[int]) -> "ModeVector":
        return cls(int(values[0]), tuple(int(x) for x in values[1:]))

    @property
    def dim(self) -> int:
        return len(self.m)

    @property
    def size(self) -> int:
        return abs(self.n) + sum(abs(x) for x in self.m)

    @property
    def weight(self) -> int:
        """⟨ν⟩ = max(|ν|, 1)"""
        return max(self.size, 1)

    @property
    def m_sq(self) -> int:
        return sum(x * x for x in self.m)

    def as_tuple(self) -> Tuple[int, ...]:
        return (self.n,) + self.m

    def __add__(self, other: "ModeVector") -> "ModeVector":
        return ModeVector(self.n + other.n, tuple(a + b for a, b in zip(self.m, other.m)))

    def __sub__(self, other: "ModeVector") -> "ModeVector":
        return ModeVector(self.n - other.n, tuple(a - b for a, b in zip(self.m, other.m)))

    def __neg__(self) -> "ModeVector":
        return ModeVector(-self.n, tuple(-x for x in self.m))

    def flip(self, i: int) -> "ModeVector":
        """空间分量 i 取反（S_i）"""
        m = list(self.m)
        m[i] = -m[i]
        return ModeVector(self.n, tuple(m))

    def __repr__(self) -> str:
        return f"ν({self.n};{','.join(str(x) for x in self.m)})"


def dist(a: ModeVector, b: ModeVector) -> int:
    """ℓ1 距离"""
    return (a - b).size


@dataclass(frozen=True)
class Coefficient:
    """非线性项系数 a_{r,s,m}：f = Σ a_{r,s,m} e^{i m·x} u^r ū^s"""
    r: int
    s: int
    m: Tuple[int, ...]
    value: complex

    @property
    def degree(self) -> int:
        return self.r + self.s


@dataclass(frozen=True)
class EquationSpec:
    """方程规格

    Attributes:
        family: 方程族
        dim: 空间维数 D
        mu: 质量（Fraction 时启用精确算术）
        boundary: 边界条件
        N: 非线性最低阶参数（首项阶数 N+1）
        coefficients: 非线性系数
        eps0: ε 窗口上界
        resonant: NLS 的完全共振模式（ω₀=1, μ=0）；NLB 恒为共振
    """
    family: Family = Family.NLS
    dim: int = 2
    mu: Number = Fraction(3, 10)
    boundary: Boundary = Boundary.DIRICHLET
    N: int = 2
    coefficients: Tuple[Coefficient, ...] = ()
    eps0: float = 1e-2
    resonant: bool = False

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise LatticeError("invalid-spec", f"dimension must be >= 1, got {self.dim}")
        if self.N < 1:
            raise LatticeError("invalid-spec", f"N must be >= 1, got {self.N}")
        if not isinstance(self.family, Family):
            try:
                object.__setattr__(self, "family", Family(self.family))
            except ValueError:
                raise LatticeError("unknown-family", f"Unknown family: {self.family}")
        if not isinstance(self.boundary, Boundary):
            object.__setattr__(self, "boundary", Boundary(self.boundary))
        for c in self.coefficients:
            if len(c.m) != self.dim:
                raise LatticeError("invalid-spec", f"coefficient mode {c.m} has wrong dimension")

    @property
    def is_resonant(self) -> bool:
        return self.family == Family.NLB or (self.family == Family.NLS and self.resonant)

    @property
    def is_real_field(self) -> bool:
        """实场方程（情形 II：NLW/NLB）"""
        return self.family in (Family.NLW, Family.NLB)

    @property
    def mu_exact(self) -> Optional[Fraction]:
        if self.is_resonant:
            return Fraction(0)
        return self.mu if isinstance(self.mu, Fraction) else None

    @property
    def mu_value(self) -> float:
        return 0.0 if self.is_resonant else float(self.mu)

    @property
    def max_degree(self) -> int:
        return max((c.degree for c in self.coefficients), default=self.N + 1)

    def base_frequency(self) -> Number:
        """ω₀（NLS）或 ω₀²（NLW）；共振族为 1"""
        if self.is_resonant:
            return Fraction(1)
        mu = self.mu_exact if self.mu_exact is not None else float(self.mu)
        return self.dim + mu


def parse_mu(value: Union[str, float, int, Fraction]) -> Number:
    """解析 μ：有理字符串或不超过 12 位小数的浮点数转为 Fraction"""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError:
            raise LatticeError("invalid-mu", f"Cannot parse mu: {value!r}")
    exact = Fraction(repr(float(value)))
    if 10 ** 12 % exact.denominator == 0:
        return exact
    return float(value)


def cubic_nls_coefficients(dim: int) -> Tuple[Coefficient, ...]:
    """|u|²u"""
    return (Coefficient(2, 1, (0,) * dim, 1.0 + 0j),)


def cubic_real_coefficients(dim: int) -> Tuple[Coefficient, ...]:
    """u³（实场）"""
    return (Coefficient(3, 0, (0,) * dim, 1.0 + 0j),)


def _check_window(spec: EquationSpec, eps: float) -> None:
    if eps < -1e-15 or eps > spec.eps0 * (1 + 1e-12) + 1e-15:
        raise LatticeError(
            "eps-out-of-window",
            f"ε={eps} outside window [0, {spec.eps0}]",
            witness=eps,
        )


def eigenvalue(spec: EquationSpec, nu: ModeVector, eps: Number) -> Number:
    """线性特征值 δ_ν(ε)

    Args:
        spec: 方程规格
        nu: 格点向量
        eps: ε ∈ [0, ε₀]；Fraction 输入且 μ 精确时返回 Fraction

    Returns:
        δ_ν(ε)

    Raises:
        LatticeError: ε 越界或未知方程族
    """
    _check_window(spec, float(eps))
    return _eigenvalue_unchecked(spec, nu, eps)


def _eigenvalue_unchecked(spec: EquationSpec, nu: ModeVector, eps: Number) -> Number:
    m_sq = nu.m_sq
    exact = isinstance(eps, (Fraction, int)) and (spec.mu_exact is not None)
    mu: Number = spec.mu_exact if exact else spec.mu_value
    base = spec.base_frequency() if exact else float(spec.base_frequency())
    if spec.family == Family.NLS:
        return -(base - eps) * nu.n + m_sq + (0 if spec.is_resonant else mu)
    if spec.family == Family.NLW:
        return -(base - eps) * nu.n * nu.n + m_sq + mu
    if spec.family == Family.NLB:
        return -(1 - eps) * nu.n * nu.n + m_sq * m_sq
    raise LatticeError("unknown-family", f"Unknown family: {spec.family}")


def eigenvalue_slope(spec: EquationSpec, nu: ModeVector) -> int:
    """∂_ε δ_ν（δ 关于 ε 为仿射函数）"""
    if spec.family == Family.NLS:
        return nu.n
    return nu.n * nu.n


def eigenvalue_at_zero(spec: EquationSpec, nu: ModeVector) -> Number:
    """δ_ν(0)，μ 为有理数时精确"""
    return _eigenvalue_unchecked(spec, nu, Fraction(0) if spec.mu_exact is not None else 0.0)


def in_kernel(spec: EquationSpec, nu: ModeVector) -> bool:
    """δ_ν(0) = 0（有理 μ 时精确判定）"""
    d0 = eigenvalue_at_zero(spec, nu)
    if isinstance(d0, Fraction):
        return d0 == 0
    return abs(d0) < FLOAT_ZERO_TOL


def eigenvalues_array(spec: EquationSpec, modes: np.ndarray, eps: Union[float, np.ndarray]) -> np.ndarray:
    """向量化 δ_ν(ε)

    Args:
        modes: 形状 (k, 1+D) 的整数数组
        eps: 标量或形状 (g,) 的网格

    Returns:
        标量 eps 时形状 (k,)；网格时形状 (g, k)
    """
    n = modes[:, 0].astype(float)
    m_sq = np.sum(modes[:, 1:].astype(float) ** 2, axis=1)
    base = float(spec.base_frequency())
    mu = spec.mu_value
    eps_arr = np.asarray(eps, dtype=float)
    e = eps_arr[..., None] if eps_arr.ndim else eps_arr
    if spec.family == Family.NLS:
        return -(base - e) * n + m_sq + (0.0 if spec.is_resonant else mu)
    if spec.family == Family.NLW:
        return -(base - e) * n * n + m_sq + mu
    return -(1.0 - e) * n * n + m_sq * m_sq


def slopes_array(spec: EquationSpec, modes: np.ndarray) -> np.ndarray:
    n = modes[:, 0].astype(float)
    return n if spec.family == Family.NLS else n * n


def default_grid(spec: EquationSpec, points: int = 1000) -> np.ndarray:
    """ε 网格 [0, ε₀]"""
    return np.linspace(0.0, spec.eps0, points)


def classify(
    spec: EquationSpec,
    nu: ModeVector,
    eps_grid: Sequence[float],
    tol: float = 1e-12,
) -> SetLabel:
    """Q/O/R 分类

    δ 关于 ε 为仿射函数，故在网格区间上的最小 |δ| 可解析给出。

    Raises:
        LatticeError: "boundary-ambiguous"，网格上 ||δ|-1/2| 低于分辨率容差
    """
    grid = np.asarray(eps_grid, dtype=float)
    if grid.size == 0 or grid.min() > 0:
        raise LatticeError("invalid-grid", "ε grid must contain 0")
    if in_kernel(spec, nu):
        return SetLabel.Q
    values = np.array([float(_eigenvalue_unchecked(spec, nu, float(e))) for e in (grid.min(), grid.max())])
    slope = eigenvalue_slope(spec, nu)
    on_grid = float(_eigenvalue_unchecked(spec, nu, 0.0)) + slope * grid
    if np.min(np.abs(np.abs(on_grid) - 0.5)) < tol:
        raise LatticeError("boundary-ambiguous", f"|δ| touches 1/2 on the grid at {nu}", witness=nu)
    if values[0] * values[1] <= 0:
        min_abs = 0.0
    else:
        min_abs = float(np.min(np.abs(values)))
    return SetLabel.O if min_abs < 0.5 else SetLabel.R


def enumerate_shell(
    spec: EquationSpec,
    radius: int,
    full: bool = False,
    include_origin: bool = True,
) -> List[ModeVector]:
    """枚举 |ν| ≤ radius 的格点（字典序：先 n 后 m）

    Args:
        full: 忽略 Dirichlet 基本域，返回整个 ℓ1 球
        include_origin: 是否包含原点
    """
    D = spec.dim
    dirichlet = spec.boundary == Boundary.DIRICHLET and not full
    out: List[ModeVector] = []
    for n in range(-radius, radius + 1):
        rest = radius - abs(n)
        low = 0 if dirichlet else -rest
        for m in itertools.product(range(low, rest + 1), repeat=D):
            if sum(abs(x) for x in m) <= rest:
                out.append(ModeVector(n, tuple(m)))
    if not include_origin:
        out = [nu for nu in out if nu.size > 0]
    return out


def active_shell(spec: EquationSpec, radius: int) -> List[ModeVector]:
    """可取非零振幅的格点：Dirichlet 下排除含零空间分量的模式"""
    shell = enumerate_shell(spec, radius, include_origin=False)
    if spec.boundary == Boundary.DIRICHLET:
        return [nu for nu in shell if all(x > 0 for x in nu.m)]
    return shell


def shell_array(modes: Iterable[ModeVector]) -> np.ndarray:
    return np.array([nu.as_tuple() for nu in modes], dtype=np.int64)


# ============ Dirichlet 奇对称 ============

def canonicalize(nu: ModeVector) -> Tuple[ModeVector, int]:
    """返回 (基本域代表元, 符号)，u_ν = 符号 · u_代表元；含零分量时符号为 0"""
    sign = 1
    m = []
    for x in nu.m:
        if x == 0:
            sign = 0
        elif x < 0:
            sign = -sign
        m.append(abs(x))
    return ModeVector(nu.n, tuple(m)), sign


def orbit(nu: ModeVector) -> List[Tuple[ModeVector, int]]:
    """S_i 翻转轨道及对应符号"""
    out = []
    for signs in itertools.product((1, -1), repeat=nu.dim):
        if any(s < 0 and x == 0 for s, x in zip(signs, nu.m)):
            continue
        image = ModeVector(nu.n, tuple(s * x for s, x in zip(signs, nu.m)))
        parity = 1
        for s in signs:
            parity *= s
        out.append((image, parity))
    return out


def expand_dirichlet(values: Dict[ModeVector, complex]) -> Dict[ModeVector, complex]:
    """基本域取值奇延拓到全格点"""
    full: Dict[ModeVector, complex] = {}
    for nu, value in values.items():
        if any(x == 0 for x in nu.m):
            continue
        for image, parity in orbit(nu):
            full[image] = parity * value
    return full


def canonicalize_field(values: Dict[ModeVector, complex]) -> Dict[ModeVector, complex]:
    """全格点取值限制到基本域"""
    return {nu: v for nu, v in values.items() if all(x > 0 for x in nu.m)}


# ============ 非共振条件验证 ============

def expected_kernel(spec: EquationSpec, nu: ModeVector) -> bool:
    """分岔所在的核：非共振族为基本模式轨道，共振族为 n=|m|²（NLB 为 |n|=|m|²）"""
    if spec.family == Family.NLS and spec.resonant:
        return nu.n == nu.m_sq
    if spec.family == Family.NLB:
        return abs(nu.n) == nu.m_sq
    base_n = (1,) if spec.family == Family.NLS else (1, -1)
    return nu.n in base_n and all(abs(x) == 1 for x in nu.m)


@dataclass
class NonResonanceReport:
    """非共振条件验证报告"""
    gamma0: float = 0.0
    tau0: float = 0.0
    gamma_by_tau: Dict[float, float] = field(default_factory=dict)
    c0: int = 1
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    pairs_checked: Optional[int] = None
    pair_failures: List[Tuple[ModeVector, ModeVector]] = field(default_factory=list)
    violations: List[ModeVector] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations and not self.pair_failures

    def raise_if_violated(self) -> None:
        if self.violations:
            raise LatticeError(
                "hypothesis-violated",
                f"δ(0)=0 outside the bifurcation kernel at {self.violations[0]}",
                witness=self.violations[0],
            )
        if self.pair_failures:
            raise LatticeError(
                "hypothesis-violated",
                f"|ν1-ν2| > |ν1+ν2| for pair {self.pair_failures[0]}",
                witness=self.pair_failures[0],
            )

    def to_dict(self) -> dict:
        return {
            "gamma0": self.gamma0,
            "tau0": self.tau0,
            "c0": self.c0,
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "pairs_checked": self.pairs_checked,
            "pair_failures": [[a.as_tuple(), b.as_tuple()] for a, b in self.pair_failures],
            "violations": [v.as_tuple() for v in self.violations],
            "passed": self.passed,
        }


def small_interval(spec: EquationSpec, nu: ModeVector, lo: float, hi: float, bound: float = 0.5) -> Optional[Tuple[float, float]]:
    """ε ∈ [lo, hi] 中 |δ_ν(ε)| < bound 的区间（仿射求解）"""
    d0 = float(eigenvalue_at_zero(spec, nu))
    slope = eigenvalue_slope(spec, nu)
    if slope == 0:
        return (lo, hi) if abs(d0) < bound else None
    a = (-bound - d0) / slope
    b = (bound - d0) / slope
    a, b = min(a, b), max(a, b)
    a, b = max(a, lo), min(b, hi)
    return (a, b) if a < b else None


def validate_hypothesis1(
    spec: EquationSpec,
    radius: int,
    eps_grid: Sequence[float],
    tau_grid: Optional[Sequence[float]] = None,
    gamma_floor: float = 1e-2,
    strict: bool = True,
) -> NonResonanceReport:
    """数值验证非共振条件

    Args:
        spec: 方程规格
        radius: 壳层半径
        eps_grid: ε 网格
        tau_grid: 拟合 τ₀ 的候选网格
        gamma_floor: γ₀ 可接受下限
        strict: 为 True 时违反即抛出异常

    Returns:
        NonResonanceReport

    Raises:
        LatticeError: "hypothesis-violated"
    """
    grid = np.asarray(eps_grid, dtype=float)
    lo, hi = float(grid.min()), float(grid.max())
    taus = list(tau_grid) if tau_grid is not None else [0.5 * j for j in range(0, 13)]
    shell = active_shell(spec, radius)
    report = NonResonanceReport(c0=1 if spec.family == Family.NLS else 2)

    # (i) Diophantine fit of δ(0)
    nonkernel = []
    for nu in shell:
        if in_kernel(spec, nu):
            if not expected_kernel(spec, nu):
                report.violations.append(nu)
        else:
            nonkernel.append(nu)
    if nonkernel:
        d0 = np.array([abs(float(eigenvalue_at_zero(spec, nu))) for nu in nonkernel])
        sizes = np.array([nu.size for nu in nonkernel], dtype=float)
        for tau in taus:
            report.gamma_by_tau[tau] = float(np.min(d0 * sizes ** tau))
        good = [t for t in taus if report.gamma_by_tau[t] >= gamma_floor]
        report.tau0 = good[0] if good else max(taus, key=lambda t: report.gamma_by_tau[t])
        report.gamma0 = report.gamma_by_tau[report.tau0]

    # (ii) ε-derivative constants on modes small somewhere in the window
    small = [(nu, small_interval(spec, nu, lo, hi)) for nu in nonkernel]
    small = [(nu, iv) for nu, iv in small if iv is not None]
    if small:
        ratios = [abs(eigenvalue_slope(spec, nu)) / nu.size ** report.c0 for nu, _ in small]
        report.c1 = float(min(ratios))
        report.c2 = float(max(ratios))
    mixed = [
        abs(1 if spec.family == Family.NLS else 2 * nu.n) / nu.size ** (report.c0 - 1)
        for nu in shell
    ]
    report.c3 = float(max(mixed, default=0.0))

    # (iii) |ν1−ν2| ≤ |ν1+ν2| on pairs small at a common ε (NLS only)
    if spec.family == Family.NLS and len(small) > 1:
        arr = shell_array([nu for nu, _ in small])
        ivs = np.array([iv for _, iv in small])
        overlap = (ivs[:, None, 0] < ivs[None, :, 1]) & (ivs[None, :, 0] < ivs[:, None, 1])
        diff = np.abs(arr[:, None, :] - arr[None, :, :]).sum(axis=2)
        summ = np.abs(arr[:, None, :] + arr[None, :, :]).sum(axis=2)
        iu = np.triu_indices(len(small), k=1)
        mask = overlap[iu]
        report.pairs_checked = int(mask.sum())
        bad = np.nonzero(mask & (diff[iu] > summ[iu]))[0]
        for idx in bad:
            report.pair_failures.append((small[iu[0][idx]][0], small[iu[1][idx]][0]))

    logger.info(
        f"📖 Non-resonance check on radius {radius}: γ0={report.gamma0:.3g}, τ0={report.tau0}, "
        f"c=({report.c0},{report.c1:.3g},{report.c2:.3g},{report.c3:.3g}), "
        f"pairs={report.pairs_checked}"
    )
    if strict:
        report.raise_if_violated()
    return report


# ============ μ 生成 ============

def mu_from_continued_fraction(quotients: Sequence[int], integer_part: int = 0) -> Fraction:
    """连分数 [a0; a1, a2, ...] 的渐近分数"""
    value = Fraction(0)
    for q in reversed(list(quotients)):
        if q <= 0:
            raise LatticeError("invalid-mu", f"partial quotients must be positive, got {q}")
        value = 1 / (q + value)
    return integer_part + value


def golden_mu(depth: int = 20, scale: Fraction = Fraction(1, 2)) -> Fraction:
    """基于黄金分割的 μ：scale · [0; 1, 1, ...]"""
    return scale * mu_from_continued_fraction([1] * depth)


def generate_mu_candidates(
    spec: EquationSpec,
    radius: int,
    count: int,
    max_quotient: int = 3,
    depth: int = 12,
    gamma_floor: float = 1e-2,
    seed: int = 0,
) -> List[Fraction]:
    """有界部分商连分数生成 μ，以 δ_ν(0) 的丢番图拟合作为接受准则"""
    rng = np.random.default_rng(seed)
    grid = default_grid(spec, 64)
    accepted: List[Fraction] = []
    attempts = 0
    while len(accepted) < count and attempts < 50 * count:
        attempts += 1
        quotients = [int(q) for q in rng.integers(1, max_quotient + 1, size=depth)]
        mu = mu_from_continued_fraction(quotients)
        trial = EquationSpec(
            family=spec.family, dim=spec.dim, mu=mu, boundary=spec.boundary,
            N=spec.N, coefficients=spec.coefficients, eps0=spec.eps0,
        )
        report = validate_hypothesis1(trial, radius, grid, gamma_floor=gamma_floor, strict=False)
        if report.violations or report.gamma0 < gamma_floor:
            continue
        accepted.append(mu)
    logger.info(f"✅ Generated {len(accepted)} μ candidates in {attempts} attempts")
    return accepted
