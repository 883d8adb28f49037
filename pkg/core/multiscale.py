"""
多尺度模块
矩阵范数、块矩阵 Aᵛ 与小除数 x_ν、尺度函数 χ_h、传播子 G_{i,h}、可容许性与特征值扰动检验
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh

from .clusters import ClusterPartition, candidate_modes, partition
from .errors import MultiscaleError
from .lattice import (
    EquationSpec,
    ModeVector,
    eigenvalue,
    eigenvalue_at_zero,
    eigenvalue_slope,
    eigenvalues_array,
    shell_array,
)

logger = logging.getLogger(__name__)

SELF_ADJOINT_TOL = 1e-12


# ============ 矩阵范数 ============

def _check_self_adjoint(A: np.ndarray, tol: float = SELF_ADJOINT_TOL) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise MultiscaleError("not-square", f"matrix shape {A.shape} is not square")
    if A.size and np.max(np.abs(A - A.conj().T)) > tol * max(1.0, np.max(np.abs(A))):
        raise MultiscaleError("not-self-adjoint", "matrix is not self-adjoint", witness=float(np.max(np.abs(A - A.conj().T))))


def matrix_norms(A: np.ndarray) -> Tuple[float, float, float]:
    """(|A|_∞, ‖A‖ = sqrt(tr(A A*)/d), ‖A‖₂)

    Raises:
        MultiscaleError: "not-self-adjoint"
    """
    A = np.asarray(A, dtype=complex)
    _check_self_adjoint(A)
    d = A.shape[0]
    if d == 0:
        return 0.0, 0.0, 0.0
    max_entry = float(np.max(np.abs(A)))
    trace_norm = float(np.sqrt(np.real(np.trace(A @ A.conj().T)) / d))
    operator = float(np.max(np.abs(eigh(A, eigvals_only=True))))
    return max_entry, trace_norm, operator


def norm_sandwich(A: np.ndarray, tol: float = 1e-12) -> Dict[str, bool]:
    """|A|_∞ ≤ ‖A‖₂；‖A‖ ≤ ‖A‖₂ ≤ √d‖A‖；‖A‖/√d ≤ |A|_∞"""
    inf, tr, op = matrix_norms(A)
    d = np.asarray(A).shape[0]
    slack = tol * max(1.0, op)
    return {
        "entry_le_operator": inf <= op + slack,
        "trace_le_operator": tr <= op + slack,
        "operator_le_sqrt_d_trace": op <= math.sqrt(d) * tr + slack,
        "trace_over_sqrt_d_le_entry": tr / math.sqrt(d) <= inf + slack,
    }


def lidskii_check(A: np.ndarray, B: np.ndarray, tol: float = 1e-10) -> bool:
    """|λ_a(A+B) − λ_a(A)| ≤ Σ_b |λ_b(B)|（升序特征值）"""
    lam_ab = eigh(A + B, eigvals_only=True)
    lam_a = eigh(A, eigvals_only=True)
    bound = float(np.sum(np.abs(eigh(B, eigvals_only=True))))
    return bool(np.all(np.abs(lam_ab - lam_a) <= bound + tol))


def row_sum_check(A: np.ndarray, tol: float = 1e-12) -> bool:
    """‖A‖₂ ≤ max_i Σ_j |A_ij|"""
    if A.size == 0:
        return True
    _, _, op = matrix_norms(A)
    return op <= float(np.max(np.abs(A).sum(axis=1))) + tol


def kappa_norm(entries: Dict[Tuple[ModeVector, ModeVector], complex], kappa: float, rho: float) -> float:
    """|M|_κ = sup |M_{νν'}| e^{κ|ν−ν'|^ρ}"""
    return max((abs(v) * math.exp(kappa * (a - b).size ** rho) for (a, b), v in entries.items()), default=0.0)


# ============ 块矩阵 ============

@dataclass
class BlockMatrix:
    """按聚类分块的自伴矩阵

    每块按 [σ=+ 的模式, σ=− 的模式] 排列，尺寸 2d。块外元素为零。
    """
    eps: float
    blocks: Dict[int, Tuple[Tuple[ModeVector, ...], np.ndarray]] = field(default_factory=dict)

    @classmethod
    def zeros(cls, eps: float, groups: Sequence[Sequence[ModeVector]]) -> "BlockMatrix":
        out = cls(eps)
        for j, modes in enumerate(groups):
            modes = tuple(sorted(modes))
            if modes:
                out.blocks[j] = (modes, np.zeros((2 * len(modes), 2 * len(modes)), dtype=complex))
        return out

    @classmethod
    def from_partition(cls, part: ClusterPartition, restrict: Optional[Sequence[ModeVector]] = None) -> "BlockMatrix":
        keep = set(restrict) if restrict is not None else None
        groups = [[nu for nu in cls_ if keep is None or nu in keep] for cls_ in part.classes]
        return cls.zeros(part.eps, groups)

    def _locate(self, nu: ModeVector) -> Optional[Tuple[int, int]]:
        for j, (modes, _) in self.blocks.items():
            if nu in modes:
                return j, modes.index(nu)
        return None

    def block_of(self, nu: ModeVector) -> Optional[int]:
        loc = self._locate(nu)
        return None if loc is None else loc[0]

    def entry(self, nu: ModeVector, sigma: int, nu2: ModeVector, sigma2: int) -> complex:
        a, b = self._locate(nu), self._locate(nu2)
        if a is None or b is None or a[0] != b[0]:
            return 0j
        modes, mat = self.blocks[a[0]]
        d = len(modes)
        return complex(mat[a[1] + (0 if sigma > 0 else d), b[1] + (0 if sigma2 > 0 else d)])

    def set_entry(self, nu: ModeVector, sigma: int, nu2: ModeVector, sigma2: int, value: complex) -> None:
        a, b = self._locate(nu), self._locate(nu2)
        if a is None or b is None or a[0] != b[0]:
            raise MultiscaleError("cross-block-entry", f"{nu} and {nu2} lie in different blocks", witness=(nu, nu2))
        modes, mat = self.blocks[a[0]]
        d = len(modes)
        mat[a[1] + (0 if sigma > 0 else d), b[1] + (0 if sigma2 > 0 else d)] = value

    def restrict(self, modes: Sequence[ModeVector]) -> np.ndarray:
        """限制到 modes × {±}，排列 [+…, −…]"""
        k = len(modes)
        out = np.zeros((2 * k, 2 * k), dtype=complex)
        for i, a in enumerate(modes):
            for j, b in enumerate(modes):
                for si, oi in ((1, 0), (-1, k)):
                    for sj, oj in ((1, 0), (-1, k)):
                        out[i + oi, j + oj] = self.entry(a, si, b, sj)
        return out

    def entries(self) -> Dict[Tuple[ModeVector, ModeVector], complex]:
        """(ν,ν') → 四个 σ 分量的最大模"""
        out: Dict[Tuple[ModeVector, ModeVector], complex] = {}
        for modes, mat in self.blocks.values():
            d = len(modes)
            for i, a in enumerate(modes):
                for j, b in enumerate(modes):
                    sub = mat[[i, i + d]][:, [j, j + d]]
                    out[(a, b)] = float(np.max(np.abs(sub)))
        return out

    def __add__(self, other: "BlockMatrix") -> "BlockMatrix":
        out = BlockMatrix(self.eps, {j: (m, a.copy()) for j, (m, a) in self.blocks.items()})
        for modes, mat in other.blocks.values():
            d = len(modes)
            for i, a in enumerate(modes):
                for j, b in enumerate(modes):
                    for si, oi in ((1, 0), (-1, d)):
                        for sj, oj in ((1, 0), (-1, d)):
                            v = mat[i + oi, j + oj]
                            if v != 0:
                                out.set_entry(a, si, b, sj, out.entry(a, si, b, sj) + v)
        return out

    def scaled(self, c: float) -> "BlockMatrix":
        return BlockMatrix(self.eps, {j: (m, a * c) for j, (m, a) in self.blocks.items()})

    def max_entry(self) -> float:
        return max((float(np.max(np.abs(a))) for _, a in self.blocks.values() if a.size), default=0.0)

    def is_self_adjoint(self, tol: float = SELF_ADJOINT_TOL) -> bool:
        return all(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol for _, a in self.blocks.values())

    def has_counterterm_symmetry(self, tol: float = SELF_ADJOINT_TOL) -> bool:
        """M^{σσ'}_{νν'} = M^{−σ',−σ}_{ν'ν}"""
        for modes, a in self.blocks.values():
            d = len(modes)
            pp, pm, mp, mm = a[:d, :d], a[:d, d:], a[d:, :d], a[d:, d:]
            if (np.max(np.abs(pp - mm.T), initial=0.0) > tol or np.max(np.abs(pm - pm.T), initial=0.0) > tol
                    or np.max(np.abs(mp - mp.T), initial=0.0) > tol):
                return False
        return True

    def norms(self) -> Dict[int, Tuple[float, float, float]]:
        return {j: matrix_norms(a) for j, (_, a) in self.blocks.items()}

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "blocks": {
                str(j): {"modes": [nu.as_tuple() for nu in modes], "max_entry": float(np.max(np.abs(a), initial=0.0))}
                for j, (modes, a) in self.blocks.items()
            },
        }


# ============ 尺度函数 ============

@dataclass(frozen=True)
class ScaleIndex:
    """传播子尺度标签 (h, i)；i=0 时 h=−1"""
    h: int
    i: int = 1

    def __post_init__(self) -> None:
        if self.i not in (0, 1):
            raise MultiscaleError("invalid-scale", f"type label must be 0 or 1, got {self.i}")
        if self.h < -1:
            raise MultiscaleError("invalid-scale", f"scale must be >= -1, got {self.h}")
        if self.i == 0 and self.h != -1:
            raise MultiscaleError("invalid-scale", f"i=0 requires h=-1, got h={self.h}")


def _glue(t: np.ndarray) -> np.ndarray:
    return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


class ScaleFunctions:
    """χ 及其分解 χ_h，台阶函数 χ̄₀、χ̄₁

    χ(x) = 1 (x ≤ γ)，0 (x ≥ 2γ)，中间由 e^{−1/t} 光滑拼接。
    """

    def __init__(self, gamma: float, gamma_bar: float, Gamma: float = 3.0):
        if not 0 < gamma < gamma_bar < 0.25:
            raise MultiscaleError("invalid-parameters", f"need 0 < γ < γ̄ < 1/4, got γ={gamma}, γ̄={gamma_bar}")
        self.gamma = gamma
        self.gamma_bar = gamma_bar
        self.Gamma = Gamma
        grid = np.linspace(gamma, 2 * gamma, 4001)
        values = self.chi(grid)
        self.lipschitz = float(np.max(np.abs(np.diff(values) / np.diff(grid))))
        if self.lipschitz > Gamma / gamma * (1 + 1e-9):
            raise MultiscaleError("invalid-parameters", f"|χ'| reaches {self.lipschitz * gamma:.3f}/γ > Γ/γ with Γ={Gamma}")

    def chi(self, x):
        t = (2 * self.gamma - np.abs(np.asarray(x, dtype=float))) / self.gamma
        a, b = _glue(t), _glue(1 - t)
        return np.where(t >= 1, 1.0, np.where(t <= 0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))

    def chi_h(self, h: int, x):
        if h < -1:
            raise MultiscaleError("invalid-scale", f"scale must be >= -1, got {h}")
        if h == -1:
            return 1.0 - self.chi(x)
        return self.chi(2.0 ** h * np.asarray(x, dtype=float)) - self.chi(2.0 ** (h + 1) * np.asarray(x, dtype=float))

    def chi_bar1(self, delta):
        return (np.abs(np.asarray(delta, dtype=float)) < self.gamma_bar).astype(float)

    def chi_bar0(self, delta):
        return 1.0 - self.chi_bar1(delta)

    def active_scales(self, x: float) -> List[int]:
        """χ_h(x) ≠ 0 的 h（至多两个）"""
        x = abs(float(x))
        if x == 0:
            return []
        top = max(0, int(math.ceil(math.log2(2 * self.gamma / x))) + 1)
        return [h for h in range(-1, top + 1) if self.chi_h(h, x) != 0]

    def C(self, h: int, x):
        """C_h(x) = Σ_{h' ≥ h} χ_{h'}(x) = χ(2^h x)（h ≥ 0），C_{−1} = 1"""
        if h <= -1:
            return np.ones_like(np.asarray(x, dtype=float))
        return self.chi(2.0 ** h * np.asarray(x, dtype=float))


def scale_functions(gamma: float, gamma_bar: float, Gamma: float = 3.0) -> ScaleFunctions:
    return ScaleFunctions(gamma, gamma_bar, Gamma)


# ============ 小除数与传播子 ============

@dataclass
class BlockData:
    """Aᵛ(ε) 及其逆"""
    modes: Tuple[ModeVector, ...]
    matrix: np.ndarray
    inverse: Optional[np.ndarray]
    x: float
    p: int


class PropagatorContext:
    """固定 (ε, M̂) 下的小除数与传播子求值器

    Args:
        spec: 方程规格
        M: 块矩阵 M̂（None 为零）
        eps: ε
        scales: 尺度函数
        xi: p_ν 指数 ξ
        part: ε 处的聚类划分（None 时按 radius 构建全格点划分）
    """

    def __init__(
        self,
        spec: EquationSpec,
        M: Optional[BlockMatrix],
        eps: float,
        scales: ScaleFunctions,
        xi: float = 2.0,
        part: Optional[ClusterPartition] = None,
        radius: int = 8,
        beta: float = 0.25,
        C2: float = 1.0,
    ):
        self.spec = spec
        self.M = M
        self.eps = eps
        self.scales = scales
        self.xi = xi
        self.part = part if part is not None else partition(spec, eps, radius, beta=beta, C2=C2, full=True)
        self._cache: Dict[Tuple[ModeVector, ...], BlockData] = {}

    @property
    def gamma_bar(self) -> float:
        return self.scales.gamma_bar

    def delta(self, nu: ModeVector) -> float:
        return float(eigenvalue(self.spec, nu, self.eps))

    def cluster_bar(self, nu: ModeVector) -> Tuple[ModeVector, ...]:
        """𝒞̄_ν(ε)：ν 所在类中 |δ| < γ̄ 的模式"""
        j = self.part.class_of(nu)
        pool = self.part.classes[j] if j is not None else (nu,)
        modes = [m for m in pool if abs(self.delta(m)) < self.gamma_bar]
        return tuple(sorted(modes))

    def block(self, nu: ModeVector) -> BlockData:
        """Aᵛ(ε) = diag(δ) + M̂ 限制到 𝒞̄_ν(ε) × {±}

        Raises:
            MultiscaleError: "mode-not-small"
        """
        if abs(self.delta(nu)) >= self.gamma_bar:
            raise MultiscaleError("mode-not-small", f"|δ_{nu}| ≥ γ̄={self.gamma_bar}", witness=nu)
        modes = self.cluster_bar(nu)
        if modes not in self._cache:
            deltas = np.array([self.delta(m) for m in modes])
            A = np.diag(np.concatenate([deltas, deltas])).astype(complex)
            if self.M is not None:
                A = A + self.M.restrict(modes)
            p = min(m.weight for m in modes)
            try:
                inv = np.linalg.inv(A)
                if not np.all(np.isfinite(inv)) or np.linalg.cond(A) > 1e14:
                    raise np.linalg.LinAlgError
                d = A.shape[0]
                trace_norm = float(np.sqrt(np.real(np.trace(inv @ inv.conj().T)) / d))
                x = 1.0 / (p ** self.xi * trace_norm)
            except np.linalg.LinAlgError:
                inv, x = None, 0.0
            self._cache[modes] = BlockData(modes, A, inv, x, p)
        return self._cache[modes]

    def small_divisor(self, nu: ModeVector) -> float:
        return self.block(nu).x

    def _inverse_entry(self, data: BlockData, nu: ModeVector, sigma: int, nu2: ModeVector, sigma2: int) -> complex:
        if data.inverse is None or nu2 not in data.modes:
            return 0j
        d = len(data.modes)
        i = data.modes.index(nu) + (0 if sigma > 0 else d)
        j = data.modes.index(nu2) + (0 if sigma2 > 0 else d)
        return complex(data.inverse[i, j])

    def propagator(self, nu: ModeVector, nu2: ModeVector, sigma: int, sigma2: int, scale: ScaleIndex) -> complex:
        """G^{σσ'}_{i,h}(ν, ν')

        Raises:
            MultiscaleError: "label-inconsistent"
        """
        d1 = self.delta(nu)
        if scale.i == 0:
            if nu != nu2 or sigma != sigma2:
                raise MultiscaleError("label-inconsistent", "i=0 propagators are diagonal", witness=(nu, nu2, sigma, sigma2))
            return complex(self.scales.chi_bar0(d1) / d1) if d1 != 0 else 0j
        d2 = self.delta(nu2)
        if not (self.scales.chi_bar1(d1) and self.scales.chi_bar1(d2)):
            return 0j
        data = self.block(nu)
        weight = float(self.scales.chi_h(scale.h, data.x))
        if weight == 0:
            return 0j
        return weight * self._inverse_entry(data, nu, sigma, nu2, sigma2)

    def scales_of(self, nu: ModeVector) -> List[ScaleIndex]:
        """ν 出发线可取的非零尺度标签"""
        if abs(self.delta(nu)) >= self.gamma_bar:
            return [ScaleIndex(-1, 0)]
        return [ScaleIndex(h, 1) for h in self.scales.active_scales(self.block(nu).x)]

    def propagator_sum(self, nu: ModeVector, nu2: ModeVector, sigma: int, sigma2: int) -> complex:
        """Σ_{i,h} G_{i,h}；等于块逆（多尺度分解）"""
        total = 0j
        if nu == nu2 and sigma == sigma2:
            total += self.propagator(nu, nu2, sigma, sigma2, ScaleIndex(-1, 0))
        if abs(self.delta(nu)) < self.gamma_bar:
            for scale in self.scales_of(nu):
                total += self.propagator(nu, nu2, sigma, sigma2, scale)
        return total

    def direct_inverse(self, modes: Sequence[ModeVector]) -> np.ndarray:
        """(diag(δ) + M̂)⁻¹ 的稠密逆，其中 |δ| ≥ γ̄ 的模式与小模式解耦"""
        modes = list(modes)
        k = len(modes)
        out = np.zeros((2 * k, 2 * k), dtype=complex)
        pos = {m: i for i, m in enumerate(modes)}
        for nu in modes:
            d = self.delta(nu)
            if abs(d) >= self.gamma_bar:
                i = pos[nu]
                out[i, i] = out[i + k, i + k] = 1.0 / d
                continue
            data = self.block(nu)
            if data.inverse is None:
                continue
            for nu2 in data.modes:
                if nu2 not in pos:
                    continue
                for s, o in ((1, 0), (-1, k)):
                    for s2, o2 in ((1, 0), (-1, k)):
                        out[pos[nu] + o, pos[nu2] + o2] = self._inverse_entry(data, nu, s, nu2, s2)
        return out

    def propagator_matrix(self, modes: Sequence[ModeVector]) -> np.ndarray:
        modes = list(modes)
        k = len(modes)
        out = np.zeros((2 * k, 2 * k), dtype=complex)
        for i, a in enumerate(modes):
            for j, b in enumerate(modes):
                for s, o in ((1, 0), (-1, k)):
                    for s2, o2 in ((1, 0), (-1, k)):
                        out[i + o, j + o2] = self.propagator_sum(a, b, s, s2)
        return out

    def block_constancy(self, nu: ModeVector) -> float:
        """𝒞̄_ν 内所有模式的 x 之差（应为零）"""
        x = self.small_divisor(nu)
        return max(abs(self.small_divisor(m) - x) for m in self.block(nu).modes)


def small_divisor(
    spec: EquationSpec,
    M: Optional[BlockMatrix],
    nu: ModeVector,
    eps: float,
    xi: float,
    gamma_bar: float,
    part: Optional[ClusterPartition] = None,
    radius: int = 8,
) -> float:
    """x_ν(ε) = p_ν^{−ξ} ‖(Aᵛ)⁻¹‖⁻¹；奇异时为 0"""
    scales = ScaleFunctions(min(gamma_bar / 2, 1e-3), gamma_bar)
    return PropagatorContext(spec, M, eps, scales, xi, part, radius).small_divisor(nu)


def propagator(ctx: PropagatorContext, nu: ModeVector, nu2: ModeVector, sigma: int, sigma2: int, scale: ScaleIndex) -> complex:
    return ctx.propagator(nu, nu2, sigma, sigma2, scale)


def fit_propagator_constant(ctx: PropagatorContext, modes: Sequence[ModeVector], alpha: float = 0.5) -> float:
    """|G_{1,h}| ≤ 2^h C γ⁻¹ p^{−ξ+α/2} 中的最小 C"""
    worst = 0.0
    for nu in modes:
        if abs(ctx.delta(nu)) >= ctx.gamma_bar:
            continue
        data = ctx.block(nu)
        for scale in ctx.scales_of(nu):
            bound = 2.0 ** scale.h / ctx.scales.gamma * data.p ** (-ctx.xi + alpha / 2)
            for nu2 in data.modes:
                for s in (1, -1):
                    for s2 in (1, -1):
                        worst = max(worst, abs(ctx.propagator(nu, nu2, s, s2, scale)) / bound)
    return worst


# ============ 可容许性 ============

@dataclass
class AdmissibilityResult:
    ok: bool
    witness: Optional[ModeVector] = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> dict:
        return {"ok": self.ok, "witness": None if self.witness is None else self.witness.as_tuple(), "reason": self.reason}


def admissible(
    spec: EquationSpec,
    M: Optional[BlockMatrix],
    eps: float,
    gamma: float,
    tau: float,
    tau1: float,
    gamma_bar: float,
    radius: int,
    xi: float = 2.0,
    part: Optional[ClusterPartition] = None,
) -> AdmissibilityResult:
    """ε ∈ 𝔇(γ)：x_ν ≥ γ/p_ν^τ 且 ||δ_ν|−γ̄| ≥ γ/|ν|^{τ₁}"""
    if gamma <= 0 or tau <= 0 or tau1 <= 0 or not gamma < gamma_bar:
        raise MultiscaleError("invalid-parameters", f"need positive γ < γ̄, τ, τ₁; got γ={gamma}, γ̄={gamma_bar}")
    part = part if part is not None else partition(spec, eps, radius, full=True)
    modes = part.members()
    if not modes:
        return AdmissibilityResult(True, reason="empty")
    deltas = eigenvalues_array(spec, shell_array(modes), eps)
    sizes = np.abs(shell_array(modes)).sum(axis=1)
    margin = np.abs(np.abs(deltas) - gamma_bar) - gamma / np.maximum(sizes, 1) ** tau1
    bad = np.nonzero(margin < 0)[0]
    if len(bad):
        return AdmissibilityResult(False, modes[int(bad[0])], "gamma-bar-margin")
    scales = ScaleFunctions(min(gamma, gamma_bar / 2), gamma_bar)
    ctx = PropagatorContext(spec, M, eps, scales, xi, part)
    for nu, d in zip(modes, deltas):
        if abs(d) >= gamma_bar:
            continue
        data = ctx.block(nu)
        if data.x < gamma / data.p ** tau:
            return AdmissibilityResult(False, nu, "small-divisor")
    return AdmissibilityResult(True)


def select_gamma_bar(
    spec: EquationSpec,
    radius: int,
    gamma_bar0: float = 1e-3,
    tau_bar0: float = 2.0,
    grid: Optional[Sequence[float]] = None,
) -> float:
    """𝔊 中最大的 γ̄：||δ_ν(0)| − γ̄| ≥ γ̄₀|ν|^{−τ̄₀}

    Raises:
        MultiscaleError: "no-gamma-bar"
    """
    grid = np.asarray(grid if grid is not None else np.linspace(0.24, 0.01, 47))
    modes = candidate_modes(spec, radius, full=True)
    if not modes:
        return float(np.max(grid))
    d0 = np.abs(np.array([float(eigenvalue_at_zero(spec, nu)) for nu in modes]))
    sizes = np.array([nu.weight for nu in modes], dtype=float)
    need = gamma_bar0 * sizes ** (-tau_bar0)
    for g in sorted(grid, reverse=True):
        if 0 < g < 0.25 and np.all(np.abs(d0 - g) >= need):
            logger.info(f"✅ Selected γ̄={g:.4g} on radius {radius}")
            return float(g)
    raise MultiscaleError("no-gamma-bar", f"no γ̄ on the grid satisfies the Diophantine margin (radius {radius})")


# ============ 特征值导数 ============

def derivative_bound_check(
    spec: EquationSpec,
    M: Optional[BlockMatrix],
    modes: Sequence[ModeVector],
    eps_points: Sequence[float],
    step: float = 1e-6,
    tol: float = 1e-6,
) -> bool:
    """块特征值的差商 |dλ/dε| ≤ ‖∂_ε A‖₂ + tol（M̂ 与 ε 无关）"""
    modes = list(modes)
    slopes = np.array([eigenvalue_slope(spec, nu) for nu in modes], dtype=float)
    bound = float(np.max(np.abs(slopes))) if len(slopes) else 0.0
    extra = M.restrict(modes) if M is not None else 0.0

    def eig(e: float) -> np.ndarray:
        d = np.array([float(eigenvalue(spec, nu, e)) for nu in modes])
        return eigh(np.diag(np.concatenate([d, d])) + extra, eigvals_only=True)

    for e in eps_points:
        hi = min(e + step, spec.eps0)
        lo = hi - step
        rate = np.abs(eig(hi) - eig(lo)) / step
        if np.any(rate > bound + tol):
            return False
    return True
