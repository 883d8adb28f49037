"""
傅里叶场模块
稀疏场 (ν,σ) → 复振幅、模式索引、FFT 网格乘法与 Wirtinger 线性化
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.fft import fftn, ifftn, next_fast_len

from .errors import SolverError
from .lattice import Boundary, EquationSpec, ModeVector, canonicalize, shell_array

logger = logging.getLogger(__name__)

PLUS = 1
MINUS = -1


class ModeIndex:
    """有序模式集合，提供位置映射与整数数组视图"""

    def __init__(self, modes: Iterable[ModeVector]):
        self.modes: List[ModeVector] = sorted(set(modes))
        self.pos: Dict[ModeVector, int] = {nu: i for i, nu in enumerate(self.modes)}
        dim = self.modes[0].dim if self.modes else 0
        self.array = shell_array(self.modes) if self.modes else np.zeros((0, dim + 1), dtype=np.int64)

    def __len__(self) -> int:
        return len(self.modes)

    def __contains__(self, nu: ModeVector) -> bool:
        return nu in self.pos

    def __iter__(self):
        return iter(self.modes)

    def index(self, nu: ModeVector) -> int:
        return self.pos[nu]

    def subset(self, modes: Iterable[ModeVector]) -> np.ndarray:
        return np.array([self.pos[nu] for nu in modes], dtype=np.int64)

    @property
    def radius(self) -> int:
        return int(np.abs(self.array).sum(axis=1).max()) if len(self) else 0


@dataclass
class FourierField:
    """稀疏场 u^σ_ν

    Attributes:
        entries: (ν, σ) → 复振幅
        radius: 截断半径 Λ
        real_field: 情形 II 约束 u⁻_ν = u⁺_{−ν}
        dirichlet: 奇对称 u_{S_i ν} = −u_ν
    """
    entries: Dict[Tuple[ModeVector, int], complex] = field(default_factory=dict)
    radius: int = 0
    real_field: bool = False
    dirichlet: bool = False

    @classmethod
    def from_plus(cls, values: Dict[ModeVector, complex], radius: int, real_field: bool = False, dirichlet: bool = False) -> "FourierField":
        """由 u⁺ 构造，u⁻_ν = conj(u⁺_ν)"""
        entries: Dict[Tuple[ModeVector, int], complex] = {}
        for nu, v in values.items():
            if v != 0:
                entries[(nu, PLUS)] = complex(v)
                entries[(nu, MINUS)] = complex(v).conjugate()
        return cls(entries=entries, radius=radius, real_field=real_field, dirichlet=dirichlet)

    @classmethod
    def from_vectors(cls, index: ModeIndex, up: np.ndarray, um: np.ndarray, radius: int, real_field: bool = False, dirichlet: bool = False, tol: float = 0.0) -> "FourierField":
        entries: Dict[Tuple[ModeVector, int], complex] = {}
        for nu, a, b in zip(index.modes, up, um):
            if abs(a) > tol:
                entries[(nu, PLUS)] = complex(a)
            if abs(b) > tol:
                entries[(nu, MINUS)] = complex(b)
        return cls(entries=entries, radius=radius, real_field=real_field, dirichlet=dirichlet)

    def get(self, nu: ModeVector, sigma: int = PLUS) -> complex:
        return self.entries.get((nu, sigma), 0j)

    def support(self) -> List[ModeVector]:
        return sorted({nu for nu, _ in self.entries})

    def to_vectors(self, index: ModeIndex) -> Tuple[np.ndarray, np.ndarray]:
        up = np.zeros(len(index), dtype=complex)
        um = np.zeros(len(index), dtype=complex)
        for (nu, sigma), v in self.entries.items():
            if nu in index:
                (up if sigma == PLUS else um)[index.pos[nu]] = v
        return up, um

    def scaled(self, c: complex) -> "FourierField":
        """乘以实数 c 保持共轭关系；复数 c 时 u⁻ 乘 conj(c)"""
        entries = {
            (nu, s): v * (c if s == PLUS else np.conj(c)) for (nu, s), v in self.entries.items()
        }
        return FourierField(entries, self.radius, self.real_field, self.dirichlet)

    def __add__(self, other: "FourierField") -> "FourierField":
        entries = dict(self.entries)
        for key, v in other.entries.items():
            entries[key] = entries.get(key, 0j) + v
        return FourierField(entries, max(self.radius, other.radius), self.real_field, self.dirichlet)

    def __sub__(self, other: "FourierField") -> "FourierField":
        return self + other.scaled(-1.0)

    def sup_norm(self) -> float:
        return max((abs(v) for v in self.entries.values()), default=0.0)

    def symmetry_defects(self) -> Dict[str, float]:
        """各声明对称性的最大偏差"""
        out = {"reality": 0.0}
        for nu in self.support():
            out["reality"] = max(out["reality"], abs(self.get(nu, MINUS) - np.conj(self.get(nu, PLUS))))
        if self.real_field:
            out["case_ii"] = max(
                (abs(self.get(nu, MINUS) - self.get(-nu, PLUS)) for nu in self.support()), default=0.0
            )
        if self.dirichlet:
            worst = 0.0
            for nu in self.support():
                canon, sign = canonicalize(nu)
                for sigma in (PLUS, MINUS):
                    worst = max(worst, abs(self.get(nu, sigma) - sign * self.get(canon, sigma)))
            out["dirichlet"] = worst
        return out

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return all(v <= tol for v in self.symmetry_defects().values())

    def outside_radius(self) -> List[ModeVector]:
        return [nu for nu in self.support() if nu.size > self.radius]


# ============ 稀疏卷积（暴力校验） ============

def sparse_product(factors: Sequence[Dict[ModeVector, complex]]) -> Dict[ModeVector, complex]:
    """逐项卷积 ∏ W_i 的傅里叶系数"""
    out: Dict[ModeVector, complex] = {}
    for combo in itertools.product(*[list(f.items()) for f in factors]):
        nu = combo[0][0]
        value = combo[0][1]
        for mode, c in combo[1:]:
            nu = nu + mode
            value *= c
        out[nu] = out.get(nu, 0j) + value
    return out


def sparse_nonlinearity(spec: EquationSpec, fld: FourierField, eta: float = 0.0) -> Dict[Tuple[ModeVector, int], complex]:
    """逐项求 f^σ_ν(u, η)，与网格乘法独立"""
    plus = {nu: fld.get(nu, PLUS) for nu in fld.support() if fld.get(nu, PLUS) != 0}
    minus_spec = {-nu: fld.get(nu, MINUS) for nu in fld.support() if fld.get(nu, MINUS) != 0}
    out: Dict[Tuple[ModeVector, int], complex] = {}
    for c in spec.coefficients:
        shift = c.degree - spec.N - 1
        weight = eta ** shift if shift else 1.0
        if weight == 0:
            continue
        coef_mode = ModeVector(0, c.m)
        prod = sparse_product([plus] * c.r + [minus_spec] * c.s) if c.degree else {ModeVector(0, (0,) * spec.dim): 1.0}
        for nu, v in prod.items():
            key = (nu + coef_mode, PLUS)
            out[key] = out.get(key, 0j) + weight * c.value * v
        conj_prod = sparse_product([minus_spec] * c.r + [plus] * c.s) if c.degree else {ModeVector(0, (0,) * spec.dim): 1.0}
        for nu, v in conj_prod.items():
            key = (-(nu - coef_mode), MINUS)
            out[key] = out.get(key, 0j) + weight * np.conj(c.value) * v
    return out


# ============ FFT 网格 ============

class SpectralGrid:
    """稠密 FFT 网格：每轴长度 L ≥ (p+1)Λ+1 保证 |ν| ≤ 2Λ 处无混叠"""

    def __init__(self, dim: int, radius: int, degree: int):
        self.dim = dim
        self.radius = radius
        self.degree = max(degree, 1)
        self.size = next_fast_len((self.degree + 1) * radius + 1)
        self.shape = (self.size,) * (dim + 1)

    def _indices(self, modes: np.ndarray) -> Tuple[np.ndarray, ...]:
        wrapped = np.mod(modes, self.size)
        return tuple(wrapped[..., i] for i in range(wrapped.shape[-1]))

    def synthesize(self, modes: np.ndarray, coeffs: np.ndarray, negate: bool = False) -> np.ndarray:
        """Σ c_ν e^{±iν·x} 在网格上的取值"""
        spectrum = np.zeros(self.shape, dtype=complex)
        if len(coeffs):
            np.add.at(spectrum, self._indices(-modes if negate else modes), coeffs)
        return ifftn(spectrum, norm="forward")

    def analyze(self, values: np.ndarray) -> np.ndarray:
        return fftn(values, norm="forward")

    def gather(self, spectrum: np.ndarray, modes: np.ndarray) -> np.ndarray:
        return spectrum[self._indices(modes)]


Series = List[Optional[np.ndarray]]


def series_mul(a: Series, b: Series, order: int) -> Series:
    """η 级数逐点乘积，截断到 order"""
    out: Series = [None] * (order + 1)
    for i, x in enumerate(a[: order + 1]):
        if x is None:
            continue
        for j, y in enumerate(b[: order + 1 - i]):
            if y is None:
                continue
            k = i + j
            out[k] = x * y if out[k] is None else out[k] + x * y
    return out


class Nonlinearity:
    """f^±(x, W⁺, W⁻, η) 的网格实现"""

    def __init__(self, spec: EquationSpec, grid: SpectralGrid):
        self.spec = spec
        self.grid = grid
        self.terms: Dict[Tuple[int, int], np.ndarray] = {}
        by_rs: Dict[Tuple[int, int], List] = {}
        for c in spec.coefficients:
            if c.degree < spec.N + 1:
                raise SolverError("invalid-spec", f"coefficient degree {c.degree} below leading order {spec.N + 1}")
            by_rs.setdefault((c.r, c.s), []).append(c)
        for rs, coefs in by_rs.items():
            modes = np.array([(0,) + c.m for c in coefs], dtype=np.int64)
            values = np.array([c.value for c in coefs], dtype=complex)
            self.terms[rs] = grid.synthesize(modes, values)
        early = [rs for rs in self.terms if spec.N + 1 < sum(rs) < 2 * spec.N + 1]
        if early:
            logger.warning(f"⚠️ Coefficients {early} feed orders 0<k<N of the kernel equation, which are set to zero")

    def shift(self, rs: Tuple[int, int]) -> int:
        return sum(rs) - self.spec.N - 1

    def series(self, wp: Series, wm: Series, order: int) -> Tuple[Series, Series]:
        """f⁺(η)、f⁻(η) 的网格级数，截断到 order"""
        fp: Series = [None] * (order + 1)
        fm: Series = [None] * (order + 1)
        pow_p: Dict[int, Series] = {0: [np.ones(self.grid.shape, dtype=complex)] + [None] * order}
        pow_m: Dict[int, Series] = {0: [np.ones(self.grid.shape, dtype=complex)] + [None] * order}

        def power(cache, base, k):
            if k not in cache:
                cache[k] = series_mul(power(cache, base, k - 1), base, order)
            return cache[k]

        for (r, s), a in self.terms.items():
            shift = self.shift((r, s))
            if shift > order:
                continue
            prod_p = series_mul(power(pow_p, wp, r), power(pow_m, wm, s), order - shift)
            prod_m = series_mul(power(pow_m, wm, r), power(pow_p, wp, s), order - shift)
            for j, (xp, xm) in enumerate(zip(prod_p, prod_m)):
                if xp is not None:
                    fp[j + shift] = a * xp if fp[j + shift] is None else fp[j + shift] + a * xp
                if xm is not None:
                    term = np.conj(a) * xm
                    fm[j + shift] = term if fm[j + shift] is None else fm[j + shift] + term
        return fp, fm

    def kernels(self, wp: np.ndarray, wm: np.ndarray, eta: float = 0.0, only_shift: Optional[int] = None) -> Dict[str, np.ndarray]:
        """Wirtinger 导数核 g^{σσ'}，η 权重 η^{r+s-N-1}；only_shift 时只取该阶且权重为 1"""
        shape = self.grid.shape
        out = {key: np.zeros(shape, dtype=complex) for key in ("pp", "pm", "mp", "mm")}
        for (r, s), a in self.terms.items():
            shift = self.shift((r, s))
            if only_shift is not None:
                weight = 1.0 if shift == only_shift else 0.0
            else:
                weight = eta ** shift if shift else 1.0
            if weight == 0:
                continue
            if r:
                out["pp"] += weight * r * a * wp ** (r - 1) * wm ** s
                out["mm"] += weight * r * np.conj(a) * wm ** (r - 1) * wp ** s
            if s:
                out["pm"] += weight * s * a * wp ** r * wm ** (s - 1)
                out["mp"] += weight * s * np.conj(a) * wm ** r * wp ** (s - 1)
        return out

    def evaluate(self, wp: np.ndarray, wm: np.ndarray, eta: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        """固定 η 下 f⁺(x)、f⁻(x)"""
        fp = np.zeros(self.grid.shape, dtype=complex)
        fm = np.zeros(self.grid.shape, dtype=complex)
        for (r, s), a in self.terms.items():
            shift = self.shift((r, s))
            weight = eta ** shift if shift else 1.0
            if weight == 0:
                continue
            fp += weight * a * wp ** r * wm ** s
            fm += weight * np.conj(a) * wm ** r * wp ** s
        return fp, fm


class FieldOperator:
    """模式集合上的非线性映射及其雅可比矩阵

    u⁺ 以 e^{iν·x} 合成，u⁻ 以 e^{−iν·x} 合成；f⁻_ν 取 [f⁻]_{−ν}。
    """

    def __init__(self, spec: EquationSpec, index: ModeIndex, radius: Optional[int] = None):
        self.spec = spec
        self.index = index
        self.radius = radius if radius is not None else max(index.radius, 1)
        self.grid = SpectralGrid(spec.dim, self.radius, spec.max_degree)
        self.nonlinearity = Nonlinearity(spec, self.grid)

    def fields(self, up: np.ndarray, um: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        wp = self.grid.synthesize(self.index.array, up)
        wm = self.grid.synthesize(self.index.array, um, negate=True)
        return wp, wm

    def apply(self, up: np.ndarray, um: np.ndarray, eta: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        """f⁺_ν, f⁻_ν 在索引模式上的取值"""
        wp, wm = self.fields(up, um)
        fp, fm = self.nonlinearity.evaluate(wp, wm, eta)
        return (
            self.grid.gather(self.grid.analyze(fp), self.index.array),
            self.grid.gather(self.grid.analyze(fm), -self.index.array),
        )

    def series(self, orders: Dict[int, Tuple[np.ndarray, np.ndarray]], order: int) -> List[Tuple[np.ndarray, np.ndarray]]:
        """f^{(j)} (j ≤ order) 在索引模式上的系数"""
        wp: Series = [None] * (order + 1)
        wm: Series = [None] * (order + 1)
        for k, (up, um) in orders.items():
            if k <= order and (np.any(up) or np.any(um)):
                wp[k], wm[k] = self.fields(up, um)
        fp, fm = self.nonlinearity.series(wp, wm, order)
        zero = np.zeros(len(self.index), dtype=complex)
        out = []
        for xp, xm in zip(fp, fm):
            cp = zero.copy() if xp is None else self.grid.gather(self.grid.analyze(xp), self.index.array)
            cm = zero.copy() if xm is None else self.grid.gather(self.grid.analyze(xm), -self.index.array)
            out.append((cp, cm))
        return out

    def jacobian(
        self,
        up: np.ndarray,
        um: np.ndarray,
        eta: float = 0.0,
        rows: Optional[ModeIndex] = None,
        cols: Optional[ModeIndex] = None,
        only_shift: Optional[int] = None,
    ) -> np.ndarray:
        """B = ∂(f⁺, f⁻)/∂(u⁺, u⁻)，行列按 [σ=+ 全部模式, σ=− 全部模式] 排列"""
        rows = rows or self.index
        cols = cols or self.index
        wp, wm = self.fields(up, um)
        spectra = {k: self.grid.analyze(v) for k, v in self.nonlinearity.kernels(wp, wm, eta, only_shift).items()}
        r = rows.array[:, None, :]
        c = cols.array[None, :, :]
        pp = self.grid.gather(spectra["pp"], r - c)
        pm = self.grid.gather(spectra["pm"], r + c)
        mp = self.grid.gather(spectra["mp"], -r - c)
        mm = self.grid.gather(spectra["mm"], -r + c)
        return np.block([[pp, pm], [mp, mm]])


def support_closure(spec: EquationSpec, seed: Iterable[ModeVector], radius: int, max_iter: int = 64) -> List[ModeVector]:
    """非线性作用下种子支撑的闭包（限制在 ℓ1 球内）"""
    current = {nu for nu in seed if nu.size <= radius}
    if not current:
        return []
    grid = SpectralGrid(spec.dim, radius, spec.max_degree)
    ball = [nu for nu in _ball(spec.dim, radius)]
    ball_arr = shell_array(ball)
    coef_modes = {(0,) + c.m for c in spec.coefficients}
    for _ in range(max_iter):
        arr = shell_array(sorted(current))
        ones = np.ones(len(arr), dtype=complex)
        wp = grid.synthesize(arr, ones)
        wm = grid.synthesize(arr, ones, negate=True)
        total = np.zeros(grid.shape, dtype=float)
        for c in spec.coefficients:
            a = grid.synthesize(np.array([(0,) + c.m]), np.ones(1, dtype=complex))
            total += np.abs(grid.analyze(a * wp ** c.r * wm ** c.s))
        reach = grid.gather(total, ball_arr) > 0.5
        new = current | {nu for nu, hit in zip(ball, reach) if hit}
        if spec.boundary == Boundary.DIRICHLET:
            new = {nu for nu in new if all(x != 0 for x in nu.m)}
        if new == current:
            break
        current = new
    logger.debug(f"Support closure: {len(current)} modes within radius {radius} ({len(coef_modes)} coefficient modes)")
    return sorted(current)


def _ball(dim: int, radius: int) -> List[ModeVector]:
    out = []
    for v in itertools.product(range(-radius, radius + 1), repeat=dim + 1):
        if sum(abs(x) for x in v) <= radius:
            out.append(ModeVector.from_tuple(v))
    return out
