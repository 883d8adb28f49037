"""
分岔方程模块
ε=0 处 Q 方程：单模闭式振幅、完全共振 NLS/NLB 的候选振幅、共振四元组、J 矩阵与精确残差
"""

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .algebraic import AlgebraicNumber, Matrix, parity_invertible, transpose
from .errors import AlgebraicError, BifurcationError
from .fields import FourierField, sparse_nonlinearity
from .lattice import Boundary, EquationSpec, Family, ModeVector, eigenvalue_slope

logger = logging.getLogger(__name__)

Vec = Tuple[int, ...]

CONVENTIONS = ("displayed", "balanced")


# ============ 整数向量工具 ============

def _add(a: Vec, b: Vec) -> Vec:
    return tuple(x + y for x, y in zip(a, b))


def _sub(a: Vec, b: Vec) -> Vec:
    return tuple(x - y for x, y in zip(a, b))


def _dot(a: Vec, b: Vec) -> int:
    return sum(x * y for x, y in zip(a, b))


def _l1(a: Vec) -> int:
    return sum(abs(x) for x in a)


def _sq(a: Vec) -> int:
    return _dot(a, a)


def in_z1(m: Vec) -> bool:
    """Z^D_1：首分量为奇数，其余为偶数"""
    return m[0] % 2 == 1 and all(x % 2 == 0 for x in m[1:])


def in_z1_plus(m: Vec) -> bool:
    return in_z1(m) and all(x > 0 for x in m)


def z1_plus_modes(dim: int, radius: int) -> List[Vec]:
    """Z^D_{1,+} ∩ {|m|₁ ≤ radius}"""
    axes = [range(1, radius + 1, 2)] + [range(2, radius + 1, 2)] * (dim - 1)
    return sorted(m for m in itertools.product(*axes) if _l1(m) <= radius)


def l1_ball(dim: int, radius: int) -> List[Vec]:
    return [m for m in itertools.product(range(-radius, radius + 1), repeat=dim) if _l1(m) <= radius]


def _sign_patterns(m: Vec) -> Iterable[Tuple[int, ...]]:
    for signs in itertools.product((1, -1), repeat=len(m)):
        if any(s < 0 and x == 0 for s, x in zip(signs, m)):
            continue
        yield signs


def _orbit(m: Vec) -> List[Tuple[Vec, int]]:
    out = []
    for signs in _sign_patterns(m):
        out.append((tuple(s * x for s, x in zip(signs, m)), int(np.prod(signs))))
    return out


def _fold(m: Vec) -> Tuple[Vec, int]:
    """(基本域代表元, 符号)；含零分量时符号为 0"""
    sign = 1
    for x in m:
        if x == 0:
            return tuple(abs(y) for y in m), 0
        if x < 0:
            sign = -sign
    return tuple(abs(x) for x in m), sign


# ============ 类型 ============

@dataclass
class AmplitudeProfile:
    """Q 方程振幅剖面（仅存储基本域）

    Attributes:
        support: ℳ₊ ⊂ Z^D_{1,+}（单模情形为 (1,…,1)）
        amplitudes: m → 精确振幅
        family: 方程族（NLS 用 |m|²，NLB 用 |m|⁴）
        convention: 闭式分母约定
    """
    support: Tuple[Vec, ...]
    amplitudes: Dict[Vec, AlgebraicNumber]
    family: Family = Family.NLS
    convention: str = "displayed"

    @property
    def dim(self) -> int:
        return len(self.support[0]) if self.support else 0

    @property
    def N0(self) -> int:
        return len(self.support)

    @property
    def power(self) -> int:
        return 4 if self.family == Family.NLB else 2

    @property
    def max_norm(self) -> int:
        return max((_l1(m) for m in self.support), default=0)

    def value(self, m: Vec) -> AlgebraicNumber:
        """奇延拓 A(m) = ∏ sgn(m_i) · a_{|m|}"""
        canon, sign = _fold(m)
        if sign == 0:
            return AlgebraicNumber()
        a = self.amplitudes.get(canon)
        return AlgebraicNumber() if a is None else a * sign

    def floats(self) -> Dict[Vec, float]:
        return {m: float(a) for m, a in self.amplitudes.items()}

    def orbit_values(self) -> Dict[Vec, AlgebraicNumber]:
        out = {}
        for m in self.support:
            for image, sign in _orbit(m):
                out[image] = self.amplitudes[m] * sign
        return out

    def with_amplitude(self, m: Vec, value: AlgebraicNumber) -> "AmplitudeProfile":
        amps = dict(self.amplitudes)
        amps[m] = value
        return AmplitudeProfile(self.support, amps, self.family, self.convention)

    def to_dict(self) -> dict:
        return {
            "support": [list(m) for m in self.support],
            "amplitudes": {str(m): repr(a) for m, a in self.amplitudes.items()},
            "floats": {str(m): v for m, v in self.floats().items()},
            "family": self.family.value,
            "convention": self.convention,
            "N0": self.N0,
        }


@dataclass(frozen=True)
class Inadmissible:
    """闭式根式为负的候选"""
    mode: Vec
    radicand: Fraction
    convention: str

    def __bool__(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"inadmissible": list(self.mode), "radicand": str(self.radicand), "convention": self.convention}


@dataclass(frozen=True, order=True)
class ResonantQuadruple:
    """m₁ + m₂ − m₃ = m，且 ⟨m₁−m₃, m₂−m₃⟩ = 0"""
    m1: Vec
    m2: Vec
    m3: Vec
    m: Vec

    def is_valid(self) -> bool:
        return _sub(_add(self.m1, self.m2), self.m3) == self.m and _dot(_sub(self.m1, self.m3), _sub(self.m2, self.m3)) == 0


def _resonant(m1: Vec, m2: Vec, m3: Vec) -> bool:
    return _dot(_sub(m1, m3), _sub(m2, m3)) == 0


# ============ 四元组 ============

def enumerate_quadruples(m: Vec, radius: int, family: Family = Family.NLS) -> List[ResonantQuadruple]:
    """m 处全部共振四元组（|m_i|₁ ≤ radius），字典序

    NLB 经奇偶约化后与 NLS 约束相同。
    """
    family = Family(family)
    if family == Family.NLW:
        raise BifurcationError("unsupported-family", "NLW has no completely resonant Q equation")
    m = tuple(m)
    ball = l1_ball(len(m), radius)
    out = []
    for m2 in ball:
        for m3 in ball:
            m1 = _add(_sub(m, m2), m3)
            if _l1(m1) <= radius and _resonant(m1, m2, m3):
                out.append(ResonantQuadruple(m1, m2, m3, m))
    out.sort()
    return out


# ============ 候选振幅 ============

def closed_form_constants(dim: int, N0: int, convention: str = "displayed") -> Tuple[Fraction, int]:
    """(c₁, 分母)"""
    if convention not in CONVENTIONS:
        raise BifurcationError("unknown-convention", f"Unknown convention '{convention}'. Available: {list(CONVENTIONS)}")
    two, three = 2 ** (dim + 1), 3 ** dim
    c1 = Fraction(two, two * (N0 - 1) + three)
    return c1, (two - three if convention == "displayed" else three - two)


def rescaling_factor(dim: int, N0: int) -> int:
    """z = (2^{D+1} − 3^D)(2^{D+1}(N₀−1) + 3^D)，恒为奇数"""
    two, three = 2 ** (dim + 1), 3 ** dim
    return (two - three) * (two * (N0 - 1) + three)


def candidate_profile(
    support: Iterable[Sequence[int]],
    family: Family = Family.NLS,
    convention: str = "displayed",
) -> Union[AmplitudeProfile, Inadmissible]:
    """闭式候选 a_m = sqrt((|m|^p − c₁ Σ|m′|^p) / 分母)

    Raises:
        BifurcationError: "support-not-in-Z1"
    """
    family = Family(family)
    modes = tuple(sorted({tuple(m) for m in support}))
    if not modes:
        raise BifurcationError("empty-support", "support must be nonempty")
    bad = [m for m in modes if not in_z1_plus(m)]
    if bad:
        raise BifurcationError("support-not-in-Z1", f"modes {bad} not in Z^D_(1,+)", witness=bad)
    p = 4 if family == Family.NLB else 2
    c1, denom = closed_form_constants(len(modes[0]), len(modes), convention)
    total = sum(_sq(m) ** (p // 2) for m in modes)
    amps: Dict[Vec, AlgebraicNumber] = {}
    for m in modes:
        radicand = (Fraction(_sq(m) ** (p // 2)) - c1 * total) / denom
        if radicand < 0:
            logger.info(f"Support {modes} inadmissible at {m} under '{convention}': radicand {radicand}")
            return Inadmissible(m, radicand, convention)
        amps[m] = AlgebraicNumber.sqrt(radicand)
    return AmplitudeProfile(modes, amps, family, convention)


# ============ 残差 ============

def _cubic_sum(profile: AmplitudeProfile) -> Dict[Vec, AlgebraicNumber]:
    """Σ_{m₁+m₂−m₃=m, 共振} A(m₁)A(m₂)A(m₃)，按基本域振幅三元组分组后求值"""
    orbit = []
    for m in profile.support:
        for image, sign in _orbit(m):
            orbit.append((image, sign, m))
    counts: Dict[Vec, Dict[Tuple[Vec, ...], int]] = defaultdict(lambda: defaultdict(int))
    for (m1, s1, c1), (m2, s2, c2), (m3, s3, c3) in itertools.product(orbit, repeat=3):
        if not _resonant(m1, m2, m3):
            continue
        target = _sub(_add(m1, m2), m3)
        counts[target][tuple(sorted((c1, c2, c3)))] += s1 * s2 * s3
    products: Dict[Tuple[Vec, ...], AlgebraicNumber] = {}
    out: Dict[Vec, AlgebraicNumber] = {}
    for target, by_key in counts.items():
        total = AlgebraicNumber()
        for key, k in by_key.items():
            if k == 0:
                continue
            if key not in products:
                a, b, c = (profile.amplitudes[x] for x in key)
                products[key] = a * b * c
            total = total + products[key] * k
        out[target] = total
    return out


def q_residual(profile: AmplitudeProfile, radius: Optional[int] = None) -> Dict[Vec, AlgebraicNumber]:
    """|m|^p A(m) − Σ A A A 在基本域 |m|₁ ≤ radius 上的精确残差

    Raises:
        BifurcationError: "radius-too-small"
    """
    if not profile.support:
        return {}
    top = profile.max_norm
    radius = 3 * top + 1 if radius is None else radius
    if radius < 2 * top + 1:
        raise BifurcationError("radius-too-small", f"radius {radius} < 2·{top}+1", witness=radius)
    rhs = _cubic_sum(profile)
    targets = {_fold(m)[0] for m, v in rhs.items() if _fold(m)[1] != 0} | set(profile.support)
    out: Dict[Vec, AlgebraicNumber] = {}
    for m in sorted(targets):
        if _l1(m) > radius:
            continue
        lhs = profile.value(m) * (_sq(m) ** (profile.power // 2))
        out[m] = lhs - rhs.get(m, AlgebraicNumber())
    return out


def residual_vanishes(residual: Dict[Vec, AlgebraicNumber]) -> bool:
    return all(v.is_zero() for v in residual.values())


def search_supports(
    dim: int,
    radius: int,
    max_size: int = 2,
    family: Family = Family.NLS,
    conventions: Sequence[str] = ("displayed",),
) -> List[AmplitudeProfile]:
    """扫描 Z^D_{1,+} 子集，保留可容许且残差精确为零的支撑

    不可容许与残差非零的候选只记录日志；balanced 约定须显式传入。
    """
    modes = z1_plus_modes(dim, radius)
    found: List[AmplitudeProfile] = []
    tried = 0
    for size in range(1, max_size + 1):
        for subset in itertools.combinations(modes, size):
            for convention in conventions:
                tried += 1
                profile = candidate_profile(subset, family, convention)
                if not profile:
                    continue
                try:
                    ok = residual_vanishes(q_residual(profile))
                except AlgebraicError as e:
                    logger.debug(f"Skipping {subset}: {e}")
                    continue
                if ok:
                    found.append(profile)
                else:
                    logger.info(f"Candidate {subset} ('{convention}') admissible but residual nonzero")
    logger.info(f"✅ Support search: {len(found)} valid of {tried} candidates (D={dim}, radius={radius})")
    return found


# ============ J 矩阵 ============

@dataclass
class QJacobian:
    """Q 方程线性化（基本域 Z^D_{1,+} 截断壳上）"""
    modes: List[Vec]
    matrix: Matrix
    z: int
    blocks: List[List[int]] = field(default_factory=list)

    def block(self, i: int) -> Matrix:
        idx = self.blocks[i]
        return [[self.matrix[r][c] for c in idx] for r in idx]

    def rescaled_block(self, i: int) -> Matrix:
        return [[x * self.z for x in row] for row in self.block(i)]

    def is_symmetric(self) -> bool:
        return all(a == b for ra, rb in zip(self.matrix, transpose(self.matrix)) for a, b in zip(ra, rb))

    def block_sizes(self) -> List[int]:
        return [len(b) for b in self.blocks]

    def parity_invertible(self) -> bool:
        """z·J 各块满足奇偶范式且行列式为奇数 + 2α"""
        return all(parity_invertible(self.rescaled_block(i)) for i in range(len(self.blocks)))

    def to_float(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.matrix])


def assemble_J(profile: AmplitudeProfile, radius: Optional[int] = None, form: str = "literal", dim: Optional[int] = None) -> QJacobian:
    """组装 J：|m|^p Q_m − 2Σ A(m₂)A(m₃) Q_{m−m₂+m₃} − 2Σ_{m₁>m₂} A(m₁)A(m₂) Q_{m₁+m₂−m}

    form="linearized" 额外减去 m₁=m₂ 对角项 A(m)²（即真实导数）。

    Raises:
        BifurcationError: "support-not-in-Z1"
    """
    if form not in ("literal", "linearized"):
        raise BifurcationError("unknown-form", f"Unknown form '{form}'. Available: ['literal', 'linearized']")
    dim = dim or profile.dim
    if not dim:
        raise BifurcationError("invalid-spec", "dimension required for an empty profile")
    bad = [m for m in profile.support if not in_z1_plus(m)]
    if bad:
        raise BifurcationError("support-not-in-Z1", f"modes {bad} not in Z^D_(1,+)", witness=bad)
    radius = radius if radius is not None else 3 * max(profile.max_norm, 1) + 1
    modes = z1_plus_modes(dim, radius)
    pos = {m: i for i, m in enumerate(modes)}
    n = len(modes)
    p = profile.power
    entries: List[Dict[int, AlgebraicNumber]] = [defaultdict(AlgebraicNumber) for _ in range(n)]
    orbit = list(profile.orbit_values().items())

    def put(row: int, col_vec: Vec, value: AlgebraicNumber) -> None:
        canon, sign = _fold(col_vec)
        if sign == 0 or canon not in pos:
            return
        entries[row][pos[canon]] = entries[row][pos[canon]] + value * sign

    for i, m in enumerate(modes):
        entries[i][i] = entries[i][i] + _sq(m) ** (p // 2)
        for (m2, a2), (m3, a3) in itertools.product(orbit, repeat=2):
            m1 = _add(_sub(m, m2), m3)
            if _resonant(m1, m2, m3):
                put(i, m1, a2 * a3 * (-2))
        for (m1, a1), (m2, a2) in itertools.combinations(sorted(orbit), 2):
            m3 = _sub(_add(m1, m2), m)
            if _resonant(m1, m2, m3):
                put(i, m3, a1 * a2 * (-2))
        if form == "linearized":
            a = profile.value(m)
            entries[i][i] = entries[i][i] - a * a
    matrix = [[entries[i].get(j, AlgebraicNumber()) for j in range(n)] for i in range(n)]
    graph = nx.Graph()
    graph.add_nodes_from(range(n))
    graph.add_edges_from((i, j) for i in range(n) for j in range(n) if i < j and not (matrix[i][j].is_zero() and matrix[j][i].is_zero()))
    blocks = sorted(sorted(c) for c in nx.connected_components(graph))
    z = rescaling_factor(dim, max(profile.N0, 1))
    logger.debug(f"Assembled J: {n} modes, block sizes {[len(b) for b in blocks]}")
    return QJacobian(modes, matrix, z, blocks)


# ============ 正交性等价审计 ============

@dataclass
class OrthogonalityAudit:
    """符号选择条件与正交性等价的暴力验证结果"""
    triples: int = 0
    any_pattern: int = 0
    mismatches: List[Tuple[Vec, Vec, Vec]] = field(default_factory=list)
    pattern_mismatches: List[Tuple[Vec, Vec, Vec]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches and not self.pattern_mismatches

    def to_dict(self) -> dict:
        return {
            "triples": self.triples,
            "any_pattern": self.any_pattern,
            "mismatches": [list(map(list, t)) for t in self.mismatches[:20]],
            "pattern_mismatches": [list(map(list, t)) for t in self.pattern_mismatches[:20]],
            "passed": self.passed,
        }


def orthogonality_audit(dim: int, radius: int) -> OrthogonalityAudit:
    """m_i ∈ Z^D_1，|m_i|₁ ≤ radius，m = m₁+m₂+m₃：

    存在符号 s₁|m₁|² + s₂|m₂|² + s₃|m₃|² = ±|m|² 当且仅当某个轮换的 ⟨m_a+m_c, m_b+m_c⟩ = 0；
    其中 (+,+,−) 恰对应 ⟨m₁+m₃, m₂+m₃⟩ = 0。
    """
    pool = [m for m in l1_ball(dim, radius) if in_z1(m)]
    report = OrthogonalityAudit()
    patterns = list(itertools.product((1, -1), repeat=3))
    for m1, m2, m3 in itertools.product(pool, repeat=3):
        report.triples += 1
        m = _add(_add(m1, m2), m3)
        sq = (_sq(m1), _sq(m2), _sq(m3))
        target = _sq(m)
        holds = any(abs(sum(s * x for s, x in zip(signs, sq))) == target for signs in patterns)
        ortho = (
            _dot(_add(m1, m3), _add(m2, m3)) == 0
            or _dot(_add(m1, m2), _add(m3, m2)) == 0
            or _dot(_add(m2, m1), _add(m3, m1)) == 0
        )
        report.any_pattern += int(holds)
        if holds != ortho:
            report.mismatches.append((m1, m2, m3))
        if (sq[0] + sq[1] - sq[2] == target) != (_dot(_add(m1, m3), _add(m2, m3)) == 0):
            report.pattern_mismatches.append((m1, m2, m3))
    log = logger.info if report.passed else logger.warning
    log(f"{'✅' if report.passed else '⚠️'} Orthogonality audit D={dim} R={radius}: {report.triples} triples, {len(report.mismatches)} mismatches")
    return report


# ============ 单模振幅 ============

def single_mode_q0(family: Family, dim: int) -> AlgebraicNumber:
    """|q₀| = (4/3)^{D/2}（NLS）或 (4/3)^{(D+1)/2}（NLW）"""
    family = Family(family)
    if family == Family.NLS:
        return AlgebraicNumber.sqrt(Fraction(4, 3) ** dim)
    if family == Family.NLW:
        return AlgebraicNumber.sqrt(Fraction(4, 3) ** (dim + 1))
    raise BifurcationError("unsupported-family", f"No single-mode closed form for {family.value}")


def dirichlet_pattern(spec: EquationSpec) -> Dict[ModeVector, complex]:
    """∏ sin x_i 的 e^{it}（NLS）或 cos t（实场）傅里叶系数"""
    dim = spec.dim
    base = 1 / (2j) ** dim
    times = (1,) if spec.family == Family.NLS else (1, -1)
    weight = 1.0 if spec.family == Family.NLS else 0.5
    out: Dict[ModeVector, complex] = {}
    for signs in itertools.product((1, -1), repeat=dim):
        for n in times:
            out[ModeVector(n, signs)] = weight * base * int(np.prod(signs))
    return out


def projected_self_interaction(spec: EquationSpec) -> complex:
    """κ：单模模式代入首阶非线性后在 (1, 1,…,1) 上的投影系数"""
    pattern = dirichlet_pattern(spec)
    fld = FourierField.from_plus(pattern, radius=spec.dim + 1, real_field=spec.is_real_field, dirichlet=True)
    f = sparse_nonlinearity(spec, fld, eta=0.0)
    anchor = ModeVector(1, (1,) * spec.dim)
    return f.get((anchor, 1), 0j) / pattern[anchor]


def oracle_q0(spec: EquationSpec) -> float:
    """q₀ = (s/κ)^{1/N}，κ 由稀疏卷积求得"""
    kappa = projected_self_interaction(spec)
    slope = eigenvalue_slope(spec, ModeVector(1, (1,) * spec.dim))
    if abs(kappa.imag) > 1e-9 * max(abs(kappa), 1.0) or kappa.real * slope <= 0:
        raise BifurcationError("no-real-seed", f"self-interaction κ={kappa} admits no real amplitude", witness=kappa)
    return float((slope / kappa.real) ** (1.0 / spec.N))


def seed_field(spec: EquationSpec, profile: Optional[AmplitudeProfile] = None, radius: Optional[int] = None) -> FourierField:
    """q^{(0)}：全格点上的 FourierField

    非共振族为单模 Dirichlet 种子；共振 NLS 在 (|m|², m) 放置 A(m)；
    NLB 在 n = ±|m|² 放置 i^D/√3 · A(m) 及其共轭。

    Raises:
        BifurcationError: "no-real-seed" / "missing-profile" / "unsupported-boundary"
    """
    if spec.is_resonant:
        if profile is None:
            raise BifurcationError("missing-profile", "resonant seeds require an amplitude profile")
        values: Dict[ModeVector, complex] = {}
        if spec.family == Family.NLB:
            c = (1j ** spec.dim) / np.sqrt(3.0)
            for m, a in profile.orbit_values().items():
                v = c * float(a)
                values[ModeVector(_sq(m), m)] = v
                values[ModeVector(-_sq(m), tuple(-x for x in m))] = np.conj(v)
        else:
            for m, a in profile.orbit_values().items():
                values[ModeVector(_sq(m), m)] = float(a)
        size = max(nu.size for nu in values)
        return FourierField.from_plus(values, radius or size, real_field=spec.is_real_field, dirichlet=spec.boundary == Boundary.DIRICHLET)
    if spec.boundary != Boundary.DIRICHLET:
        raise BifurcationError("unsupported-boundary", "single-mode seeds require Dirichlet boundary conditions")
    q0 = oracle_q0(spec)
    pattern = {nu: q0 * c for nu, c in dirichlet_pattern(spec).items()}
    logger.info(f"🌱 Single-mode seed: q0={q0:.12g} ({spec.family.value}, D={spec.dim})")
    return FourierField.from_plus(pattern, radius or spec.dim + 1, real_field=spec.is_real_field, dirichlet=True)
