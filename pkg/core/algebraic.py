"""
代数数模块
Q[√p₁,…,√p_k] 上的精确算术、Galois 共轭、精确行列式、奇偶可逆性判定与分块求逆
"""

import itertools
import logging
from fractions import Fraction
from functools import lru_cache
from math import gcd
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
from sympy import factorint

from .errors import AlgebraicError

logger = logging.getLogger(__name__)

# 素数个数上限（基底维数 2^k）
PRIME_CAP = 8
# 精确行列式/求逆的维数上限
DIMENSION_CAP = 12

Rational = Union[int, Fraction]


@lru_cache(maxsize=4096)
def _factor(r: int) -> Tuple[Tuple[int, int], ...]:
    return tuple(sorted(factorint(r).items()))


def _primes_of(r: int) -> FrozenSet[int]:
    return frozenset(p for p, _ in _factor(r))


def _squarefree_split(n: int) -> Tuple[int, int]:
    """n = s² · t，t 无平方因子"""
    s, t = 1, 1
    for p, e in _factor(n):
        s *= p ** (e // 2)
        if e % 2:
            t *= p
    return s, t


class AlgebraicNumber:
    """Q[√p_i] 中的元素

    以无平方因子根号 r ↦ 有理系数 的稀疏映射表示；
    r=1 为有理部分。零元当且仅当所有系数为零。
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs: Optional[Dict[int, Rational]] = None):
        clean: Dict[int, Fraction] = {}
        for r, c in (coeffs or {}).items():
            c = Fraction(c)
            if c == 0:
                continue
            if r < 1:
                raise AlgebraicError("invalid-radicand", f"radicand must be positive, got {r}")
            s, t = _squarefree_split(r)
            if s != 1:
                raise AlgebraicError("invalid-radicand", f"radicand {r} is not squarefree")
            clean[r] = clean.get(r, Fraction(0)) + c
        self._c = {r: c for r, c in clean.items() if c != 0}
        primes = self.primes
        if len(primes) > PRIME_CAP:
            raise AlgebraicError("prime-cap", f"{len(primes)} primes exceed cap {PRIME_CAP}", witness=primes)

    # ---------- 构造 ----------

    @classmethod
    def rational(cls, q: Rational) -> "AlgebraicNumber":
        return cls({1: Fraction(q)})

    @classmethod
    def sqrt(cls, q: Rational) -> "AlgebraicNumber":
        """√q，q 为非负有理数"""
        q = Fraction(q)
        if q < 0:
            raise AlgebraicError("negative-radicand", f"sqrt of negative rational {q}", witness=q)
        if q == 0:
            return cls()
        s, t = _squarefree_split(q.numerator * q.denominator)
        return cls({t: Fraction(s, q.denominator)})

    @classmethod
    def coerce(cls, x: Union["AlgebraicNumber", Rational]) -> "AlgebraicNumber":
        return x if isinstance(x, AlgebraicNumber) else cls.rational(x)

    # ---------- 结构 ----------

    @property
    def terms(self) -> Dict[int, Fraction]:
        return dict(self._c)

    @property
    def primes(self) -> Tuple[int, ...]:
        out: set = set()
        for r in self._c:
            out |= _primes_of(r)
        return tuple(sorted(out))

    def coeffs_by_subset(self, primes: Optional[Sequence[int]] = None) -> Dict[FrozenSet[int], Fraction]:
        """按素数下标子集 I 给出 ∏_{i∈I}√p_i 的系数"""
        basis = list(primes) if primes is not None else list(self.primes)
        out = {}
        for r, c in self._c.items():
            ps = _primes_of(r)
            if not ps <= set(basis):
                raise AlgebraicError("promotion-failed", f"radicand {r} outside prime list {basis}")
            out[frozenset(basis.index(p) for p in ps)] = c
        return out

    def is_zero(self) -> bool:
        return not self._c

    def is_rational(self) -> bool:
        return all(r == 1 for r in self._c)

    def rational_part(self) -> Fraction:
        return self._c.get(1, Fraction(0))

    def has_integer_coefficients(self) -> bool:
        return all(c.denominator == 1 for c in self._c.values())

    # ---------- 运算 ----------

    def __add__(self, other):
        other = self.coerce(other)
        out = dict(self._c)
        for r, c in other._c.items():
            out[r] = out.get(r, Fraction(0)) + c
        return AlgebraicNumber(out)

    __radd__ = __add__

    def __neg__(self):
        return AlgebraicNumber({r: -c for r, c in self._c.items()})

    def __sub__(self, other):
        return self + (-self.coerce(other))

    def __rsub__(self, other):
        return self.coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, AlgebraicNumber):
            q = Fraction(other)
            return AlgebraicNumber({r: c * q for r, c in self._c.items()})
        out: Dict[int, Fraction] = {}
        for r1, c1 in self._c.items():
            for r2, c2 in other._c.items():
                g = gcd(r1, r2)
                r = (r1 // g) * (r2 // g)
                out[r] = out.get(r, Fraction(0)) + c1 * c2 * g
        return AlgebraicNumber(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, AlgebraicNumber):
            q = Fraction(other)
            if q == 0:
                raise AlgebraicError("singular", "division by zero")
            return self * (1 / q)
        return self * other.inverse()

    def __rtruediv__(self, other):
        return self.coerce(other) * self.inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        out = AlgebraicNumber.rational(1)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = AlgebraicNumber.rational(other)
        if not isinstance(other, AlgebraicNumber):
            return NotImplemented
        return self._c == other._c

    def __hash__(self):
        return hash(frozenset(self._c.items()))

    def inverse(self) -> "AlgebraicNumber":
        """逐个消去 √p：x = a + b√p ⇒ x⁻¹ = (a − b√p)/(a² − p b²)"""
        if self.is_zero():
            raise AlgebraicError("singular", "inverse of zero")
        primes = self.primes
        if not primes:
            return AlgebraicNumber.rational(1 / self.rational_part())
        p = primes[-1]
        conj = self.galois({p})
        norm = self * conj
        return conj * norm.inverse()

    # ---------- Galois ----------

    def galois(self, flipped: Iterable[int]) -> "AlgebraicNumber":
        """τ_I：翻转 I 中素数的平方根符号"""
        flip = set(flipped)
        return AlgebraicNumber({
            r: (-c if len(_primes_of(r) & flip) % 2 else c) for r, c in self._c.items()
        })

    def galois_orbit(self, primes: Optional[Sequence[int]] = None) -> List["AlgebraicNumber"]:
        """所有 2^k 个 τ_I 的像"""
        basis = list(primes) if primes is not None else list(self.primes)
        out = []
        for k in range(len(basis) + 1):
            for subset in itertools.combinations(basis, k):
                out.append(self.galois(subset))
        return out

    def norm(self) -> Fraction:
        """轨道乘积（有理数）"""
        prod = AlgebraicNumber.rational(1)
        for x in self.galois_orbit():
            prod = prod * x
        if not prod.is_rational():
            raise AlgebraicError("norm-not-rational", f"orbit product {prod} is not rational")
        return prod.rational_part()

    # ---------- 数值 ----------

    def __float__(self) -> float:
        return float(sum(float(c) * r ** 0.5 for r, c in self._c.items()))

    def evaluate(self, dps: int = 50) -> mpmath.mpf:
        """高精度求值"""
        with mpmath.workdps(dps):
            total = mpmath.mpf(0)
            for r, c in self._c.items():
                total += mpmath.mpf(c.numerator) / c.denominator * mpmath.sqrt(r)
            return +total

    def __repr__(self) -> str:
        if not self._c:
            return "0"
        parts = []
        for r in sorted(self._c):
            c = self._c[r]
            parts.append(f"{c}" if r == 1 else f"{c}√{r}")
        return " + ".join(parts)


Matrix = List[List[AlgebraicNumber]]


def to_matrix(rows: Sequence[Sequence[Union[AlgebraicNumber, Rational]]]) -> Matrix:
    return [[AlgebraicNumber.coerce(x) for x in row] for row in rows]


def identity(n: int) -> Matrix:
    return [[AlgebraicNumber.rational(1 if i == j else 0) for j in range(n)] for i in range(n)]


def matmul(A: Matrix, B: Matrix) -> Matrix:
    n, k, m = len(A), len(B), len(B[0]) if B else 0
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            acc = AlgebraicNumber()
            for t in range(k):
                if not A[i][t].is_zero() and not B[t][j].is_zero():
                    acc = acc + A[i][t] * B[t][j]
            row.append(acc)
        out.append(row)
    return out


def transpose(A: Matrix) -> Matrix:
    return [list(col) for col in zip(*A)]


def galois_matrix(A: Matrix, flipped: Iterable[int]) -> Matrix:
    flip = list(flipped)
    return [[x.galois(flip) for x in row] for row in A]


def _check_square(A: Matrix, cap: int) -> int:
    n = len(A)
    if any(len(row) != n for row in A):
        raise AlgebraicError("not-square", "matrix is not square")
    if n > cap:
        raise AlgebraicError("dimension-cap-exceeded", f"size {n} exceeds cap {cap}", witness=n)
    return n


def det_exact(A: Matrix, cap: int = DIMENSION_CAP) -> AlgebraicNumber:
    """精确行列式（域上高斯消元）

    Raises:
        AlgebraicError: "dimension-cap-exceeded"
    """
    n = _check_square(A, cap)
    M = [list(row) for row in A]
    det = AlgebraicNumber.rational(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if not M[r][col].is_zero()), None)
        if pivot is None:
            return AlgebraicNumber()
        if pivot != col:
            M[col], M[pivot] = M[pivot], M[col]
            det = -det
        inv = M[col][col].inverse()
        det = det * M[col][col]
        for r in range(col + 1, n):
            if M[r][col].is_zero():
                continue
            factor = M[r][col] * inv
            M[r] = [M[r][j] - factor * M[col][j] for j in range(n)]
    return det


def parity_invertible(A: Matrix, cap: int = DIMENSION_CAP) -> bool:
    """奇偶范式判定：对角为奇整数 + 2𝔞，非对角属于 2𝔞 ⇒ det = 奇数 + 2α ≠ 0

    Raises:
        AlgebraicError: "precondition-violated"
    """
    n = _check_square(A, cap)
    for i in range(n):
        for j in range(n):
            x = A[i][j]
            if not x.has_integer_coefficients():
                raise AlgebraicError("precondition-violated", f"entry ({i},{j}) has non-integer coefficients", witness=(i, j))
            for r, c in x.terms.items():
                odd_allowed = i == j and r == 1
                if odd_allowed and c.numerator % 2 == 0:
                    raise AlgebraicError("precondition-violated", f"diagonal entry ({i},{i}) is not odd", witness=(i, j))
                if not odd_allowed and c.numerator % 2 != 0:
                    raise AlgebraicError("precondition-violated", f"entry ({i},{j}) not in 2𝔞", witness=(i, j))
    det = det_exact(A, cap)
    if not det.has_integer_coefficients():
        return False
    terms = det.terms
    odd_unit = terms.get(1, Fraction(0)).numerator % 2 == 1
    even_rest = all(c.numerator % 2 == 0 for r, c in terms.items() if r != 1)
    return odd_unit and even_rest


def invert_block(A: Matrix, cap: int = DIMENSION_CAP) -> Matrix:
    """精确求逆（Gauss-Jordan），并验证 A·A⁻¹ = I

    Raises:
        AlgebraicError: "singular"
    """
    n = _check_square(A, cap)
    M = [list(row) + identity(n)[i] for i, row in enumerate(A)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if not M[r][col].is_zero()), None)
        if pivot is None:
            raise AlgebraicError("singular", "matrix is singular", witness=col)
        M[col], M[pivot] = M[pivot], M[col]
        inv = M[col][col].inverse()
        M[col] = [x * inv for x in M[col]]
        for r in range(n):
            if r != col and not M[r][col].is_zero():
                factor = M[r][col]
                M[r] = [M[r][j] - factor * M[col][j] for j in range(2 * n)]
    inverse = [row[n:] for row in M]
    if matmul(A, inverse) != identity(n):
        raise AlgebraicError("inverse-check-failed", "A·A⁻¹ ≠ I")
    return inverse


def numeric_consistent(x: AlgebraicNumber, dps: int = 50, threshold: float = 1e-30) -> bool:
    """精确判零与高精度数值一致"""
    value = abs(x.evaluate(dps))
    return (value < threshold) == x.is_zero()


def random_parity_block(
    n: int,
    rng: "np.random.Generator",
    radicands: Sequence[int] = (2, 3),
    max_coeff: int = 3,
) -> Matrix:
    """随机对称奇偶范式块：对角 = 奇数 + 2𝔞，非对角 ∈ 2𝔞"""

    def element(odd: bool) -> AlgebraicNumber:
        coeffs: Dict[int, Rational] = {}
        base = 2 * int(rng.integers(-max_coeff, max_coeff + 1))
        coeffs[1] = base + 1 if odd else base
        for r in radicands:
            coeffs[r] = 2 * int(rng.integers(-max_coeff, max_coeff + 1))
        return AlgebraicNumber(coeffs)

    A: Matrix = [[AlgebraicNumber() for _ in range(n)] for _ in range(n)]
    for i in range(n):
        A[i][i] = element(True)
        for j in range(i + 1, n):
            A[i][j] = A[j][i] = element(False)
    return A
