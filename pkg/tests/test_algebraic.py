"""
代数数与精确线性代数测试
"""

from fractions import Fraction

import numpy as np
import pytest

from core.algebraic import (
    AlgebraicNumber,
    det_exact,
    galois_matrix,
    identity,
    invert_block,
    matmul,
    numeric_consistent,
    parity_invertible,
    random_parity_block,
    to_matrix,
)
from core.errors import AlgebraicError
from tests.utils import print_success

SQRT2 = AlgebraicNumber.sqrt(2)
SQRT3 = AlgebraicNumber.sqrt(3)


def test_sqrt_normalizes_radicand():
    assert AlgebraicNumber.sqrt(8).terms == {2: Fraction(2)}
    assert AlgebraicNumber.sqrt(Fraction(1, 2)).terms == {2: Fraction(1, 2)}
    assert AlgebraicNumber.sqrt(9) == 3
    assert AlgebraicNumber.sqrt(0).is_zero()
    with pytest.raises(AlgebraicError):
        AlgebraicNumber.sqrt(-1)
    with pytest.raises(AlgebraicError) as exc:
        AlgebraicNumber({4: 1})
    assert exc.value.code == "invalid-radicand"


def test_field_arithmetic():
    assert SQRT2 * SQRT2 == 2
    assert (1 + SQRT2) * (1 - SQRT2) == -1
    assert SQRT2 * SQRT3 == AlgebraicNumber({6: 1})
    x = 1 + SQRT2 + SQRT3
    assert x * x.inverse() == 1
    assert (x / x) == 1
    assert float(x) == pytest.approx(1 + 2 ** 0.5 + 3 ** 0.5)
    with pytest.raises(AlgebraicError):
        AlgebraicNumber().inverse()


def test_galois_conjugation():
    assert (1 + SQRT2).galois([2]) == 1 - SQRT2
    six = SQRT2 * SQRT3
    assert six.galois([2]) == -six
    assert six.galois([2, 3]) == six
    assert len((SQRT2 + SQRT3).galois_orbit()) == 4
    assert (1 + SQRT2).norm() == -1


def test_prime_cap():
    big = 2 * 3 * 5 * 7 * 11 * 13 * 17 * 19 * 23
    with pytest.raises(AlgebraicError) as exc:
        AlgebraicNumber({big: 1})
    assert exc.value.code == "prime-cap"


def test_exact_determinant():
    A = to_matrix([[SQRT2, 1], [1, SQRT2]])
    assert det_exact(A) == 1
    assert det_exact(to_matrix([[1, SQRT2], [SQRT2, 2]])).is_zero()
    with pytest.raises(AlgebraicError) as exc:
        det_exact(A, cap=1)
    assert exc.value.code == "dimension-cap-exceeded"


def test_parity_invertibility():
    A = to_matrix([[1, 2 * SQRT2], [2 * SQRT2, 3]])
    assert det_exact(A) == -5
    assert parity_invertible(A)
    with pytest.raises(AlgebraicError) as exc:
        parity_invertible(to_matrix([[2]]))
    assert exc.value.code == "precondition-violated"
    with pytest.raises(AlgebraicError):
        parity_invertible(to_matrix([[1, SQRT2], [SQRT2, 1]]))


def test_invert_block():
    A = to_matrix([[1, 2 * SQRT2], [2 * SQRT2, 3]])
    inv = invert_block(A)
    assert matmul(A, inv) == identity(2)
    with pytest.raises(AlgebraicError) as exc:
        invert_block(to_matrix([[1, SQRT2], [SQRT2, 2]]))
    assert exc.value.code == "singular"


def test_random_parity_blocks_are_invertible():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        for _ in range(5):
            A = random_parity_block(n, rng)
            assert parity_invertible(A)
            assert parity_invertible(galois_matrix(A, [2]))
            assert not det_exact(A).is_zero()
    print_success("random parity blocks invertible under Galois flips")


def test_numeric_consistency():
    assert numeric_consistent(SQRT2 - SQRT2)
    assert numeric_consistent(1 + SQRT2)
    assert SQRT2.evaluate(30) ** 2 == pytest.approx(2)
