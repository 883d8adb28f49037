"""
傅里叶场与网格非线性测试
"""

import numpy as np
import pytest

from core.bifurcation import seed_field
from core.fields import (
    MINUS,
    PLUS,
    FieldOperator,
    FourierField,
    ModeIndex,
    series_mul,
    sparse_nonlinearity,
    sparse_product,
    support_closure,
)
from core.lattice import ModeVector, enumerate_shell
from tests.utils import nls_spec, print_success, real_cube_spec


def test_mode_index_ordering():
    index = ModeIndex([ModeVector.of(1, 3), ModeVector.of(-1, 1), ModeVector.of(1, 3)])
    assert len(index) == 2
    assert index.modes[0] == ModeVector.of(-1, 1)
    assert index.index(ModeVector.of(1, 3)) == 1
    assert ModeVector.of(0, 0) not in index
    assert index.radius == 4


def test_from_plus_respects_reality():
    fld = FourierField.from_plus({ModeVector.of(1, 1): 1 + 2j}, radius=2)
    assert fld.get(ModeVector.of(1, 1), MINUS) == 1 - 2j
    assert fld.is_symmetric()
    assert fld.sup_norm() == pytest.approx(abs(1 + 2j))
    assert fld.scaled(2.0).get(ModeVector.of(1, 1)) == 2 + 4j


def test_dirichlet_defect_detected():
    fld = FourierField.from_plus({ModeVector.of(1, 1): 1.0, ModeVector.of(1, -1): 1.0}, radius=2, dirichlet=True)
    assert fld.symmetry_defects()["dirichlet"] == pytest.approx(2.0)
    assert not fld.is_symmetric()
    seed = seed_field(nls_spec(dim=1))
    assert seed.is_symmetric()
    assert seed.outside_radius() == []


def test_sparse_product():
    out = sparse_product([{ModeVector.of(1, 1): 1.0}, {ModeVector.of(1, 1): 2.0, ModeVector.of(0, -1): 1.0}])
    assert out == {ModeVector.of(2, 2): 2.0, ModeVector.of(1, 0): 1.0}


def test_series_mul_truncates():
    a = [np.array(1.0), np.array(2.0)]
    b = [np.array(3.0), None]
    out = series_mul(a, b, 1)
    assert float(out[0]) == 3.0
    assert float(out[1]) == 6.0
    assert series_mul(a, a, 0)[0] == 1.0


@pytest.mark.parametrize("spec", [nls_spec(dim=1), real_cube_spec()])
def test_grid_nonlinearity_matches_sparse_convolution(spec):
    fld = seed_field(spec)
    index = ModeIndex(enumerate_shell(spec, 6, full=True))
    operator = FieldOperator(spec, index, 6)
    up, um = fld.to_vectors(index)
    fp, fm = operator.apply(up, um)
    reference = sparse_nonlinearity(spec, fld)
    for i, nu in enumerate(index.modes):
        assert fp[i] == pytest.approx(reference.get((nu, PLUS), 0j), abs=1e-12)
        assert fm[i] == pytest.approx(reference.get((nu, MINUS), 0j), abs=1e-12)
    print_success(f"FFT product agrees with sparse convolution ({spec.family.value}, {len(index)} modes)")


def test_jacobian_matches_central_difference():
    spec = real_cube_spec()
    index = ModeIndex(enumerate_shell(spec, 4, full=True))
    operator = FieldOperator(spec, index, 4)
    up, um = seed_field(spec).to_vectors(index)
    rng = np.random.default_rng(3)
    n = len(index)
    direction = 0.1 * (rng.normal(size=2 * n) + 1j * rng.normal(size=2 * n))
    B = operator.jacobian(up, um)
    h = 1e-6
    plus = operator.apply(up + h * direction[:n], um + h * direction[n:])
    minus = operator.apply(up - h * direction[:n], um - h * direction[n:])
    numeric = np.concatenate([plus[0] - minus[0], plus[1] - minus[1]]) / (2 * h)
    assert np.max(np.abs(B @ direction - numeric)) < 1e-6


def test_support_closure():
    spec = nls_spec(dim=1)
    assert support_closure(spec, [ModeVector.of(1, 1)], 5) == [ModeVector.of(1, 1)]
    closed = support_closure(spec, [ModeVector.of(1, 1), ModeVector.of(1, -1)], 5)
    assert ModeVector.of(1, 3) in closed
    assert ModeVector.of(1, -3) in closed
    assert all(nu.n == 1 and nu.m[0] % 2 == 1 for nu in closed)
