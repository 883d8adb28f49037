"""
多尺度分解测试
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from core.errors import MultiscaleError
from core.lattice import Boundary, ModeVector
from core.multiscale import (
    BlockMatrix,
    PropagatorContext,
    ScaleFunctions,
    ScaleIndex,
    admissible,
    derivative_bound_check,
    kappa_norm,
    norm_sandwich,
    lidskii_check,
    matrix_norms,
    row_sum_check,
    select_gamma_bar,
)
from tests.utils import nls_spec, print_success, random_self_adjoint, real_cube_spec

A = ModeVector.of(1, 1, 2)
B = ModeVector.of(1, 1, 3)
SMALL = ModeVector.of(3, 3)


def test_matrix_norms_diagonal():
    inf, tr, op = matrix_norms(np.diag([1.0, -3.0]))
    assert inf == pytest.approx(3.0)
    assert tr == pytest.approx(math.sqrt(5.0))
    assert op == pytest.approx(3.0)
    with pytest.raises(MultiscaleError) as exc:
        matrix_norms(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert exc.value.code == "not-self-adjoint"


def test_norm_inequalities_on_random_matrices():
    rng = np.random.default_rng(7)
    for n in (1, 3, 8):
        H = random_self_adjoint(n, rng)
        assert all(norm_sandwich(H).values())
        assert lidskii_check(H, 0.1 * random_self_adjoint(n, rng))
        assert row_sum_check(H)


def test_kappa_norm():
    entries = {(A, A): 1.0, (A, B): 0.5}
    assert kappa_norm(entries, 0.5, 0.5) == pytest.approx(1.0)
    assert kappa_norm(entries, 1.0, 1.0) == pytest.approx(0.5 * math.e)
    assert kappa_norm({}, 1.0, 1.0) == 0.0


def test_block_matrix_entries():
    M = BlockMatrix.zeros(0.0, [[A, B]])
    M.set_entry(A, 1, B, -1, 2.0)
    assert M.entry(A, 1, B, -1) == 2.0
    assert M.entry(B, -1, A, 1) == 0j
    assert M.restrict([A, B]).shape == (4, 4)
    doubled = M + M
    assert doubled.entry(A, 1, B, -1) == 4.0
    assert M.scaled(0.5).max_entry() == pytest.approx(1.0)

    split = BlockMatrix.zeros(0.0, [[A], [B]])
    with pytest.raises(MultiscaleError) as exc:
        split.set_entry(A, 1, B, 1, 1.0)
    assert exc.value.code == "cross-block-entry"


def test_counterterm_symmetry():
    M = BlockMatrix.zeros(0.0, [[A, B]])
    M.set_entry(A, 1, B, 1, 0.3)
    assert not M.has_counterterm_symmetry()
    M.set_entry(B, -1, A, -1, 0.3)
    assert M.has_counterterm_symmetry()


def test_scale_functions_partition_of_unity():
    sf = ScaleFunctions(0.01, 0.2)
    assert float(sf.chi(0.0)) == 1.0
    assert float(sf.chi(0.005)) == 1.0
    assert float(sf.chi(0.03)) == 0.0
    assert 0.0 < float(sf.chi(0.015)) < 1.0
    for x in (1e-6, 0.0028, 0.013, 0.05):
        total = sum(float(sf.chi_h(h, x)) for h in range(-1, 40))
        assert total == pytest.approx(1.0, abs=1e-12)
        assert float(sf.C(0, x)) == pytest.approx(sum(float(sf.chi_h(h, x)) for h in range(0, 40)), abs=1e-12)
        assert 1 <= len(sf.active_scales(x)) <= 2
    assert sf.active_scales(0.0028) == [1, 2]
    assert sf.active_scales(0.05) == [-1]
    assert sf.active_scales(0.0) == []


def test_scale_parameter_validation():
    with pytest.raises(MultiscaleError):
        ScaleFunctions(0.2, 0.1)
    with pytest.raises(MultiscaleError):
        ScaleFunctions(0.01, 0.3)
    with pytest.raises(MultiscaleError):
        ScaleIndex(0, 0)
    with pytest.raises(MultiscaleError):
        ScaleFunctions(0.01, 0.2).chi_h(-2, 0.1)


def test_propagator_sum_equals_block_inverse():
    ctx = PropagatorContext(real_cube_spec(), None, 0.0, ScaleFunctions(0.01, 0.2), xi=2.0, radius=6)
    # 𝒞̄ 为单点，A = diag(0.1, 0.1)，x = 1/(6²·10)
    assert ctx.small_divisor(SMALL) == pytest.approx(1 / 360)
    assert ctx.block_constancy(SMALL) == 0.0
    modes = [SMALL, ModeVector.of(3, -3), ModeVector.of(1, 2)]
    G = ctx.propagator_matrix(modes)
    assert np.max(np.abs(G - ctx.direct_inverse(modes))) < 1e-10
    assert G[0, 0] == pytest.approx(10.0)
    assert G[2, 2] == pytest.approx(1 / 3)
    print_success("multiscale sum reproduces the block inverse")


def test_propagator_errors():
    ctx = PropagatorContext(real_cube_spec(), None, 0.0, ScaleFunctions(0.01, 0.2), radius=6)
    with pytest.raises(MultiscaleError) as exc:
        ctx.block(ModeVector.of(1, 2))
    assert exc.value.code == "mode-not-small"
    with pytest.raises(MultiscaleError) as exc:
        ctx.propagator(SMALL, ModeVector.of(1, 2), 1, 1, ScaleIndex(-1, 0))
    assert exc.value.code == "label-inconsistent"


def test_admissibility():
    spec = real_cube_spec()
    assert admissible(spec, None, 0.0, 1e-3, 4.0, 3.0, 0.2, 6)
    margin = admissible(spec, None, 0.0, 1e-3, 4.0, 3.0, 0.1, 6)
    assert not margin
    assert margin.reason == "gamma-bar-margin"
    divisor = admissible(spec, None, 0.0, 0.19, 0.01, 3.0, 0.2, 6)
    assert divisor.reason == "small-divisor"
    assert divisor.witness in (SMALL, ModeVector.of(3, -3))
    with pytest.raises(MultiscaleError):
        admissible(spec, None, 0.0, 0.3, 4.0, 3.0, 0.2, 6)


def test_periodic_origin_block():
    spec = nls_spec(mu=Fraction(1, 10), boundary=Boundary.PERIODIC)
    origin = ModeVector.of(0, 0, 0)
    ctx = PropagatorContext(spec, None, 1e-3, ScaleFunctions(1e-3, 0.2), xi=2.0, radius=4)
    # δ₀ = μ，⟨0⟩ = 1
    assert ctx.small_divisor(origin) == pytest.approx(0.1)
    result = admissible(spec, None, 1e-3, 1e-3, 4.0, 3.0, 0.2, 4)
    assert result or result.witness != origin


def test_select_gamma_bar():
    assert select_gamma_bar(nls_spec(), 6) == pytest.approx(0.24)


def test_eigenvalue_derivative_bound():
    assert derivative_bound_check(real_cube_spec(), None, [SMALL], [0.0, 0.005])
