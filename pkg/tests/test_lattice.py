"""
格点与特征值分类测试
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from core.errors import LatticeError
from core.lattice import (
    EquationSpec,
    Family,
    ModeVector,
    SetLabel,
    canonicalize,
    classify,
    default_grid,
    eigenvalue,
    eigenvalue_at_zero,
    eigenvalues_array,
    enumerate_shell,
    expand_dirichlet,
    golden_mu,
    in_kernel,
    mu_from_continued_fraction,
    parse_mu,
    shell_array,
    validate_hypothesis1,
)
from tests.utils import nls_spec, print_success


def test_fundamental_mode_is_in_kernel():
    spec = nls_spec()
    nu = ModeVector.of(1, 1, 1)
    assert eigenvalue_at_zero(spec, nu) == Fraction(0)
    assert in_kernel(spec, nu)
    assert not in_kernel(spec, ModeVector.of(1, 1, 2))


def test_classify_q_o_r():
    spec = nls_spec()
    grid = default_grid(spec, 100)
    assert classify(spec, ModeVector.of(1, 1, 1), grid) == SetLabel.Q
    # δ₀ = 1/10，斜率 4
    assert classify(spec, ModeVector.of(4, 3, 0), grid) == SetLabel.O
    assert classify(spec, ModeVector.of(1, 1, 2), grid) == SetLabel.R
    print_success("Q/O/R classification")


def test_classify_boundary_ambiguous():
    spec = nls_spec(mu=Fraction(1, 2))
    with pytest.raises(LatticeError) as exc:
        classify(spec, ModeVector.of(0, 0, 0), default_grid(spec, 10))
    assert exc.value.code == "boundary-ambiguous"


def test_eigenvalue_outside_window():
    spec = nls_spec()
    with pytest.raises(LatticeError) as exc:
        eigenvalue(spec, ModeVector.of(1, 1, 1), 0.5)
    assert exc.value.code == "eps-out-of-window"


def test_eigenvalue_is_affine_and_vectorized():
    spec = nls_spec()
    modes = enumerate_shell(spec, 4)
    arr = shell_array(modes)
    grid = np.array([0.0, 0.004, 0.01])
    table = eigenvalues_array(spec, arr, grid)
    assert table.shape == (3, len(modes))
    for g, eps in enumerate(grid):
        for k, nu in enumerate(modes):
            assert table[g, k] == pytest.approx(float(eigenvalue(spec, nu, float(eps))), abs=1e-12)


def test_exact_eigenvalue_with_rational_eps():
    spec = nls_spec()
    d = eigenvalue(spec, ModeVector.of(4, 3, 0), Fraction(1, 200))
    assert d == Fraction(1, 10) + 4 * Fraction(1, 200)


def test_enumerate_shell_counts():
    periodic = EquationSpec(family=Family.NLS, dim=1, mu=Fraction(3, 10), boundary="periodic")
    assert len(enumerate_shell(periodic, 2)) == 13
    dirichlet = nls_spec(dim=1)
    assert len(enumerate_shell(dirichlet, 1)) == 4
    assert ModeVector.of(0, 0) not in enumerate_shell(dirichlet, 1, include_origin=False)


def test_canonicalize_and_expand():
    assert canonicalize(ModeVector.of(1, -2, 3)) == (ModeVector.of(1, 2, 3), -1)
    assert canonicalize(ModeVector.of(1, 0, 3))[1] == 0
    full = expand_dirichlet({ModeVector.of(1, 1, 1): 2.0})
    assert len(full) == 4
    assert full[ModeVector.of(1, -1, 1)] == -2.0
    assert full[ModeVector.of(1, -1, -1)] == 2.0


def test_parse_mu():
    assert parse_mu("3/10") == Fraction(3, 10)
    assert parse_mu(0.25) == Fraction(1, 4)
    assert parse_mu(0.1) == Fraction(1, 10)
    assert isinstance(parse_mu(math.pi), float)
    with pytest.raises(LatticeError):
        parse_mu("three tenths")


def test_non_resonance_holds_for_default_nls():
    spec = nls_spec()
    report = validate_hypothesis1(spec, 6, default_grid(spec, 64))
    assert report.passed
    assert report.c0 == 1
    assert report.gamma0 > 0
    assert report.to_dict()["passed"] is True


def test_non_resonance_detects_extra_kernel():
    # μ = 1：δ_(2,1,2)(0) = 0，不在基本模式轨道上
    spec = nls_spec(mu=Fraction(1))
    with pytest.raises(LatticeError) as exc:
        validate_hypothesis1(spec, 5, default_grid(spec, 16))
    assert exc.value.code == "hypothesis-violated"
    report = validate_hypothesis1(spec, 5, default_grid(spec, 16), strict=False)
    assert ModeVector.of(2, 1, 2) in report.violations


def test_completely_resonant_kernel():
    spec = nls_spec(resonant=True)
    assert in_kernel(spec, ModeVector.of(2, 1, 1))
    assert in_kernel(spec, ModeVector.of(5, 1, 2))
    assert not in_kernel(spec, ModeVector.of(1, 1, 1))


def test_continued_fraction_mu():
    assert mu_from_continued_fraction([1, 1, 1]) == Fraction(2, 3)
    assert float(golden_mu(40)) == pytest.approx(0.5 * (math.sqrt(5) - 1) / 2, abs=1e-12)
    with pytest.raises(LatticeError):
        mu_from_continued_fraction([1, 0])


def test_invalid_spec():
    with pytest.raises(LatticeError):
        EquationSpec(dim=0)
    with pytest.raises(LatticeError):
        EquationSpec(family="KdV")
