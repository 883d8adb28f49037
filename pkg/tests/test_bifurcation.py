"""
分岔方程测试
"""

from fractions import Fraction

import pytest

from core.algebraic import AlgebraicNumber
from core.bifurcation import (
    Inadmissible,
    assemble_J,
    candidate_profile,
    closed_form_constants,
    enumerate_quadruples,
    in_z1,
    orthogonality_audit,
    oracle_q0,
    q_residual,
    rescaling_factor,
    residual_vanishes,
    search_supports,
    seed_field,
    single_mode_q0,
    z1_plus_modes,
)
from core.errors import BifurcationError
from core.lattice import Boundary, EquationSpec, Family, cubic_nls_coefficients
from tests.utils import nls_spec, nlw_spec, print_success, real_cube_spec


def test_z1_membership():
    assert in_z1((1, 0))
    assert in_z1((3, -2))
    assert not in_z1((1, 1))
    assert not in_z1((2, 0))
    assert z1_plus_modes(2, 3) == [(1, 2)]
    assert z1_plus_modes(1, 5) == [(1,), (3,), (5,)]


def test_closed_form_constants():
    c1, denom = closed_form_constants(3, 2, "balanced")
    assert c1 == Fraction(16, 43)
    assert denom == 11
    assert closed_form_constants(3, 2, "displayed")[1] == -11
    assert rescaling_factor(1, 1) == 3
    assert rescaling_factor(2, 1) == -9
    with pytest.raises(BifurcationError):
        closed_form_constants(1, 1, "mirrored")


def test_displayed_single_mode_is_inadmissible():
    # 分母 2^{D+1} − 3^D 下单模 radicand 为负
    for support in ([(1,)], [(1, 2)]):
        result = candidate_profile(support)
        assert isinstance(result, Inadmissible)
        assert not result
        assert result.convention == "displayed"
        assert result.radicand < 0
    assert candidate_profile([(1,)]).to_dict()["radicand"] == "-1/3"


def test_balanced_single_mode_solves_q_equation():
    profile = candidate_profile([(1,)], convention="balanced")
    assert profile.amplitudes[(1,)] == AlgebraicNumber.sqrt(Fraction(1, 3))
    assert profile.value((-1,)) == -profile.amplitudes[(1,)]
    assert residual_vanishes(q_residual(profile))


def test_candidate_rejects_support_outside_z1():
    with pytest.raises(BifurcationError) as exc:
        candidate_profile([(2,)])
    assert exc.value.code == "support-not-in-Z1"


def test_residual_radius_guard():
    profile = candidate_profile([(1,)], convention="balanced")
    with pytest.raises(BifurcationError) as exc:
        q_residual(profile, radius=2)
    assert exc.value.code == "radius-too-small"


def test_quadruples_one_dimensional():
    quads = enumerate_quadruples((1,), 1)
    assert len(quads) == 5
    assert all(q.is_valid() for q in quads)
    assert quads == sorted(quads)
    with pytest.raises(BifurcationError):
        enumerate_quadruples((1,), 1, family=Family.NLW)


def test_support_search_finds_single_modes():
    assert search_supports(1, 3, max_size=1) == []
    found = search_supports(1, 3, max_size=1, conventions=("displayed", "balanced"))
    assert [p.support for p in found] == [((1,),), ((3,),)]
    assert all(p.convention == "balanced" for p in found)
    assert found[1].amplitudes[(3,)] == AlgebraicNumber.sqrt(3)


def test_jacobian_blocks_and_parity():
    J = assemble_J(candidate_profile([(1,)], convention="balanced"))
    assert J.modes == [(1,), (3,)]
    assert J.matrix[0][0] == Fraction(-5, 3)
    assert J.matrix[1][1] == Fraction(23, 3)
    assert J.block_sizes() == [1, 1]
    assert J.z == 3
    assert J.is_symmetric()
    assert J.parity_invertible()
    linear = assemble_J(candidate_profile([(1,)], convention="balanced"), form="linearized")
    assert linear.matrix[0][0] == -2
    with pytest.raises(BifurcationError):
        assemble_J(candidate_profile([(1,)], convention="balanced"), form="transposed")
    print_success("J blocks odd after rescaling")


@pytest.mark.parametrize("dim,radius", [(1, 5), (2, 3)])
def test_orthogonality_equivalence(dim, radius):
    audit = orthogonality_audit(dim, radius)
    assert audit.triples > 0
    assert audit.passed, audit.to_dict()


def test_single_mode_amplitudes():
    assert single_mode_q0(Family.NLS, 2) == Fraction(4, 3)
    assert single_mode_q0(Family.NLW, 1) == Fraction(4, 3)
    assert single_mode_q0(Family.NLS, 1) == AlgebraicNumber.sqrt(Fraction(4, 3))
    with pytest.raises(BifurcationError):
        single_mode_q0(Family.NLB, 1)


@pytest.mark.parametrize("spec,family,dim", [
    (nls_spec(dim=1), Family.NLS, 1),
    (nls_spec(dim=2), Family.NLS, 2),
    (nlw_spec(dim=1), Family.NLW, 1),
])
def test_oracle_matches_closed_form(spec, family, dim):
    assert oracle_q0(spec) == pytest.approx(float(single_mode_q0(family, dim)), rel=1e-12)


def test_oracle_for_real_cube():
    assert oracle_q0(real_cube_spec()) == pytest.approx(2 / 3, rel=1e-12)


def test_seed_field_preconditions():
    with pytest.raises(BifurcationError) as exc:
        seed_field(nls_spec(resonant=True))
    assert exc.value.code == "missing-profile"
    periodic = EquationSpec(
        family=Family.NLS, dim=1, boundary=Boundary.PERIODIC, coefficients=cubic_nls_coefficients(1),
    )
    with pytest.raises(BifurcationError) as exc:
        seed_field(periodic)
    assert exc.value.code == "unsupported-boundary"
