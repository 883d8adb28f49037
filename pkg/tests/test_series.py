"""
逐阶递推与反项测试
"""

import numpy as np
import pytest

from core.bifurcation import seed_field
from core.errors import SolverError
from core.lattice import ModeVector, SetLabel
from core.series import (
    ResonantVertexCounterterms,
    SchemeParameters,
    assemble_M,
    build_state,
    convolve_nonlinearity,
    dual_path_gap,
    mode_label,
    recursion_step,
    run_recursion,
)
from tests.utils import nls_spec, print_success, real_cube_spec

PARAMS = SchemeParameters(gamma=0.01, gamma_bar=0.2)
EPS = 1e-3


@pytest.fixture
def cube_state():
    spec = real_cube_spec()
    return build_state(spec, EPS, seed_field(spec), 6, PARAMS)


def test_state_layout(cube_state):
    state = cube_state
    kernel = [state.index.modes[i] for i in state.q_idx]
    assert kernel == [ModeVector.of(1, -1), ModeVector.of(1, 1)]
    assert state.J.shape == (4, 4)
    blocks = state.small_blocks()
    assert (ModeVector.of(3, 3),) in blocks
    assert (ModeVector.of(3, -3),) in blocks
    assert state.eta == pytest.approx(EPS ** 0.5)


def test_mode_labels():
    spec = real_cube_spec()
    assert mode_label(spec, ModeVector.of(1, 1)) == SetLabel.Q
    assert mode_label(spec, ModeVector.of(3, 3)) == SetLabel.O
    assert mode_label(spec, ModeVector.of(1, 3)) == SetLabel.R


def test_orders_below_N_vanish(cube_state):
    run_recursion(cube_state, 4)
    assert len(cube_state.orders) == 5
    up, um = cube_state.orders[1]
    assert not np.any(up) and not np.any(um)
    assert np.max(np.abs(cube_state.orders[2][0])) > 0


def test_orders_keep_reality(cube_state):
    run_recursion(cube_state, 4)
    for k in range(5):
        assert cube_state.field(k).symmetry_defects()["reality"] < 1e-9


def test_direct_and_propagator_paths_agree(cube_state):
    assert dual_path_gap(cube_state, 4) < 1e-10
    print_success("direct block solve and propagator sum agree")


def test_recursion_guards(cube_state):
    with pytest.raises(SolverError) as exc:
        recursion_step(cube_state, 3)
    assert exc.value.code == "order-not-ready"
    with pytest.raises(SolverError):
        recursion_step(cube_state, 1, path="shortcut")
    with pytest.raises(SolverError):
        convolve_nonlinearity(cube_state.spec, cube_state, 3)
    with pytest.raises(SolverError):
        cube_state.field(2)


def test_convolution_matches_series_coefficient(cube_state):
    F = convolve_nonlinearity(cube_state.spec, cube_state, 0)
    fp, _ = cube_state.f_series(0)[0]
    i = cube_state.index.index(ModeVector.of(3, 3))
    assert F.get(ModeVector.of(3, 3)) == pytest.approx(fp[i])


def test_vertex_counterterms(cube_state):
    counterterms = ResonantVertexCounterterms().compute(cube_state, 4)
    assert sorted(counterterms) == [2, 3, 4]
    assert counterterms[3].max_entry() == 0.0
    assert counterterms[4].max_entry() == 0.0
    L2 = counterterms[2]
    assert L2.max_entry() > 0
    assert L2.is_self_adjoint()
    assert L2.has_counterterm_symmetry()
    M = assemble_M(counterterms, cube_state.eta, cube_state.M)
    assert M.max_entry() == pytest.approx(cube_state.eta ** 2 * L2.max_entry())


def test_nonresonant_nls_has_no_small_blocks():
    spec = nls_spec(dim=1)
    state = build_state(spec, EPS, seed_field(spec), 6, PARAMS)
    assert state.small_blocks() == []
    assert all(nu.n == 1 for nu in state.index.modes)
    run_recursion(state, 4)
    assert len(state.orders) == 5


@pytest.mark.parametrize("dim,radius", [(1, 8), (2, 8), (2, 12)])
def test_nonresonant_nls_states_build(dim, radius):
    spec = nls_spec(dim=dim)
    state = build_state(spec, EPS, seed_field(spec), radius, PARAMS)
    assert state.part.classes == []
    assert state.small_blocks() == []
    assert len(state.q_idx) == 2 ** dim
    run_recursion(state, spec.N + 2)
    assert len(state.orders) == spec.N + 3


def test_kernel_rows_stay_in_jacobian_range(cube_state):
    state = run_recursion(cube_state, 4)
    J, J_pinv = state.J, state.J_pinv
    assert np.max(np.abs(J @ J_pinv @ J - J)) < 1e-10
    q = state.q_idx
    for k in range(state.spec.N, 5):
        up, um = state.orders[k]
        x = np.concatenate([up[q], um[q]])
        scale = max(1.0, float(np.max(np.abs(x))))
        assert np.max(np.abs(J_pinv @ (J @ x) - x)) <= 1e-9 * scale
