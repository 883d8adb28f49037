"""
不动点、Newton、残差与测度扫描测试
"""

import math

import numpy as np
import pytest

from core.bifurcation import oracle_q0, seed_field
from core.errors import SolverError
from core.fields import FourierField
from core.lattice import ModeVector
from core.multiscale import BlockMatrix
from core.series import SchemeParameters, run_recursion
from core.solver import (
    Excluded,
    FixpointResult,
    convergence_trend,
    counterterm_fixpoint,
    decay_profile,
    fit_kappa_decay,
    gevrey_fit,
    measure_scan,
    newton_oracle,
    residual,
    survival_mask,
    truncation_defect,
    window_fractions,
)
from tests.utils import nls_spec, print_info, real_cube_spec

PARAMS = SchemeParameters(gamma=0.01, gamma_bar=0.2)
EPS = 1e-3


def test_fixpoint_converges_on_constant_weight():
    spec = real_cube_spec()
    result = counterterm_fixpoint(spec, EPS, seed_field(spec), 6, PARAMS, K_max=4)
    assert isinstance(result, FixpointResult)
    # χ(x) = 1 在整个迭代中不变，第二次更新即为零
    assert result.iterations == 2
    assert result.diffs[-1] < 1e-10
    assert result.M.is_self_adjoint()
    assert result.M.has_counterterm_symmetry()
    assert sorted(result.state.counterterms) == [2, 3, 4]
    assert "lipschitz" in result.to_dict()


def test_fixpoint_reports_excluded_eps():
    spec = real_cube_spec()
    params = SchemeParameters(gamma=0.01, gamma_bar=0.103)
    result = counterterm_fixpoint(spec, EPS, seed_field(spec), 6, params, K_max=4)
    assert isinstance(result, Excluded)
    assert not result
    assert result.reason == "gamma-bar-margin"
    assert result.to_dict()["excluded"] == EPS


def test_newton_converges_near_seed():
    spec = nls_spec(dim=1)
    q0 = seed_field(spec)
    result = newton_oracle(spec, EPS, 6, 1e-10, q0)
    assert result.converged
    assert result.status == "converged"
    assert result.residual < 1e-10
    assert residual(spec, result.field, EPS) < 1e-8
    # 物理解的首项为 η·q0
    anchor = ModeVector.of(1, 1)
    physical = result.physical().get(anchor)
    assert abs(physical) == pytest.approx(math.sqrt(EPS) * abs(q0.get(anchor)), rel=1e-2)
    print_info(f"Newton: {result.iterations} iterations, residual {result.residual:.2e}")


def test_newton_reports_divergence_without_raising():
    spec = nls_spec(dim=1)
    result = newton_oracle(spec, EPS, 6, 1e-15, seed_field(spec), max_iter=1)
    assert not result.converged
    assert result.status == "newton-diverged"


def test_series_approaches_newton_solution():
    spec = nls_spec(dim=1)
    q0 = seed_field(spec)
    fix = counterterm_fixpoint(spec, EPS, q0, 6, PARAMS, K_max=4)
    state = run_recursion(fix.state, 4)
    newton = newton_oracle(spec, EPS, 6, 1e-12, q0, index=state.index)
    trend = convergence_trend(state, newton, [0, 2])
    assert trend[1] < trend[0]


def test_residual_of_empty_field():
    assert residual(nls_spec(), FourierField(radius=4), EPS) == 0.0
    assert truncation_defect(nls_spec(), FourierField(radius=4), EPS) == 0.0


def test_residual_window_must_be_nonempty():
    """窗口 Λ − (N+1)·种子半径 为负时报错"""
    spec = nls_spec(dim=1)
    with pytest.raises(SolverError) as exc:
        residual(spec, seed_field(spec), EPS, seed_radius=3)
    assert exc.value.code == "empty-window"


def test_truncation_defect_decreases_with_radius():
    """Newton 解在窗口内残差极小，截断外残差随 Λ 单调下降"""
    spec = nls_spec(dim=1)
    q0 = seed_field(spec)
    defects = []
    for radius in (8, 12, 16):
        result = newton_oracle(spec, EPS, radius, 1e-12, q0)
        assert result.converged
        assert residual(spec, result.field, EPS) < 1e-10
        defects.append(truncation_defect(spec, result.field, EPS))
    print_info(f"truncation defects: {defects}")
    assert defects[0] > defects[1] >= defects[2]


def test_gevrey_fit_recovers_synthetic_decay():
    values = {ModeVector.of(k, 0): 2.0 * math.exp(-0.7 * math.sqrt(k)) for k in range(1, 10)}
    fld = FourierField.from_plus(values, radius=10)
    fit = gevrey_fit(fld)
    assert fit.kappa == pytest.approx(0.7)
    assert fit.K == pytest.approx(2.0)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.points == 9
    assert list(decay_profile(fld)) == list(range(1, 10))
    single = gevrey_fit(FourierField.from_plus({ModeVector.of(1, 0): 0.5}, radius=2))
    assert single.kappa == 0.0 and single.K == 0.5


def test_kappa_decay_of_empty_matrix():
    M = BlockMatrix.zeros(0.0, [[ModeVector.of(3, 3)]])
    assert fit_kappa_decay(M)["K2"] == 0.0


def test_window_fractions():
    grid = np.linspace(0.0, 1.0, 5)
    survived = np.array([True, False, True, True, False])
    assert window_fractions(grid, survived, 1.0, 2) == pytest.approx([0.6, 2 / 3])


def test_measure_scan_with_custom_evaluator():
    spec = nls_spec()
    table = measure_scan(spec, spec.eps0, 200, PARAMS, 4, evaluator=lambda e: e < 0.005)
    assert table.fractions[0] == pytest.approx(0.5)
    assert table.fractions[1:] == [1.0] * 6
    assert table.monotone
    assert len(table.to_dict()["windows"]) == 7
    with pytest.raises(SolverError):
        measure_scan(spec, spec.eps0, 1, PARAMS, 4)


def test_proxy_survival_on_real_cube():
    spec = real_cube_spec()
    grid = np.linspace(0.0, spec.eps0, 50)
    survived, distinct = survival_mask(spec, grid, PARAMS, 6)
    assert survived.shape == (50,)
    assert survived.all()
    assert distinct == 1


def test_oracle_amplitude_feeds_seed():
    spec = real_cube_spec()
    seed = seed_field(spec)
    # |q0 · 1/(2i)| = q0/2
    assert abs(seed.get(ModeVector.of(1, 1))) == pytest.approx(oracle_q0(spec) / 2)
