"""
树展开测试
"""

import json

import numpy as np
import pytest

from core.bifurcation import seed_field
from core.errors import TreeError
from core.fields import MINUS, PLUS
from core.lattice import ModeVector
from core.series import ResonantVertexCounterterms, SchemeParameters, build_state
from core.trees import (
    Line,
    ResonanceTree,
    TreeCounterterms,
    TreeEngine,
    TreeFamily,
    bound_check,
    counterterm_forms_gap,
    momentum_bound,
    reality_defects,
    recursion_equivalence,
    reversal_audit,
    scale_violations,
    signature,
    to_record,
)
from tests.utils import nls_spec, print_success, real_cube_spec

PARAMS = SchemeParameters(gamma=0.01, gamma_bar=0.2)
EPS = 1e-3
SMALL = ModeVector.of(3, 3)


def make_cube_state():
    spec = real_cube_spec()
    return build_state(spec, EPS, seed_field(spec), 6, PARAMS)


@pytest.fixture
def cube_state():
    return make_cube_state()


# 子树池构建较慢，整个模块共用一个引擎
@pytest.fixture(scope="module")
def engine():
    return TreeEngine(make_cube_state(), K_tree=4)


def test_tree_sum_matches_recursion(engine):
    gap = recursion_equivalence(engine.state, 4, engine=engine)
    assert gap < 1e-9
    print_success(f"Θ tree sum reproduces the recursion (gap {gap:.1e})")


@pytest.mark.parametrize("dim", [1, 2])
def test_cubic_nls_tree_sum_matches_recursion(dim):
    spec = nls_spec(dim=dim)
    state = build_state(spec, EPS, seed_field(spec), 8, PARAMS)
    K = spec.N + 2
    engine = TreeEngine(state, K_tree=K)
    assert recursion_equivalence(state, K, engine=engine) < 1e-9
    assert recursion_equivalence(state, K, TreeFamily.THETA_R, engine=engine) < 1e-9
    assert engine.size > 0
    print_success(f"cubic NLS D={dim}: tree sum matches the recursion up to order {K}")


def test_equivalence_rejects_foreign_engine(engine, cube_state):
    with pytest.raises(TreeError) as exc:
        recursion_equivalence(cube_state, 2, engine=engine)
    assert exc.value.code == "state-mismatch"


def test_tree_cap_is_configurable(cube_state):
    with pytest.raises(TreeError) as exc:
        recursion_equivalence(cube_state, 4, max_trees=10)
    assert exc.value.code == "tree-explosion"


def test_renormalized_trees_match_recursion_with_vertex_counterterms(cube_state):
    cube_state.counterterms = ResonantVertexCounterterms().compute(cube_state, 4)
    assert recursion_equivalence(cube_state, 4, TreeFamily.THETA_R) < 1e-9


def test_odd_orders_below_cap_are_empty(engine):
    for nu in engine.index.modes:
        for sigma in (PLUS, MINUS):
            assert engine.theta(1, nu, sigma) == []
            assert engine.theta(3, nu, sigma) == []


def test_renormal_flag_tracks_resonances(engine):
    trees = engine.theta(4, SMALL, PLUS)
    assert trees
    flagged = [t for t in trees if not t.renormal]
    assert flagged
    for tree in trees:
        assert tree.renormal == (not engine.find_resonances(tree))
    assert len(engine.theta(4, SMALL, PLUS, renormalized=True)) == len(trees) - len(flagged)


def test_tree_counterterms_match_vertex_formula(cube_state):
    vertex = ResonantVertexCounterterms().compute(cube_state, 2)[2]
    trees = TreeCounterterms().compute(cube_state, 2)
    assert sorted(trees) == [2]
    for key, (_, block) in trees[2].blocks.items():
        assert np.max(np.abs(block - vertex.blocks[key][1])) < 1e-12
    assert trees[2].max_entry() > 0


def test_counterterm_forms_agree(engine):
    assert counterterm_forms_gap(engine, 2) < 1e-12


def test_single_node_resonances(engine):
    family = engine.resonance_trees(2, SMALL, PLUS, (SMALL, PLUS))
    assert family
    assert all(isinstance(t, ResonanceTree) for t in family)
    assert all(t.h == -2 and t.exit == (SMALL, PLUS) for t in family)
    # (3,3) 与 (3,−3) 分属不同块
    assert engine.resonance_trees(2, SMALL, PLUS, (ModeVector.of(3, -3), PLUS)) == []
    assert engine.resonance_trees(3, SMALL, PLUS, (SMALL, PLUS)) == []


def test_path_reversal(engine):
    report = reversal_audit(engine, 2)
    assert report["trees"] > 0
    assert report["involution"]
    assert report["ok"], report
    assert all(v == 0 for v in reality_defects(engine.spec).values())


def test_conjugation_flips_values(engine):
    tree = engine.theta(2, ModeVector.of(1, 3), PLUS)[0]
    flipped = engine.conjugate(tree)
    assert abs(flipped.value - np.conj(tree.value)) < 1e-12
    assert signature(flipped) != signature(tree)


def test_scale_labels_and_bounds(engine):
    trees = engine.theta(4, SMALL, PLUS)
    for tree in trees:
        assert scale_violations(tree, engine.blocks) == []
    report = bound_check(trees, PARAMS.beta, PARAMS.tau)
    assert report["ok"]
    assert report["c"] == report["c_min"]
    assert momentum_bound(trees) > 0


def test_tree_record_is_json(engine):
    tree = engine.theta(2, SMALL, PLUS)[0]
    record = to_record(tree)
    assert record["family"] == "theta"
    assert json.loads(json.dumps(record))["order"] == 2


def test_engine_guards(engine):
    with pytest.raises(TreeError) as exc:
        engine.theta(5, SMALL, PLUS)
    assert exc.value.code == "order-cap"
    with pytest.raises(TreeError) as exc:
        engine.enumerate(2, SMALL, PLUS, family=TreeFamily.R)
    assert exc.value.code == "not-in-R"
    with pytest.raises(TreeError) as exc:
        engine.reverse_path(engine.theta(2, SMALL, PLUS)[0])
    assert exc.value.code == "not-in-R"
    with pytest.raises(TreeError) as exc:
        engine.line_factor(Line("r", (SMALL, PLUS), (SMALL, PLUS)))
    assert exc.value.code == "labels-inadmissible"
