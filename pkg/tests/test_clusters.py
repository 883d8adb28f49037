"""
谱聚类测试
"""

from fractions import Fraction

import pytest

from core.clusters import (
    ClusterPartition,
    GridPartitions,
    ResonantSet,
    closure,
    fit_separation_constants,
    partition,
    partition_bfs,
    partition_modes,
    separation_report,
    stability_scan,
)
from core.errors import ClusterError
from core.lattice import Boundary, ModeVector, default_grid, eigenvalue
from tests.utils import nls_spec, print_success, real_cube_spec


A = ModeVector.of(1, 1, 2)
B = ModeVector.of(1, 1, 3)
FAR = ModeVector.of(5, 5, 5)


def test_chain_threshold_controls_merging():
    # |A-B| = 1，阈值 C2·(4+5)^β / 2
    separate = partition_modes([A, B, FAR], beta=0.25, C2=1.0)
    assert len(separate) == 3
    merged = partition_modes([A, B, FAR], beta=0.25, C2=2.0)
    assert (A, B) in merged
    assert (FAR,) in merged


def test_classes_ordered_by_min_size():
    classes = partition_modes([FAR, B, A], beta=0.25, C2=2.0)
    assert classes[0] == (A, B)
    assert classes[-1] == (FAR,)


def test_partition_matches_independent_bfs():
    spec = nls_spec()
    for eps in (0.0, 0.004, 0.01):
        part = partition(spec, eps, 8)
        assert part.as_sets() == partition_bfs(part.members(), part.beta, part.C2)
        for cls in part.classes:
            for nu in cls:
                assert abs(eigenvalue(spec, nu, eps)) < 0.5
    print_success("graph components agree with BFS closure")


def test_real_cube_single_small_mode():
    part = partition(real_cube_spec(), 0.0, 6)
    assert part.classes == [(ModeVector.of(3, 3),)]
    assert part.p == [6]
    assert part.class_of(ModeVector.of(3, 3)) == 0
    assert part.class_of(ModeVector.of(1, 1)) is None


def test_partition_rejects_bad_constants():
    with pytest.raises(ClusterError) as exc:
        partition(nls_spec(), 0.0, 4, beta=1.5)
    assert exc.value.code == "invalid-beta"
    with pytest.raises(ClusterError):
        partition(nls_spec(), 0.0, 4, C2=0.0)


def test_grid_partitions_cache():
    grids = GridPartitions(nls_spec(), 6, 0.25, 1.0)
    first = grids.at(0.0)
    second = grids.at(0.0)
    assert first.fingerprint() == second.fingerprint()
    assert grids.distinct == 1


def test_separation_report_passes_and_flags():
    ok = ClusterPartition(eps=0.0, radius=8, classes=[(A,), (B,)], beta=0.25, C2=1.0)
    report = separation_report(ok, alpha=0.5)
    assert report.passed
    assert report.min_pair_margin > 0

    wide = ClusterPartition(
        eps=0.0, radius=8, classes=[(ModeVector.of(1, 1, 1), ModeVector.of(5, 1, 1))], beta=0.25, C2=1.0,
    )
    report = separation_report(wide, alpha=0.5)
    assert ("max-size", (0,)) in report.violations
    with pytest.raises(ClusterError) as exc:
        separation_report(wide, alpha=0.5, strict=True)
    assert exc.value.code == "separation-violated"


def test_separation_requires_beta_below_alpha():
    part = ClusterPartition(eps=0.0, radius=8, classes=[], beta=0.25, C2=1.0)
    with pytest.raises(ClusterError) as exc:
        separation_report(part, alpha=0.2)
    assert exc.value.code == "invalid-alpha"


def test_fit_separation_constants():
    best = fit_separation_constants(real_cube_spec(), 6, [0.0, 0.005, 0.01])
    assert best is not None
    assert best.beta == 0.25
    assert best.alpha == 0.5
    assert best.C1_fit == pytest.approx(1.0)


def test_closure_of_small_mode():
    spec = real_cube_spec()
    nset = ResonantSet(modes=(ModeVector.of(3, 3),), eps=0.0)
    result = closure(spec, nset, 0.0, 0.2, 6, default_grid(spec, 20))
    assert result.closed == [ModeVector.of(3, 3)]
    assert result.closed_bar == [ModeVector.of(3, 3)]
    assert result.escaped == []
    with pytest.raises(ClusterError):
        closure(spec, nset, 0.0, 0.3, 6, default_grid(spec, 20))
    with pytest.raises(ClusterError) as exc:
        closure(spec, ResonantSet(modes=(ModeVector.of(1, 2),), eps=0.0), 0.0, 0.2, 6, [0.0])
    assert exc.value.code == "not-resonant"


def test_stability_scan_breakpoints_are_crossings():
    spec = nls_spec()
    grid = default_grid(spec, 200)
    scan = stability_scan(spec, 6, grid)
    assert scan.intervals[0][0] == 0.0
    assert scan.intervals[-1][1] == pytest.approx(spec.eps0)
    assert scan.unmatched_breakpoints == []
    assert scan.to_dict()["breakpoints"] == scan.breakpoints
    with pytest.raises(ClusterError):
        stability_scan(spec, 6, grid[::-1])


def test_empty_small_set():
    assert partition_modes([], beta=0.25, C2=1.0) == []
    part = partition(nls_spec(dim=2), 1e-3, 8)
    assert part.classes == []
    assert part.p == []
    assert separation_report(part).passed
    grids = GridPartitions(nls_spec(dim=2), 8, 0.25, 1.0)
    assert grids.at(0.0).classes == []


def test_periodic_origin_class_has_unit_weight():
    spec = nls_spec(dim=2, mu=Fraction(3, 10), boundary=Boundary.PERIODIC)
    origin = ModeVector.of(0, 0, 0)
    part = partition(spec, 1e-3, 4)
    j = part.class_of(origin)
    assert j is not None
    assert part.p[j] == 1
    report = separation_report(part)
    assert report.C1_fit > 0
    assert report.max_size_ratio >= 1.0
