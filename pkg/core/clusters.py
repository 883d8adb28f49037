"""
谱聚类模块
截断格点上的等价类 Δ_j(ε)、共振集及其闭包、分离性质检验与稳定区间扫描
"""

import hashlib
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

from .errors import ClusterError
from .lattice import (
    Boundary,
    EquationSpec,
    ModeVector,
    eigenvalue_at_zero,
    eigenvalue_slope,
    eigenvalues_array,
    enumerate_shell,
    in_kernel,
    shell_array,
)

logger = logging.getLogger(__name__)


@dataclass
class ClusterPartition:
    """聚类划分：classes 按 (p_j, 字典序最小元) 排序，p_j = min ⟨ν⟩"""
    eps: float
    radius: int
    classes: List[Tuple[ModeVector, ...]]
    beta: float
    C2: float
    _index: Dict[ModeVector, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._index = {nu: j for j, cls in enumerate(self.classes) for nu in cls}

    @property
    def p(self) -> List[int]:
        return [min(nu.weight for nu in cls) for cls in self.classes]

    def class_of(self, nu: ModeVector) -> Optional[int]:
        return self._index.get(nu)

    def members(self) -> List[ModeVector]:
        return list(self._index)

    def fingerprint(self) -> str:
        """排序后类内容的哈希"""
        text = ";".join(",".join(str(nu.as_tuple()) for nu in cls) for cls in self.classes)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def as_sets(self) -> Set[FrozenSet[ModeVector]]:
        return {frozenset(cls) for cls in self.classes}


@dataclass(frozen=True)
class ResonantSet:
    """共振集 𝒩 及其见证 ε"""
    modes: Tuple[ModeVector, ...]
    eps: float


@dataclass
class ClosureResult:
    """闭包：𝒞_𝒩 与 𝒞̄_𝒩(ε)；escaped 为 |δ|<γ̄ 但此刻不在 𝒩 所在类中的模式"""
    closed: List[ModeVector]
    closed_bar: List[ModeVector]
    escaped: List[ModeVector]
    class_index: Optional[int]


def chain_threshold(a: ModeVector, b: ModeVector, beta: float, C2: float) -> float:
    return 0.5 * C2 * (a.size + b.size) ** beta


def candidate_modes(spec: EquationSpec, radius: int, full: bool = False) -> List[ModeVector]:
    """可能进入 𝔒 的模式：非核、可取非零振幅"""
    shell = enumerate_shell(spec, radius, full=full, include_origin=True)
    if spec.boundary == Boundary.DIRICHLET:
        shell = [nu for nu in shell if all(x != 0 for x in nu.m)]
    return [nu for nu in shell if not in_kernel(spec, nu)]


def small_modes(spec: EquationSpec, modes: Sequence[ModeVector], eps: float, bound: float = 0.5) -> List[ModeVector]:
    if not modes:
        return []
    values = eigenvalues_array(spec, shell_array(modes), eps)
    return [nu for nu, d in zip(modes, values) if abs(d) < bound]


def _edges(modes: Sequence[ModeVector], beta: float, C2: float, chunk: int = 512):
    """链图的边（分块向量化）"""
    arr = shell_array(modes)
    sizes = np.abs(arr).sum(axis=1).astype(float)
    for start in range(0, len(modes), chunk):
        block = arr[start:start + chunk]
        d = np.abs(block[:, None, :] - arr[None, :, :]).sum(axis=2)
        thr = 0.5 * C2 * (sizes[start:start + chunk, None] + sizes[None, :]) ** beta
        rows, cols = np.nonzero(d <= thr)
        for i, j in zip(rows + start, cols):
            if i < j:
                yield int(i), int(j)


def _order_classes(classes: List[List[ModeVector]]) -> List[Tuple[ModeVector, ...]]:
    ordered = [tuple(sorted(cls)) for cls in classes]
    ordered.sort(key=lambda cls: (min(nu.size for nu in cls), cls[0]))
    return ordered


def partition_modes(modes: Sequence[ModeVector], beta: float, C2: float) -> List[Tuple[ModeVector, ...]]:
    """给定小特征值模式集合上的链图连通分量"""
    ordered = sorted(set(modes))
    if not ordered:
        return []
    graph = nx.Graph()
    graph.add_nodes_from(range(len(ordered)))
    graph.add_edges_from(_edges(ordered, beta, C2))
    classes = [[ordered[i] for i in comp] for comp in nx.connected_components(graph)]
    return _order_classes(classes)


def partition(
    spec: EquationSpec,
    eps: float,
    radius: int,
    beta: float = 0.25,
    C2: float = 1.0,
    full: bool = False,
    modes: Optional[Sequence[ModeVector]] = None,
) -> ClusterPartition:
    """构建 Δ_j(ε)

    Args:
        spec: 方程规格
        eps: ε
        radius: 壳层半径
        beta: 链条件指数 β ∈ (0,1)
        C2: 链条件常数
        full: 使用全格点（否则 Dirichlet 取基本域）
        modes: 显式候选模式（覆盖壳层枚举）

    Returns:
        ClusterPartition
    """
    if not 0 < beta < 1:
        raise ClusterError("invalid-beta", f"β must lie in (0,1), got {beta}")
    if C2 <= 0:
        raise ClusterError("invalid-C2", f"C2 must be positive, got {C2}")
    pool = list(modes) if modes is not None else candidate_modes(spec, radius, full=full)
    selected = small_modes(spec, pool, eps)
    classes = partition_modes(selected, beta, C2)
    return ClusterPartition(eps=eps, radius=radius, classes=classes, beta=beta, C2=C2)


def partition_bfs(modes: Sequence[ModeVector], beta: float, C2: float) -> Set[FrozenSet[ModeVector]]:
    """独立 BFS 传递闭包（校验用）"""
    remaining = set(modes)
    out: Set[FrozenSet[ModeVector]] = set()
    while remaining:
        start = remaining.pop()
        seen = {start}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for other in list(remaining):
                if (cur - other).size <= chain_threshold(cur, other, beta, C2):
                    remaining.discard(other)
                    seen.add(other)
                    queue.append(other)
        out.add(frozenset(seen))
    return out


class GridPartitions:
    """网格上划分的缓存：只有 𝔒(ε) 改变时才重建"""

    def __init__(self, spec: EquationSpec, radius: int, beta: float, C2: float, full: bool = False):
        self.spec = spec
        self.radius = radius
        self.beta = beta
        self.C2 = C2
        self.modes = candidate_modes(spec, radius, full=full)
        self._arr = shell_array(self.modes) if self.modes else np.zeros((0, spec.dim + 1), dtype=np.int64)
        self._cache: Dict[bytes, List[Tuple[ModeVector, ...]]] = {}

    def mask(self, eps: float) -> np.ndarray:
        if not self.modes:
            return np.zeros(0, dtype=bool)
        return np.abs(eigenvalues_array(self.spec, self._arr, eps)) < 0.5

    def at(self, eps: float) -> ClusterPartition:
        mask = self.mask(eps)
        key = np.packbits(mask).tobytes()
        if key not in self._cache:
            selected = [nu for nu, keep in zip(self.modes, mask) if keep]
            self._cache[key] = partition_modes(selected, self.beta, self.C2)
        return ClusterPartition(eps=eps, radius=self.radius, classes=self._cache[key], beta=self.beta, C2=self.C2)

    @property
    def distinct(self) -> int:
        return len(self._cache)


def closure(
    spec: EquationSpec,
    nset: ResonantSet,
    eps: float,
    gamma_bar: float,
    radius: int,
    eps_grid: Sequence[float],
    beta: float = 0.25,
    C2: float = 1.0,
    grid_partitions: Optional[GridPartitions] = None,
) -> ClosureResult:
    """共振集闭包 𝒞_𝒩 与 𝒞̄_𝒩(ε)

    Raises:
        ClusterError: "invalid-gamma-bar" 或 "not-resonant"
    """
    if not 0 < gamma_bar < 0.25:
        raise ClusterError("invalid-gamma-bar", f"γ̄ must satisfy 0 < γ̄ < 1/4, got {gamma_bar}")
    grids = grid_partitions or GridPartitions(spec, radius, beta, C2)
    witness = grids.at(nset.eps)
    idx = {witness.class_of(nu) for nu in nset.modes}
    if None in idx or len(idx) != 1:
        raise ClusterError("not-resonant", f"{nset.modes} not in one class at ε={nset.eps}", witness=nset)

    closed: Set[ModeVector] = set(nset.modes)
    for e in eps_grid:
        part = grids.at(float(e))
        j = {part.class_of(nu) for nu in nset.modes}
        if len(j) == 1 and None not in j:
            closed.update(part.classes[j.pop()])
    ordered = sorted(closed)

    current = grids.at(eps)
    j_now = {current.class_of(nu) for nu in nset.modes}
    class_now = j_now.pop() if len(j_now) == 1 and None not in j_now else None
    small = small_modes(spec, ordered, eps, bound=gamma_bar)
    bar = [nu for nu in small if class_now is not None and current.class_of(nu) == class_now]
    escaped = [nu for nu in small if nu not in bar]
    if escaped:
        logger.warning(f"⚠️ {len(escaped)} closure modes outside the class of {nset.modes} at ε={eps}")
    return ClosureResult(closed=ordered, closed_bar=bar, escaped=escaped, class_index=class_now)


# ============ 分离性质 ============

@dataclass
class SeparationReport:
    """分离性质报告"""
    alpha: float
    beta: float
    C2: float
    C1_fit: float
    classes: int
    min_pair_margin: float
    max_size_ratio: float
    violations: List[Tuple[str, Tuple[int, ...]]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "C2": self.C2,
            "C1_fit": self.C1_fit,
            "classes": self.classes,
            "min_pair_margin": self.min_pair_margin,
            "max_size_ratio": self.max_size_ratio,
            "violations": [[kind, list(w)] for kind, w in self.violations],
            "passed": self.passed,
        }


def _class_dist(a: Tuple[ModeVector, ...], b: Tuple[ModeVector, ...]) -> int:
    arr_a, arr_b = shell_array(a), shell_array(b)
    return int(np.abs(arr_a[:, None, :] - arr_b[None, :, :]).sum(axis=2).min())


def _diameter(cls: Tuple[ModeVector, ...]) -> int:
    arr = shell_array(cls)
    return int(np.abs(arr[:, None, :] - arr[None, :, :]).sum(axis=2).max())


def separation_report(
    part: ClusterPartition,
    alpha: float = 0.5,
    C1: float = 1.0,
    C1_cap: float = 1e3,
    strict: bool = False,
) -> SeparationReport:
    """检验类间距离、类直径、类内最大尺寸与类大小的分离不等式

    Raises:
        ClusterError: strict 时 "separation-violated"
    """
    if not part.beta < alpha:
        raise ClusterError("invalid-alpha", f"β={part.beta} must be below α={alpha}")
    p = part.p
    violations: List[Tuple[str, Tuple[int, ...]]] = []
    margin = float("inf")
    for j in range(len(part.classes)):
        for k in range(j + 1, len(part.classes)):
            need = 0.5 * part.C2 * (p[j] + p[k]) ** part.beta
            d = _class_dist(part.classes[j], part.classes[k])
            margin = min(margin, d - need)
            if d < need:
                violations.append(("distance", (j, k)))
    c1_fit = 1.0 if part.classes else 0.0
    size_ratio = 0.0
    for j, cls in enumerate(part.classes):
        diam_c = _diameter(cls) / (part.C2 * p[j] ** (alpha + part.beta))
        card_c = len(cls) / p[j] ** alpha
        c1_fit = max(c1_fit, diam_c, card_c)
        ratio = max(nu.weight for nu in cls) / p[j]
        size_ratio = max(size_ratio, ratio)
        if ratio > 2:
            violations.append(("max-size", (j,)))
    if c1_fit > C1_cap:
        violations.append(("C1-cap", ()))
    report = SeparationReport(
        alpha=alpha, beta=part.beta, C2=part.C2, C1_fit=c1_fit,
        classes=len(part.classes),
        min_pair_margin=margin if margin != float("inf") else 0.0,
        max_size_ratio=size_ratio, violations=violations,
    )
    if c1_fit > C1:
        logger.debug(f"C1={C1} too small, fitted C1={c1_fit:.3g}")
    if strict and violations:
        raise ClusterError("separation-violated", f"{violations[0][0]} fails on {violations[0][1]}", witness=violations[0])
    return report


def fit_separation_constants(
    spec: EquationSpec,
    radius: int,
    eps_samples: Sequence[float],
    alpha_grid: Sequence[float] = (0.5, 0.75, 0.9),
    beta_grid: Sequence[float] = (0.05, 0.1, 0.15, 0.2, 0.25),
    C2: float = 1.0,
    C1_cap: float = 1e3,
) -> Optional[SeparationReport]:
    """扫描 (α, β) 网格，返回所有样本 ε 上通过且 β 最大、C₁ 最小的报告"""
    best: Optional[SeparationReport] = None
    for beta in sorted(beta_grid, reverse=True):
        grids = GridPartitions(spec, radius, beta, C2)
        for alpha in alpha_grid:
            if beta >= alpha:
                continue
            reports = [separation_report(grids.at(float(e)), alpha, C1_cap=C1_cap) for e in eps_samples]
            if all(r.passed for r in reports):
                c1 = max(r.C1_fit for r in reports)
                candidate = SeparationReport(
                    alpha=alpha, beta=beta, C2=C2, C1_fit=c1,
                    classes=max(r.classes for r in reports),
                    min_pair_margin=min(r.min_pair_margin for r in reports),
                    max_size_ratio=max(r.max_size_ratio for r in reports),
                )
                if best is None or c1 < best.C1_fit:
                    best = candidate
        if best is not None:
            logger.info(f"✅ Separation constants: α={best.alpha}, β={best.beta}, C1={best.C1_fit:.3g}, C2={C2}")
            return best
    logger.warning("⚠️ No admissible separation constants on the scanned grid")
    return None


# ============ 稳定区间 ============

@dataclass
class StabilityScan:
    """划分指纹恒定的最大网格区间"""
    intervals: List[Tuple[float, float, str]]
    crossings: List[Tuple[ModeVector, float]]
    unmatched_breakpoints: List[float]

    @property
    def breakpoints(self) -> int:
        return max(len(self.intervals) - 1, 0)

    def to_dict(self) -> dict:
        return {
            "intervals": [list(iv) for iv in self.intervals],
            "breakpoints": self.breakpoints,
            "crossings": len(self.crossings),
            "unmatched_breakpoints": self.unmatched_breakpoints,
        }


def analytic_crossings(spec: EquationSpec, modes: Sequence[ModeVector], lo: float, hi: float) -> List[Tuple[ModeVector, float]]:
    """δ_ν(ε) = ±1/2 的解析交点"""
    out = []
    for nu in modes:
        slope = eigenvalue_slope(spec, nu)
        if slope == 0:
            continue
        d0 = float(eigenvalue_at_zero(spec, nu))
        for target in (0.5, -0.5):
            e = (target - d0) / slope
            if lo <= e <= hi:
                out.append((nu, e))
    return sorted(out, key=lambda t: t[1])


def stability_scan(
    spec: EquationSpec,
    radius: int,
    eps_grid: Sequence[float],
    beta: float = 0.25,
    C2: float = 1.0,
) -> StabilityScan:
    """扫描网格上划分指纹的稳定区间"""
    grid = np.asarray(eps_grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ClusterError("invalid-grid", "ε grid must be sorted")
    grids = GridPartitions(spec, radius, beta, C2)
    intervals: List[Tuple[float, float, str]] = []
    prev_fp = None
    start = float(grid[0])
    for i, e in enumerate(grid):
        fp = grids.at(float(e)).fingerprint()
        if prev_fp is not None and fp != prev_fp:
            intervals.append((start, float(grid[i - 1]), prev_fp))
            start = float(e)
        prev_fp = fp
    intervals.append((start, float(grid[-1]), prev_fp or ""))

    crossings = analytic_crossings(spec, grids.modes, float(grid[0]), float(grid[-1]))
    cross_eps = np.array([c[1] for c in crossings])
    unmatched = []
    for (_, end, _), (nxt, _, _) in zip(intervals[:-1], intervals[1:]):
        if not np.any((cross_eps >= end - 1e-15) & (cross_eps <= nxt + 1e-15)):
            unmatched.append(nxt)
    logger.info(
        f"📖 Stability scan: {len(intervals)} intervals, {len(crossings)} analytic crossings, "
        f"{grids.distinct} distinct partitions"
    )
    return StabilityScan(intervals=intervals, crossings=crossings, unmatched_breakpoints=unmatched)
