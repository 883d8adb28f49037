"""
求解模块
反项不动点、截断系统 Newton 校验、残差与 Gevrey 拟合、Cantor 集测度扫描
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import lstsq

from .clusters import GridPartitions
from .errors import ComputationError, SolverError
from .fields import FieldOperator, FourierField, ModeIndex, support_closure
from .lattice import EquationSpec, ModeVector, SetLabel, eigenvalue, eigenvalue_slope, eigenvalues_array, shell_array
from .multiscale import BlockMatrix, admissible, kappa_norm
from .series import (
    CountertermProvider,
    ResonantVertexCounterterms,
    SchemeParameters,
    SeriesState,
    assemble_M,
    build_state,
    mode_label,
    run_recursion,
)

logger = logging.getLogger(__name__)


# ============ 反项不动点 ============

@dataclass
class Excluded:
    """ε 不在 Cantor 集近似内"""
    eps: float
    witness: Optional[ModeVector]
    reason: str

    def __bool__(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"excluded": self.eps, "witness": None if self.witness is None else self.witness.as_tuple(), "reason": self.reason}


@dataclass
class FixpointResult:
    """M(ε) 与对应状态"""
    M: BlockMatrix
    state: SeriesState
    iterations: int
    diffs: List[float] = field(default_factory=list)

    @property
    def lipschitz(self) -> float:
        """相邻差值之比的最大值"""
        ratios = [b / a for a, b in zip(self.diffs, self.diffs[1:]) if a > 0]
        return max(ratios, default=0.0)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "diffs": self.diffs,
            "lipschitz": self.lipschitz,
            "M": self.M.to_dict(),
        }


def counterterm_fixpoint(
    spec: EquationSpec,
    eps: float,
    q0: FourierField,
    radius: int,
    params: SchemeParameters,
    K_max: int,
    provider: Optional[CountertermProvider] = None,
    kappa: float = 0.5,
    rho: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> Union[FixpointResult, Excluded]:
    """迭代 M ← Σ_r η^r L^{(r)}(M) 直到 |ΔM|_κ < tol

    Raises:
        SolverError: "no-contraction"
    """
    provider = provider or ResonantVertexCounterterms()
    M: Optional[BlockMatrix] = None
    diffs: List[float] = []
    index: Optional[ModeIndex] = None
    for it in range(1, max_iter + 1):
        state = build_state(spec, eps, q0, radius, params, M=M, index=index)
        index = state.index
        check = admissible(
            spec, state.M, eps, params.gamma, params.tau, params.tau1, params.gamma_bar, radius,
            xi=params.xi, part=state.part,
        )
        if not check:
            logger.info(f"⚠️ ε={eps:.4e} excluded ({check.reason}) at {check.witness}")
            return Excluded(eps, check.witness, check.reason)
        counterterms = provider.compute(state, K_max)
        M_new = assemble_M(counterterms, state.eta, state.M)
        diff = kappa_norm((M_new + state.M.scaled(-1.0)).entries(), kappa, rho)
        diffs.append(diff)
        if diff < tol:
            final = build_state(spec, eps, q0, radius, params, M=M_new, index=index)
            final.counterterms = provider.compute(final, K_max)
            return FixpointResult(M_new, final, it, diffs)
        if len(diffs) >= 3 and diffs[-1] > 0.5 * diffs[-2]:
            raise SolverError("no-contraction", f"update ratio {diffs[-1] / diffs[-2]:.3f} > 1/2 at ε={eps}", witness=diffs)
        M = M_new
    raise SolverError("no-contraction", f"no convergence in {max_iter} iterations at ε={eps}", witness=diffs)


def solve_series(
    spec: EquationSpec,
    eps: float,
    q0: FourierField,
    radius: int,
    params: SchemeParameters,
    K_max: int,
    provider: Optional[CountertermProvider] = None,
    path: str = "direct",
) -> Union[SeriesState, Excluded]:
    """不动点 + 逐阶递推到 K_max"""
    result = counterterm_fixpoint(spec, eps, q0, radius, params, K_max, provider)
    if not result:
        return result
    return run_recursion(result.state, K_max, path)


# ============ Newton 校验 ============

@dataclass
class NewtonResult:
    """截断系统的直接解（重标度变量 v，物理解为 η·v）"""
    field: FourierField
    eps: float
    converged: bool
    iterations: int
    residual: float
    status: str = "converged"
    rejections: int = 0
    N: int = 1

    @property
    def eta(self) -> float:
        return self.eps ** (1.0 / self.N)

    def physical(self) -> FourierField:
        return self.field.scaled(self.eta)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "status": self.status,
            "rejections": self.rejections,
        }


class TruncatedSystem:
    """P 行 δu − εf，Q 行 s·u − f（重标度后的 Q 方程）"""

    def __init__(self, spec: EquationSpec, eps: float, index: ModeIndex, radius: int):
        self.spec = spec
        self.eps = eps
        self.eta = eps ** (1.0 / spec.N)
        self.index = index
        self.operator = FieldOperator(spec, index, radius)
        labels = [mode_label(spec, nu) for nu in index.modes]
        self.q_mask = np.array([lab == SetLabel.Q for lab in labels])
        deltas = np.array([float(eigenvalue(spec, nu, eps)) for nu in index.modes])
        slopes = np.array([float(eigenvalue_slope(spec, nu)) for nu in index.modes])
        self.diag = np.where(self.q_mask, slopes, deltas)
        self.weight = np.where(self.q_mask, 1.0, eps)

    def residual(self, x: np.ndarray) -> np.ndarray:
        n = len(self.index)
        fp, fm = self.operator.apply(x[:n], x[n:], self.eta)
        d = np.concatenate([self.diag, self.diag])
        w = np.concatenate([self.weight, self.weight])
        return d * x - w * np.concatenate([fp, fm])

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        n = len(self.index)
        B = self.operator.jacobian(x[:n], x[n:], self.eta)
        w = np.concatenate([self.weight, self.weight])
        return np.diag(np.concatenate([self.diag, self.diag])).astype(complex) - w[:, None] * B


def _symmetrize(x: np.ndarray) -> np.ndarray:
    n = len(x) // 2
    up = 0.5 * (x[:n] + np.conj(x[n:]))
    return np.concatenate([up, np.conj(up)])


def newton_oracle(
    spec: EquationSpec,
    eps: float,
    radius: int,
    tol: float,
    q0: FourierField,
    max_iter: int = 60,
    max_rejections: int = 40,
    index: Optional[ModeIndex] = None,
    initial: Optional[FourierField] = None,
) -> NewtonResult:
    """阻尼 Newton：最小范数最小二乘步 + Armijo 回溯（因子 1/2）

    不收敛时 status="newton-diverged"，不抛异常。
    """
    if index is None:
        index = ModeIndex(set(support_closure(spec, q0.support(), radius)) | set(q0.support()))
    system = TruncatedSystem(spec, eps, index, radius)
    start = initial if initial is not None else q0
    up, um = start.to_vectors(index)
    x = np.concatenate([up, um])
    g = system.residual(x)
    rejections = 0
    status = "converged"
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g), initial=0.0) < tol:
            break
        step = lstsq(system.jacobian(x), -g)[0]
        merit = 0.5 * float(np.vdot(g, g).real)
        t = 1.0
        local = 0
        while True:
            trial = _symmetrize(x + t * step)
            g_trial = system.residual(trial)
            if 0.5 * float(np.vdot(g_trial, g_trial).real) <= (1 - 1e-4 * t) * merit:
                break
            t *= 0.5
            local += 1
            rejections += 1
            if local > max_rejections:
                status = "newton-diverged"
                break
        if status != "converged":
            break
        x, g = trial, g_trial
    sup = float(np.max(np.abs(g), initial=0.0))
    converged = sup < tol
    if not converged and status == "converged":
        status = "newton-diverged"
    n = len(index)
    fld = FourierField.from_vectors(index, x[:n], x[n:], radius, real_field=spec.is_real_field, dirichlet=q0.dirichlet)
    if converged:
        logger.debug(f"Newton converged at ε={eps:.3e} in {it} iterations (residual {sup:.2e})")
    else:
        logger.warning(f"⚠️ Newton diverged at ε={eps:.3e}: residual {sup:.2e} after {it} iterations")
    return NewtonResult(fld, eps, converged, it, sup, status, rejections, spec.N)


# ============ 残差与 Gevrey ============

def truncation_margin(spec: EquationSpec, seed_radius: int = 1) -> int:
    """(N+1)·种子支撑半径：截断边界附近不计入残差的层数"""
    return (spec.N + 1) * max(seed_radius, 1)


def _mode_residuals(spec: EquationSpec, fld: FourierField, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """在 2Λ 扩展指标上逐模式计算 max_σ |δ_ν u^σ_ν − ε f^σ_ν|，返回 (|ν|, 残差)"""
    support = fld.support()
    outer = 2 * fld.radius
    ext = set(support_closure(spec, support, outer, max_iter=1)) | set(support)
    index = ModeIndex(nu for nu in ext if nu.size <= outer)
    operator = FieldOperator(spec, index, outer)
    up, um = fld.to_vectors(index)
    eta = eps ** (1.0 / spec.N)
    fp, fm = operator.apply(up, um, eta)
    deltas = np.array([float(eigenvalue(spec, nu, eps)) for nu in index.modes])
    res = np.maximum(np.abs(deltas * up - eps * fp), np.abs(deltas * um - eps * fm))
    sizes = np.array([nu.size for nu in index.modes], dtype=int)
    return sizes, res


def residual(spec: EquationSpec, fld: FourierField, eps: float, window: Optional[int] = None,
             seed_radius: int = 1) -> float:
    """sup_{|ν| ≤ window} |δ_ν u^σ_ν − ε f^σ_ν|

    window 默认 Λ − (N+1)·seed_radius；f 在 2Λ 扩展指标上计算，截断外的模式
    对窗口内目标的贡献也计入。

    Raises:
        SolverError: code "empty-window"，窗口为负
    """
    if window is None:
        window = fld.radius - truncation_margin(spec, seed_radius)
    if window < 0:
        raise SolverError(
            "empty-window",
            f"residual window Λ − margin = {window} < 0 (Λ={fld.radius}, seed radius {seed_radius})",
            witness=fld.radius,
        )
    if not fld.support():
        return 0.0
    sizes, res = _mode_residuals(spec, fld, eps)
    return float(np.max(res[sizes <= window], initial=0.0))


def truncation_defect(spec: EquationSpec, fld: FourierField, eps: float) -> float:
    """截断外 Λ < |ν| ≤ 2Λ 上的 sup 残差，随 Λ 增大而减小"""
    if not fld.support():
        return 0.0
    sizes, res = _mode_residuals(spec, fld, eps)
    return float(np.max(res[sizes > fld.radius], initial=0.0))


@dataclass
class GevreyFit:
    """log|u_ν| ≈ log K − κ|ν|^ρ"""
    K: float
    kappa: float
    r2: float
    rho: float
    points: int
    by_rho: Dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"K": self.K, "kappa": self.kappa, "r2": self.r2, "rho": self.rho, "points": self.points, "by_rho": self.by_rho}


def _linear_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = lstsq(A, y)
    pred = A @ np.array([slope, intercept])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def decay_profile(fld: FourierField, floor: float = 1e-300) -> Dict[int, float]:
    """|ν| → max |u_ν|"""
    best: Dict[int, float] = {}
    for (nu, _), v in fld.entries.items():
        if abs(v) > floor:
            best[nu.size] = max(best.get(nu.size, 0.0), abs(v))
    return dict(sorted(best.items()))


def gevrey_fit(fld: FourierField, rho: float = 0.5, rhos: Sequence[float] = (0.25, 0.5, 0.75, 1.0), floor: float = 1e-300) -> GevreyFit:
    """对每个 |ν| 取最大 |u_ν|，回归 log|u| 与 |ν|^ρ"""
    best = decay_profile(fld, floor)
    if len(best) < 2:
        top = max(best.values(), default=0.0)
        return GevreyFit(top, 0.0, 1.0, rho, len(best))
    sizes = np.array(sorted(best), dtype=float)
    logs = np.log(np.array([best[int(s)] for s in sizes]))
    by_rho = {}
    for r in rhos:
        by_rho[float(r)] = _linear_fit(sizes ** r, logs)[2]
    slope, intercept, r2 = _linear_fit(sizes ** rho, logs)
    return GevreyFit(math.exp(intercept), -slope, r2, rho, len(best), by_rho)


def fit_kappa_decay(M: BlockMatrix, rhos: Sequence[float] = (0.25, 0.5, 0.75, 1.0)) -> Dict[str, float]:
    """|M_{νν'}| ≤ K₂ e^{−κ|ν−ν'|^ρ} 的 (K₂, κ, ρ)"""
    pairs = [((a - b).size, abs(v)) for (a, b), v in M.entries().items() if abs(v) > 0]
    if not pairs:
        return {"K2": 0.0, "kappa": 0.0, "rho": 0.5, "r2": 1.0}
    dists = np.array([d for d, _ in pairs], dtype=float)
    logs = np.log(np.array([v for _, v in pairs]))
    if len(set(dists.tolist())) < 2:
        return {"K2": float(np.exp(logs.max())), "kappa": 0.0, "rho": 0.5, "r2": 1.0}
    fits = {r: _linear_fit(dists ** r, logs) for r in rhos}
    rho = max(fits, key=lambda r: fits[r][2])
    slope, intercept, r2 = fits[rho]
    # 上包络：平移截距使所有点在拟合线下方
    K2 = float(np.exp(np.max(logs - slope * dists ** rho)))
    return {"K2": K2, "kappa": -slope, "rho": float(rho), "r2": r2, "intercept": intercept}


# ============ 测度扫描 ============

@dataclass
class MeasureTable:
    """各二进窗口 [0, ε₀2^{−j}] 内的存活比例"""
    eps0: float
    gridsize: int
    fractions: List[float]
    survived: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=bool))
    grid: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    partitions: int = 0

    @property
    def monotone(self) -> bool:
        return all(b >= a - 1e-12 for a, b in zip(self.fractions, self.fractions[1:]))

    def to_dict(self) -> dict:
        return {
            "eps0": self.eps0,
            "gridsize": self.gridsize,
            "windows": [{"j": j, "upper": self.eps0 * 2.0 ** -j, "fraction": f} for j, f in enumerate(self.fractions)],
            "monotone": self.monotone,
            "partitions": self.partitions,
        }


def _proxy_admissible(
    spec: EquationSpec,
    grid: np.ndarray,
    gp: GridPartitions,
    params: SchemeParameters,
) -> np.ndarray:
    """M=0 代理下的可容许性（向量化）"""
    ok = np.ones(len(grid), dtype=bool)
    if not gp.modes:
        return ok
    arr = shell_array(gp.modes)
    sizes = np.abs(arr).sum(axis=1).astype(float)
    deltas = eigenvalues_array(spec, arr, grid)
    absd = np.abs(deltas)
    in_o = absd < 0.5
    margin_ok = np.abs(absd - params.gamma_bar) >= params.gamma / np.maximum(sizes, 1.0) ** params.tau1
    ok &= np.all(margin_ok | ~in_o, axis=1)
    small = absd < params.gamma_bar
    groups: Dict[bytes, List[int]] = {}
    for g, mask in enumerate(in_o):
        groups.setdefault(np.packbits(mask).tobytes(), []).append(g)
    pos = {nu: i for i, nu in enumerate(gp.modes)}
    for rows in groups.values():
        classes = gp.at(float(grid[rows[0]])).classes
        rows_arr = np.array(rows)
        for cls in classes:
            cols = np.array([pos[nu] for nu in cls])
            sm = small[np.ix_(rows_arr, cols)]
            count = sm.sum(axis=1)
            active = count > 0
            if not np.any(active):
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                inv2 = np.where(sm, 1.0 / deltas[np.ix_(rows_arr, cols)] ** 2, 0.0)
                mean = inv2.sum(axis=1) / np.maximum(count, 1)
                p = np.where(sm, sizes[cols][None, :], np.inf).min(axis=1)
                x = np.where(np.isfinite(mean), 1.0 / (p ** params.xi * np.sqrt(mean)), 0.0)
                need = params.gamma / p ** params.tau
            ok[rows_arr[active]] &= (x >= need)[active]
    return ok


def survival_mask(
    spec: EquationSpec,
    grid: np.ndarray,
    params: SchemeParameters,
    radius: int,
    evaluator: Optional[Callable[[float], bool]] = None,
) -> Tuple[np.ndarray, int]:
    """网格各点是否存活，以及用到的不同划分数"""
    grid = np.asarray(grid, dtype=float)
    gp = GridPartitions(spec, radius, params.beta, params.C2, full=True)
    if evaluator is None:
        survived = _proxy_admissible(spec, grid, gp, params)
    else:
        survived = np.array([bool(evaluator(float(e))) for e in grid], dtype=bool)
    return survived, gp.distinct


def window_fractions(grid: np.ndarray, survived: np.ndarray, eps0: float, windows: int = 7) -> List[float]:
    """[0, ε₀2^{−j}] 内的存活比例，j = 0..windows-1"""
    fractions = []
    for j in range(windows):
        upper = eps0 * 2.0 ** -j
        inside = grid <= upper * (1 + 1e-12)
        fractions.append(float(survived[inside].mean()) if inside.any() else 1.0)
    return fractions


def measure_scan(
    spec: EquationSpec,
    eps0: float,
    gridsize: int,
    params: SchemeParameters,
    radius: int,
    windows: int = 7,
    evaluator: Optional[Callable[[float], bool]] = None,
) -> MeasureTable:
    """ε 网格上的存活比例

    Args:
        evaluator: 自定义判定（如反项不动点）；缺省为 M=0 代理
    """
    if gridsize < 2:
        raise SolverError("invalid-grid", f"grid size must be >= 2, got {gridsize}")
    grid = np.linspace(0.0, eps0, gridsize)
    survived, distinct = survival_mask(spec, grid, params, radius, evaluator)
    fractions = window_fractions(grid, survived, eps0, windows)
    table = MeasureTable(eps0, gridsize, fractions, survived, grid, distinct)
    logger.info(f"✅ Measure scan: {gridsize} points, fractions {[round(f, 4) for f in fractions]}, monotone={table.monotone}")
    return table


# ============ 经验收敛半径 ============

def empirical_radius(
    spec: EquationSpec,
    q0: FourierField,
    eps_values: Sequence[float],
    radius: int,
    params: SchemeParameters,
    K_max: int,
    tol: float = 1e-10,
) -> Dict[str, object]:
    """Newton 收敛且不动点收缩的最大 ε"""
    rows = []
    best = 0.0
    for eps in sorted(eps_values):
        newton = newton_oracle(spec, eps, radius, tol, q0)
        try:
            fix = counterterm_fixpoint(spec, eps, q0, radius, params, K_max)
            contracts = bool(fix)
        except ComputationError as e:
            logger.debug(f"Fixpoint failed at ε={eps}: {e}")
            contracts = False
        rows.append({"eps": eps, "newton": newton.converged, "contracts": contracts})
        if newton.converged and contracts:
            best = max(best, eps)
    return {"radius": best, "rows": rows}


def convergence_trend(state: SeriesState, newton: NewtonResult, orders: Sequence[int]) -> List[float]:
    """|Newton 解 − Σ_{k≤K} η^k u^{(k)}|_∞，K 取 orders"""
    up_ref, um_ref = newton.field.to_vectors(state.index)
    out = []
    for K in orders:
        up, um = state.partial_sum(K)
        out.append(float(max(np.max(np.abs(up - up_ref), initial=0.0), np.max(np.abs(um - um_ref), initial=0.0))))
    return out
