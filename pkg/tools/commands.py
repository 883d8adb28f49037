"""
子命令模块
classify | clusters | bifurcate | solve | trees | measure | verify-all
"""

import asyncio
import math
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, TYPE_CHECKING

import numpy as np

from core.algebraic import det_exact, galois_matrix, numeric_consistent, parity_invertible, random_parity_block
from core.bifurcation import (
    AmplitudeProfile,
    assemble_J,
    closed_form_constants,
    orthogonality_audit,
    oracle_q0,
    q_residual,
    residual_vanishes,
    search_supports,
    seed_field,
    single_mode_q0,
)
from core.clusters import GridPartitions, fit_separation_constants, partition_bfs, separation_report, stability_scan
from core.errors import AlgebraicError, BifurcationError, ComputationError, MultiscaleError
from core.fields import FourierField
from core.lattice import (
    Boundary,
    EquationSpec,
    Family,
    SetLabel,
    classify,
    cubic_nls_coefficients,
    cubic_real_coefficients,
    default_grid,
    enumerate_shell,
    expected_kernel,
    validate_hypothesis1,
)
from core.multiscale import PropagatorContext, ScaleFunctions, admissible, kappa_norm, norm_sandwich, select_gamma_bar
from core.series import CountertermProvider, ResonantVertexCounterterms, dual_path_gap, run_recursion
from core.solver import (
    counterterm_fixpoint,
    convergence_trend,
    decay_profile,
    empirical_radius,
    fit_kappa_decay,
    gevrey_fit,
    newton_oracle,
    residual,
    survival_mask,
    truncation_defect,
    window_fractions,
)
from core.trees import (
    TreeCounterterms,
    TreeEngine,
    TreeFamily,
    bound_check,
    counterterm_forms_gap,
    momentum_bound,
    reality_defects,
    recursion_equivalence,
    reduction_audit,
    resonance_audit,
    reversal_audit,
)
from .base import BaseCommand, CommandContext, CommandResult
from .registry import CommandRegistry
import logging

if TYPE_CHECKING:
    from config import RunConfig

logger = logging.getLogger(__name__)

# 验收容差
PROPAGATOR_TOL = 1e-10
PARTITION_OF_UNITY_TOL = 1e-12
TREE_TOL = 1e-9
ORACLE_TOL = 1e-12


@contextmanager
def timed(timings: Dict[str, float], key: str) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[key] = round(time.perf_counter() - start, 6)


def default_seed(config: "RunConfig", spec: EquationSpec, radius: int) -> FourierField:
    """q^{(0)}：非共振族取单模种子，共振族取按配置约定搜索到的第一个支撑

    Raises:
        BifurcationError: "no-profile"
    """
    profile: Optional[AmplitudeProfile] = None
    if spec.is_resonant:
        family = Family.NLB if spec.family == Family.NLB else Family.NLS
        found = search_supports(spec.dim, config.bifurcation.radius, config.bifurcation.max_size, family, tuple(config.bifurcation.conventions))
        if not found:
            raise BifurcationError(
                "no-profile",
                f"no support with vanishing residual under {config.bifurcation.conventions} (radius {config.bifurcation.radius})",
            )
        profile = found[0]
    return seed_field(spec, profile, radius)


def make_provider(config: "RunConfig") -> CountertermProvider:
    if config.solver.provider == "trees":
        return TreeCounterterms(config.K_tree, config.solver.max_trees)
    return ResonantVertexCounterterms()


# ============ classify ============

class ClassifyCommand(BaseCommand):
    """Q/O/R 分类、非共振条件验证与 γ̄ 选择"""

    @property
    def name(self) -> str:
        return "classify"

    @property
    def description(self) -> str:
        return "Classify lattice modes into Q/O/R per shell and validate the non-resonance hypothesis"

    async def execute(self, config: "RunConfig", context: CommandContext) -> CommandResult:
        spec = config.to_spec()
        radius = config.shell.radius
        grid = default_grid(spec, config.window.grid_points)
        timings: Dict[str, float] = {}

        def shell_row(r: int) -> Dict[str, Any]:
            counts = {"shell": r, "Q": 0, "O": 0, "R": 0, "kernel_mismatch": 0}
            for nu in enumerate_shell(spec, r, include_origin=False):
                if nu.size != r:
                    continue
                label = classify(spec, nu, grid)
                counts[label.value] += 1
                counts["kernel_mismatch"] += int((label == SetLabel.Q) != expected_kernel(spec, nu))
            return counts

        with timed(timings, "classify"):
            rows = await context.pool.map(shell_row, range(1, radius + 1))
        with timed(timings, "non_resonance"):
            report = await asyncio.to_thread(validate_hypothesis1, spec, radius, grid, None, 1e-2, False)
        gamma_bar: Optional[float] = None
        with timed(timings, "gamma_bar"):
            try:
                gamma_bar = select_gamma_bar(spec, radius)
            except MultiscaleError as e:
                logger.warning(f"⚠️ No admissible γ̄ on the default grid: {e}")

        totals = {k: sum(row[k] for row in rows) for k in ("Q", "O", "R")}
        logger.info(f"✅ Classified shells 1..{radius}: {totals}")
        return CommandResult(
            command=self.name,
            outputs={
                "shell_counts": rows,
                "totals": totals,
                "non_resonance": report.to_dict(),
                "gamma_bar_selected": gamma_bar,
            },
            checks={
                "non_resonance": report.passed,
                "q_set_is_kernel": all(row["kernel_mismatch"] == 0 for row in rows),
            },
            timings=timings,
        )


# ============ clusters ============

def partition_of_unity_gap(scales: ScaleFunctions, samples: int = 1000, top: int = 64) -> float:
    """max_x |Σ_{h≥−1} χ_h(x) − 1|"""
    xs = np.logspace(math.log10(scales.gamma) - 12, 1, samples)
    total = sum(np.asarray(scales.chi_h(h, xs), dtype=float) for h in range(-1, top + 1))
    return float(np.max(np.abs(total - 1.0)))


class ClustersCommand(BaseCommand):
    """聚类划分、分离常数拟合、稳定性扫描与多尺度分解校验"""

    samples = 20

    @property
    def name(self) -> str:
        return "clusters"

    @property
    def description(self) -> str:
        return "Build the near-resonant clusters, fit separation constants and check the multiscale decomposition"

    async def execute(self, config: "RunConfig", context: CommandContext) -> CommandResult:
        spec = config.to_spec()
        c = config.constants
        radius = config.shell.radius
        grid = default_grid(spec, config.window.grid_points)
        picks = np.unique(np.linspace(0, len(grid) - 1, self.samples).round().astype(int))
        eps_samples = [float(grid[i]) for i in picks]
        gp = GridPartitions(spec, radius, c.beta, c.C2, full=True)
        scales = ScaleFunctions(c.gamma, c.gamma_bar, c.Gamma)
        timings: Dict[str, float] = {}

        def sample(eps: float) -> Dict[str, Any]:
            part = gp.at(eps)
            report = separation_report(part, c.alpha, c.C1)
            row: Dict[str, Any] = {
                "eps": eps,
                "classes": len(part.classes),
                "largest": max((len(cls) for cls in part.classes), default=0),
                "bfs_match": part.as_sets() == partition_bfs(part.members(), c.beta, c.C2),
                "min_pair_margin": report.min_pair_margin,
                "separation_passed": report.passed,
                "admissible": True,
                "propagator_gap": 0.0,
                "sandwich": True,
            }
            check = admissible(spec, None, eps, c.gamma, c.tau, c.tau1, c.gamma_bar, radius, xi=c.xi, part=part)
            if not check:
                row["admissible"] = False
                return row
            ctx = PropagatorContext(spec, None, eps, scales, c.xi, part)
            for cls in part.classes:
                gap = np.abs(ctx.propagator_matrix(cls) - ctx.direct_inverse(cls))
                row["propagator_gap"] = max(row["propagator_gap"], float(np.max(gap, initial=0.0)))
                small = [nu for nu in cls if abs(ctx.delta(nu)) < c.gamma_bar]
                if small:
                    row["sandwich"] &= all(norm_sandwich(ctx.block(small[0]).matrix).values())
            return row

        with timed(timings, "samples"):
            rows = await context.pool.map(sample, eps_samples)
        with timed(timings, "fit"):
            fit = await asyncio.to_thread(fit_separation_constants, spec, radius, eps_samples, C2=c.C2)
        with timed(timings, "stability"):
            scan = await asyncio.to_thread(stability_scan, spec, radius, grid, c.beta, c.C2)
        unity = partition_of_unity_gap(scales)

        checked = [r for r in rows if r["admissible"]]
        return CommandResult(
            command=self.name,
            outputs={
                "samples": rows,
                "fit": None if fit is None else fit.to_dict(),
                "stability": scan.to_dict(),
                "partition_of_unity_gap": unity,
                "plot": {
                    "separation": {
                        "x": [r["eps"] for r in rows],
                        "y": [r["min_pair_margin"] for r in rows],
                        "xlabel": "eps",
                        "ylabel": "min_pair_margin",
                    },
                },
            },
            checks={
                "partition_matches_bfs": all(r["bfs_match"] for r in rows),
                "separation_fitted": fit is not None,
                "propagator_equals_inverse": all(r["propagator_gap"] <= PROPAGATOR_TOL for r in checked),
                "norm_sandwich": all(r["sandwich"] for r in checked),
                "partition_of_unity": unity <= PARTITION_OF_UNITY_TOL,
            },
            timings=timings,
        )


# ============ bifurcate ============

class BifurcateCommand(BaseCommand):
    """分岔方程：单模振幅、支撑搜索、精确残差与代数可逆性"""

    @property
    def name(self) -> str:
        return "bifurcate"

    @property
    def description(self) -> str:
        return "Solve the bifurcation equation exactly and certify invertibility of its linearization"

    async def execute(self, config: "RunConfig", context: CommandContext) -> CommandResult:
        spec = config.to_spec()
        bif = config.bifurcation
        dim = spec.dim
        timings: Dict[str, float] = {}

        amplitudes = []
        with timed(timings, "single_mode"):
            for family in (Family.NLS, Family.NLW):
                exact = single_mode_q0(family, dim)
                cubic = cubic_nls_coefficients(dim) if family == Family.NLS else cubic_real_coefficients(dim)
                cubic_spec = EquationSpec(family=family, dim=dim, mu=spec.mu, boundary=Boundary.DIRICHLET, N=2, coefficients=cubic, eps0=spec.eps0)
                value = float(exact.evaluate())
                oracle = oracle_q0(cubic_spec)
                amplitudes.append({"family": family.value, "exact": value, "oracle": oracle, "gap": abs(value - oracle)})

        constants = [
            {"convention": conv, "c1": closed_form_constants(dim, 2, conv)[0], "denominator": closed_form_constants(dim, 2, conv)[1]}
            for conv in bif.conventions
        ]

        search_family = Family.NLB if spec.family == Family.NLB else Family.NLS
        with timed(timings, "search"):
            profiles = await asyncio.to_thread(search_supports, dim, bif.radius, bif.max_size, search_family, tuple(bif.conventions))

        def certify(profile: AmplitudeProfile) -> Dict[str, Any]:
            row: Dict[str, Any] = {"profile": profile.to_dict(), "residual_zero": residual_vanishes(q_residual(profile))}
            try:
                J = assemble_J(profile)
                row["blocks"] = J.block_sizes()
                row["parity_invertible"] = J.parity_invertible()
                dets = [det_exact(J.rescaled_block(i), bif.determinant_cap) for i in range(len(J.blocks))]
                row["det_nonzero"] = all(not d.is_zero() for d in dets)
                row["numeric_consistent"] = all(numeric_consistent(d) for d in dets)
            except AlgebraicError as e:
                logger.warning(f"⚠️ Invertibility certificate failed for {profile.to_dict().get('support')}: {e}")
                row.update({"parity_invertible": False, "det_nonzero": False, "numeric_consistent": False, "error": e.to_dict()})
            return row

        with timed(timings, "certify"):
            certified = await context.pool.map(certify, profiles)
        with timed(timings, "orthogonality"):
            audit = await asyncio.to_thread(orthogonality_audit, dim, bif.audit_radius)

        def random_blocks() -> Dict[str, Any]:
            rng = np.random.default_rng(context.seed)
            invertible = galois_ok = 0
            for _ in range(bif.random_blocks):
                n = int(rng.integers(1, 9))
                A = random_parity_block(n, rng)
                det = det_exact(A, bif.determinant_cap)
                invertible += int(parity_invertible(A, bif.determinant_cap) and not det.is_zero())
                galois_ok += int(det_exact(galois_matrix(A, [2]), bif.determinant_cap) == det.galois([2]))
            return {"blocks": bif.random_blocks, "invertible": invertible, "galois_invariant": galois_ok}

        with timed(timings, "random_blocks"):
            randomized = await asyncio.to_thread(random_blocks)

        return CommandResult(
            command=self.name,
            outputs={
                "single_mode": amplitudes,
                "constants": constants,
                "search": {"conventions": list(bif.conventions), "found": len(profiles)},
                "supports": certified,
                "orthogonality": audit.to_dict(),
                "random_blocks": randomized,
            },
            checks={
                "single_mode_matches_oracle": all(a["gap"] <= ORACLE_TOL * max(1.0, a["exact"]) for a in amplitudes),
                "residuals_zero": all(r["residual_zero"] for r in certified),
                "parity_invertible": all(r["parity_invertible"] and r["det_nonzero"] for r in certified),
                "orthogonality_equivalence": audit.passed,
                "random_blocks_invertible": randomized["invertible"] == randomized["blocks"],
                "galois_invariance": randomized["galois_invariant"] == randomized["blocks"],
            },
            timings=timings,
        )


# ============ solve ============

def leading_order_deviation(newton, q0: FourierField, index) -> float:
    """|u − η q^{(0)}|_∞ / ε"""
    up, um = newton.physical().to_vectors(index)
    qp, qm = q0.to_vectors(index)
    dev = max(float(np.max(np.abs(up - newton.eta * qp), initial=0.0)), float(np.max(np.abs(um - newton.eta * qm), initial=0.0)))
    return dev / newton.eps


class SolveCommand(BaseCommand):
    """反项不动点、逐阶递推与 Newton 校验"""

    @property
    def name(self) -> str:
        return "solve"

    @property
    def description(self) -> str:
        return "Run the counterterm fixpoint and order-by-order recursion, and check it against a Newton solve"

    async def execute(self, config: "RunConfig", context: CommandContext) -> CommandResult:
        spec = config.to_spec()
        params = config.scheme()
        s = config.solver
        eps = config.window.eps
        radius = config.shell.Lambda
        timings: Dict[str, float] = {}

        q0 = default_seed(config, spec, radius)
        with timed(timings, "fixpoint"):
            fix = await asyncio.to_thread(
                counterterm_fixpoint, spec, eps, q0, radius, params, config.K_max, make_provider(config),
                s.kappa, s.rho, s.fixpoint_tol, s.fixpoint_max_iter,
            )
        if not fix:
            logger.warning(f"⚠️ ε={eps} is excluded, nothing to solve")
            return CommandResult(command=self.name, outputs={"excluded": fix.to_dict()}, timings=timings)

        state = fix.state
        with timed(timings, "recursion"):
            await asyncio.to_thread(run_recursion, state, config.K_max, s.path)
            gap = await asyncio.to_thread(dual_path_gap, state, config.K_max)
        with timed(timings, "newton"):
            newton = await asyncio.to_thread(newton_oracle, spec, eps, radius, s.newton_tol, q0, s.newton_max_iter, 40, state.index)
        seed_radius = max(sum(abs(x) for x in nu.m) for nu in q0.support())
        window_residual = residual(spec, newton.field, eps, seed_radius=seed_radius)
        defect = truncation_defect(spec, newton.field, eps)
        trend = convergence_trend(state, newton, list(range(config.K_max + 1)))
        fit = gevrey_fit(newton.physical())
        decay = decay_profile(newton.physical())

        def sweep(e: float) -> Dict[str, Any]:
            result = newton_oracle(spec, e, radius, s.newton_tol, q0, s.newton_max_iter)
            return {"eps": e, "converged": result.converged, "C": leading_order_deviation(result, q0, state.index)}

        with timed(timings, "sweep"):
            rows = await context.pool.map(sweep, list(s.eps_sweep))
            radius_report = await asyncio.to_thread(empirical_radius, spec, q0, list(s.eps_sweep), radius, params, config.K_max, s.newton_tol)
        cs = [r["C"] for r in rows if r["converged"]]
        M_decay = fit_kappa_decay(fix.M)
        scale = max(1.0, max((float(np.max(np.abs(a), initial=0.0)) for a, _ in state.orders), default=1.0))

        return CommandResult(
            command=self.name,
            outputs={
                "eps": eps,
                "fixpoint": {
                    "iterations": fix.iterations,
                    "diffs": fix.diffs,
                    "lipschitz": fix.lipschitz,
                    "kappa_norm": kappa_norm(fix.M.entries(), s.kappa, s.rho),
                    "decay": M_decay,
                },
                "dual_path_gap": gap,
                "newton": newton.to_dict(),
                "residual": window_residual,
                "truncation_defect": defect,
                "convergence_trend": trend,
                "gevrey": fit.to_dict(),
                "leading_order": rows,
                "empirical_radius": radius_report,
                "plot": {
                    "gevrey": {
                        "x": [math.sqrt(size) for size in decay],
                        "y": [math.log(v) for v in decay.values()],
                        "xlabel": "sqrt_size",
                        "ylabel": "log_abs_u",
                        "header": {"kappa": fit.kappa, "r2": fit.r2},
                    },
                },
            },
            checks={
                "fixpoint_contracts": fix.lipschitz < 0.5,
                "counterterm_self_adjoint": fix.M.is_self_adjoint() and fix.M.has_counterterm_symmetry(),
                "dual_path_agree": gap <= TREE_TOL * scale,
                "newton_converged": newton.converged,
                "gevrey_decay": fit.kappa > 0 and fit.r2 >= 0.9,
                "leading_order_stable": len(cs) == len(rows) and (not cs or max(cs) <= 2.0 * max(min(cs), 1e-300)),
            },
            timings=timings,
        )


# ============ trees ============

class TreesCommand(BaseCommand):
    """树展开：与递推等价、反项自伴与路径反转、共振双射"""

    max_population = 20000

    @property
    def name(self) -> str:
        return "trees"

    @property
    def description(self) -> str:
        return "Enumerate renormalized trees and audit them against the recursion and the counterterms"

    async def execute(self, config: "RunConfig", context: CommandContext) -> CommandResult:
        spec = config.to_spec()
        params = config.scheme()
        c = config.constants
        eps = config.window.eps
        radius = config.shell.tree_radius
        K_tree = config.K_tree
        N = spec.N
        K_check = min(N + 2, K_tree)
        timings: Dict[str, float] = {}

        q0 = default_seed(config, spec, radius)
        with timed(timings, "fixpoint"):
            fix = await asyncio.to_thread(
                counterterm_fixpoint, spec, eps, q0, radius, params, K_check, ResonantVertexCounterterms(),
                config.solver.kappa, config.solver.rho, config.solver.fixpoint_tol, config.solver.fixpoint_max_iter,
            )
        if not fix:
            logger.warning(f"⚠️ ε={eps} is excluded, no trees to enumerate")
            return CommandResult(command=self.name, outputs={"excluded": fix.to_dict()}, timings=timings)
        state = fix.state

        engine = TreeEngine(state, K_tree, config.solver.max_trees)
        with timed(timings, "equivalence"):
            gap_full = await asyncio.to_thread(recursion_equivalence, state, K_check, TreeFamily.THETA, engine=engine)
            gap_renormalized = await asyncio.to_thread(recursion_equivalence, state, K_check, TreeFamily.THETA_R, engine=engine)
        orders = list(range(N, K_check + 1))

        def audit(r: int) -> Dict[str, Any]:
            L = engine.counterterm_matrix(r)
            return {
                "order": r,
                "self_adjoint": L.is_self_adjoint(),
                "reversal": reversal_audit(engine, r),
                "reduction": reduction_audit(engine, r),
                "forms_gap": counterterm_forms_gap(engine, r),
            }

        with timed(timings, "counterterms"):
            audits = [await asyncio.to_thread(audit, r) for r in orders]
        with timed(timings, "resonances"):
            bijection = await asyncio.to_thread(resonance_audit, engine, K_check)

        def population() -> List[Any]:
            trees: List[Any] = []
            for k in range(1, K_check + 1):
                for nu in state.index.modes:
                    for sigma in (1, -1):
                        trees.extend(engine.theta(k, nu, sigma, renormalized=True))
                        if len(trees) >= self.max_population:
                            return trees[: self.max_population]
            return trees

        with timed(timings, "census"):
            trees = await asyncio.to_thread(population)
            bounds = bound_check(trees, c.beta, params.tau, c.C0 or None)
            B = momentum_bound(trees, c.alpha)
        defects = reality_defects(spec)

        return CommandResult(
            command=self.name,
            outputs={
                "eps": eps,
                "K_check": K_check,
                "recursion_gap": {"theta": gap_full, "theta_r": gap_renormalized},
                "counterterms": audits,
                "resonances": bijection,
                "population": len(trees),
                "scale_bound": bounds,
                "momentum_B": B,
                "reality_defects": [{"r": r, "s": s_, "m": list(m), "defect": d} for (r, s_, m), d in defects.items()],
            },
            checks={
                "theta_matches_recursion": gap_full <= TREE_TOL,
                "theta_r_matches_recursion": gap_renormalized <= TREE_TOL,
                "counterterm_self_adjoint": all(a["self_adjoint"] for a in audits),
                "reverse_path_preserves_value": all(a["reversal"]["ok"] for a in audits),
                "reduction_partners": all(a["reduction"]["ok"] for a in audits),
                "counterterm_forms_agree": all(a["forms_gap"] <= TREE_TOL for a in audits),
                "resonance_bijection": bool(bijection["ok"]),
                "scale_bound": bool(bounds["ok"]),
            },
            timings=timings,
        )


# ============ measure ============

class MeasureCommand(BaseCommand):
    """Cantor 集测度扫描（M=0 代理）"""

    @property
    def name(self) -> str:
        return "measure"

    @property
    def description(self) -> str:
        return "Scan the epsilon window and report surviving fractions over dyadic sub-windows"

    async def execute(self, config: "RunConfig", context: CommandContext) -> CommandResult:
        spec = config.to_spec()
        params = config.scheme()
        m = config.measure
        eps0 = config.window.eps0
        grid = np.linspace(0.0, eps0, m.gridsize)
        chunks = [chunk for chunk in np.array_split(grid, context.pool.jobs) if chunk.size]
        timings: Dict[str, float] = {}

        with timed(timings, "scan"):
            parts = await context.pool.map(lambda chunk: survival_mask(spec, chunk, params, m.radius), chunks)
        survived = np.concatenate([mask for mask, _ in parts])
        fractions = window_fractions(grid, survived, eps0, m.windows)
        monotone = all(b >= a - 1e-12 for a, b in zip(fractions, fractions[1:]))
        logger.info(f"✅ Measure scan: {m.gridsize} points, fractions {[round(f, 4) for f in fractions]}, monotone={monotone}")

        return CommandResult(
            command=self.name,
            outputs={
                "windows": [{"j": j, "upper": eps0 * 2.0 ** -j, "fraction": f} for j, f in enumerate(fractions)],
                "monotone": monotone,
                "partitions": max((distinct for _, distinct in parts), default=0),
                "gridsize": m.gridsize,
                "plot": {
                    "measure": {
                        "x": list(range(len(fractions))),
                        "y": fractions,
                        "xlabel": "window",
                        "ylabel": "fraction",
                        "header": {"monotone": monotone},
                    },
                },
            },
            checks={
                "monotone": monotone,
                "smallest_window_fraction": fractions[-1] >= m.min_fraction,
            },
            timings=timings,
        )


# ============ verify-all ============

class VerifyAllCommand(BaseCommand):
    """依次执行全部子命令并汇总检查"""

    pipeline = ("classify", "clusters", "bifurcate", "solve", "trees", "measure")

    @property
    def name(self) -> str:
        return "verify-all"

    @property
    def description(self) -> str:
        return "Run every pipeline and collect all acceptance checks"

    async def execute(self, config: "RunConfig", context: CommandContext) -> CommandResult:
        outputs: Dict[str, Any] = {}
        checks: Dict[str, bool] = {}
        timings: Dict[str, float] = {}
        plots: Dict[str, Any] = {}
        for name in self.pipeline:
            command = CommandRegistry.get(name)
            logger.info(f"🚀 verify-all: running {name}")
            start = time.perf_counter()
            try:
                result = await command.execute(config, context)
            except ComputationError as e:
                logger.error(f"❌ {name} failed: {e}")
                outputs[name] = {"error": e.to_dict()}
                checks[f"{name}.completed"] = False
                continue
            finally:
                timings[name] = round(time.perf_counter() - start, 6)
            sub = dict(result.outputs)
            for plot_name, series in sub.pop("plot", {}).items():
                plots[f"{name}-{plot_name}"] = series
            outputs[name] = sub
            checks.update({f"{name}.{k}": v for k, v in result.checks.items()})
        if plots:
            outputs["plot"] = plots
        passed = sum(checks.values())
        logger.info(f"🎉 verify-all finished: {passed}/{len(checks)} checks passed")
        return CommandResult(command=self.name, outputs=outputs, checks=checks, timings=timings)


def builtin_commands() -> List[BaseCommand]:
    return [
        ClassifyCommand(),
        ClustersCommand(),
        BifurcateCommand(),
        SolveCommand(),
        TreesCommand(),
        MeasureCommand(),
        VerifyAllCommand(),
    ]


def register_builtin_commands() -> None:
    """注册全部内置子命令"""
    CommandRegistry.register_multiple(builtin_commands())
