"""
级数递推模块
按 η 阶逐阶求解 U/V/Q 分量，附反项矩阵 L^{(k)} 与两条求解路径
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import pinv, solve

from .clusters import ClusterPartition, partition
from .errors import SolverError
from .fields import FieldOperator, FourierField, ModeIndex, support_closure
from .lattice import EquationSpec, ModeVector, SetLabel, classify, eigenvalue, eigenvalue_slope
from .multiscale import BlockMatrix, PropagatorContext, ScaleFunctions

logger = logging.getLogger(__name__)

Pair = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class SchemeParameters:
    """多尺度方案常数

    Attributes:
        gamma: γ（小除数下界常数）
        gamma_bar: γ̄（小/非小模式分界）
        tau: x_ν ≥ γ/p^τ 的指数
        tau1: ||δ|−γ̄| ≥ γ/|ν|^{τ₁} 的指数
        xi: p_ν^ξ 指数
        beta: 聚类链指数
        C2: 聚类链常数
        Gamma: |χ'| ≤ Γ/γ
    """
    gamma: float = 1e-3
    gamma_bar: float = 0.2
    tau: float = 4.0
    tau1: float = 3.0
    xi: float = 2.0
    beta: float = 0.25
    C2: float = 1.0
    Gamma: float = 3.0

    def scales(self) -> ScaleFunctions:
        return ScaleFunctions(self.gamma, self.gamma_bar, self.Gamma)


def mode_label(spec: EquationSpec, nu: ModeVector) -> SetLabel:
    """整个窗口 [0, ε₀] 上的 Q/O/R 分类"""
    return classify(spec, nu, [0.0, spec.eps0])


def _stack(idx: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([idx, idx + n])


@dataclass
class SeriesState:
    """逐阶状态：orders[k] = (u^{(k)+}, u^{(k)−})，按 index 排列"""
    spec: EquationSpec
    eps: float
    params: SchemeParameters
    index: ModeIndex
    labels: List[SetLabel]
    q0: FourierField
    operator: FieldOperator
    part: ClusterPartition
    context: PropagatorContext
    M: BlockMatrix
    J: np.ndarray
    J_pinv: np.ndarray
    counterterms: Dict[int, BlockMatrix] = field(default_factory=dict)
    orders: List[Pair] = field(default_factory=list)

    @property
    def eta(self) -> float:
        return self.eps ** (1.0 / self.spec.N)

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def q_idx(self) -> np.ndarray:
        return np.array([i for i, lab in enumerate(self.labels) if lab == SetLabel.Q], dtype=np.int64)

    @property
    def deltas(self) -> np.ndarray:
        return np.array([float(eigenvalue(self.spec, nu, self.eps)) for nu in self.index.modes])

    def small_blocks(self) -> List[Tuple[ModeVector, ...]]:
        """χ̄₁ 支撑上的块 𝒞̄（按聚类）"""
        return [modes for modes, _ in self.M.blocks.values()]

    def field(self, k: int) -> FourierField:
        if k >= len(self.orders):
            raise SolverError("order-not-ready", f"order {k} not computed", witness=k)
        up, um = self.orders[k]
        return FourierField.from_vectors(
            self.index, up, um, self.operator.radius,
            real_field=self.spec.is_real_field, dirichlet=self.q0.dirichlet,
        )

    def partial_sum(self, K: int) -> Pair:
        """Σ_{k≤K} η^k u^{(k)}"""
        up = np.zeros(self.n, dtype=complex)
        um = np.zeros(self.n, dtype=complex)
        for k, (a, b) in enumerate(self.orders[: K + 1]):
            up += self.eta ** k * a
            um += self.eta ** k * b
        return up, um

    def f_series(self, order: int) -> List[Pair]:
        return self.operator.series({k: v for k, v in enumerate(self.orders) if k <= order}, order)


def build_state(
    spec: EquationSpec,
    eps: float,
    q0: FourierField,
    radius: int,
    params: SchemeParameters,
    M: Optional[BlockMatrix] = None,
    index: Optional[ModeIndex] = None,
) -> SeriesState:
    """构建给定 ε、M̂ 下的递推状态"""
    if index is None:
        modes = set(support_closure(spec, q0.support(), radius)) | set(q0.support())
        index = ModeIndex(modes)
    labels = [mode_label(spec, nu) for nu in index.modes]
    operator = FieldOperator(spec, index, radius)
    o_modes = [nu for nu, lab in zip(index.modes, labels) if lab == SetLabel.O]
    part = partition(spec, eps, radius, beta=params.beta, C2=params.C2, full=True, modes=o_modes)
    if M is None:
        groups = [[nu for nu in cls if abs(float(eigenvalue(spec, nu, eps))) < params.gamma_bar] for cls in part.classes]
        M = BlockMatrix.zeros(eps, groups)
    context = PropagatorContext(spec, M, eps, params.scales(), params.xi, part)
    up, um = q0.to_vectors(index)
    n = len(index)
    q_idx = np.array([i for i, lab in enumerate(labels) if lab == SetLabel.Q], dtype=np.int64)
    if len(q_idx):
        B0 = operator.jacobian(up, um, eta=0.0)
        stacked = _stack(q_idx, n)
        slopes = np.array([eigenvalue_slope(spec, index.modes[i]) for i in q_idx], dtype=float)
        J = np.diag(np.concatenate([slopes, slopes])).astype(complex) - B0[np.ix_(stacked, stacked)]
        J_pinv = pinv(J, rtol=1e-10)
    else:
        J = np.zeros((0, 0), dtype=complex)
        J_pinv = J
    state = SeriesState(spec, eps, params, index, labels, q0, operator, part, context, M, J, J_pinv)
    state.orders.append((up, um))
    logger.debug(f"Series state: {n} modes, {len(q_idx)} kernel modes, {len(M.blocks)} small blocks at ε={eps:.3e}")
    return state


def convolve_nonlinearity(spec: EquationSpec, state: SeriesState, k: int) -> FourierField:
    """F^{(k)}：f 的 η^k 系数；第 k 阶缺省时按零处理

    Raises:
        SolverError: "order-not-ready"
    """
    if len(state.orders) < k:
        raise SolverError("order-not-ready", f"orders below {k} not populated", witness=k)
    fp, fm = state.f_series(k)[k]
    return FourierField.from_vectors(
        state.index, fp, fm, state.operator.radius, real_field=spec.is_real_field, dirichlet=state.q0.dirichlet,
    )


def _block_rhs(state: SeriesState, k: int, modes: Sequence[ModeVector], F: Pair) -> np.ndarray:
    N = state.spec.N
    bi = state.index.subset(modes)
    rhs = np.concatenate([F[0][bi], F[1][bi]])
    for r, L in state.counterterms.items():
        if N <= r <= k - N and k - r < len(state.orders):
            up, um = state.orders[k - r]
            rhs = rhs + L.restrict(modes) @ np.concatenate([up[bi], um[bi]])
    return rhs


def recursion_step(state: SeriesState, k: int, path: str = "direct") -> Pair:
    """求 u^{(k)} 并追加到 state.orders

    Args:
        path: "direct"（块稠密求解）或 "propagator"（多尺度传播子求和）

    Raises:
        SolverError: "order-not-ready" / "block-singular"
    """
    if path not in ("direct", "propagator"):
        raise SolverError("unknown-path", f"Unknown path '{path}'. Available: ['direct', 'propagator']")
    if k == 0:
        return state.orders[0]
    if len(state.orders) != k:
        raise SolverError("order-not-ready", f"expected {len(state.orders)} computed orders before order {k}", witness=k)
    n, N = state.n, state.spec.N
    up = np.zeros(n, dtype=complex)
    um = np.zeros(n, dtype=complex)
    if k < N:
        state.orders.append((up, um))
        return up, um

    F = state.f_series(k - N)[k - N]
    deltas = state.deltas
    q_mask = np.array([lab == SetLabel.Q for lab in state.labels])
    in_block = np.zeros(n, dtype=bool)
    for modes in state.small_blocks():
        bi = state.index.subset(modes)
        in_block[bi] = True
        rhs = _block_rhs(state, k, modes, F)
        if path == "direct":
            data = state.context.block(modes[0])
            if data.inverse is None:
                if np.max(np.abs(rhs)) > 1e-14:
                    raise SolverError("block-singular", f"singular block {modes} with nonzero right-hand side", witness=modes)
                x = np.zeros_like(rhs)
            else:
                x = solve(data.matrix, rhs)
        else:
            x = state.context.propagator_matrix(list(modes)) @ rhs
        d = len(modes)
        up[bi], um[bi] = x[:d], x[d:]
    plain = ~q_mask & ~in_block
    up[plain] = F[0][plain] / deltas[plain]
    um[plain] = F[1][plain] / deltas[plain]
    state.orders.append((up, um))

    q_idx = state.q_idx
    if len(q_idx):
        ft = state.f_series(k)[k]
        rhs = np.concatenate([ft[0][q_idx], ft[1][q_idx]])
        x = state.J_pinv @ rhs
        up[q_idx], um[q_idx] = x[: len(q_idx)], x[len(q_idx):]
    return up, um


def run_recursion(state: SeriesState, K: int, path: str = "direct") -> SeriesState:
    for k in range(len(state.orders), K + 1):
        recursion_step(state, k, path)
    return state


def dual_path_gap(state: SeriesState, K: int) -> float:
    """直接求解与传播子求和两条路径的最大差异"""
    other = SeriesState(
        state.spec, state.eps, state.params, state.index, state.labels, state.q0, state.operator,
        state.part, state.context, state.M, state.J, state.J_pinv, dict(state.counterterms), [state.orders[0]],
    )
    run_recursion(state, K, "direct")
    run_recursion(other, K, "propagator")
    gap = 0.0
    for (a, b), (c, d) in zip(state.orders, other.orders):
        gap = max(gap, float(np.max(np.abs(a - c), initial=0.0)), float(np.max(np.abs(b - d), initial=0.0)))
    return gap


# ============ 反项 ============

class CountertermProvider(ABC):
    """反项 L^{(r)} 的来源"""

    @property
    @abstractmethod
    def name(self) -> str:
        pass

    @abstractmethod
    def compute(self, state: SeriesState, max_order: int) -> Dict[int, BlockMatrix]:
        """返回 r → L^{(r)}（N ≤ r ≤ max_order）"""
        pass


def zero_like(M: BlockMatrix) -> BlockMatrix:
    return BlockMatrix(M.eps, {j: (m, np.zeros_like(a)) for j, (m, a) in M.blocks.items()})


class ResonantVertexCounterterms(CountertermProvider):
    """单节点共振的闭式反项：L^{(N+j)} = −χ(x_ν) · V^{(j)}

    V^{(j)} 为 ∂f/∂u 在 q^{(0)} 处 η^j 部分限制到同一块 𝒞̄ 上的元素。
    """

    @property
    def name(self) -> str:
        return "vertex"

    def compute(self, state: SeriesState, max_order: int) -> Dict[int, BlockMatrix]:
        N = state.spec.N
        up, um = state.orders[0]
        out: Dict[int, BlockMatrix] = {}
        shifts = sorted({c.degree - N - 1 for c in state.spec.coefficients})
        for j in range(0, max_order - N + 1):
            L = zero_like(state.M)
            if j in shifts and L.blocks:
                V = state.operator.jacobian(up, um, only_shift=j)
                for key, (modes, _) in L.blocks.items():
                    stacked = _stack(state.index.subset(modes), state.n)
                    x = state.context.small_divisor(modes[0])
                    weight = float(state.context.scales.C(0, x))
                    L.blocks[key] = (modes, -weight * V[np.ix_(stacked, stacked)])
            out[N + j] = L
        return out


def assemble_M(counterterms: Dict[int, BlockMatrix], eta: float, like: BlockMatrix) -> BlockMatrix:
    """M = Σ_r η^r L^{(r)}"""
    M = zero_like(like)
    for r, L in sorted(counterterms.items()):
        M = M + L.scaled(eta ** r)
    return M
