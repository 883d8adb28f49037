"""
树展开模块
带标签树的枚举与求值、共振识别、树反项 L^{(r)}、路径反转与各类审计
"""

import itertools
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import TreeError
from .fields import MINUS, PLUS
from .lattice import EquationSpec, ModeVector, SetLabel
from .multiscale import BlockMatrix, ScaleIndex
from .series import CountertermProvider, SeriesState, run_recursion, zero_like

logger = logging.getLogger(__name__)

Key = Tuple[ModeVector, int]
Coef = Tuple[int, int, Tuple[int, ...]]

# 端线不带尺度；无内部线的簇取此哨兵值
NO_SCALE = -2
MAX_TREES = 5_000_000

SIGNS = (PLUS, MINUS)


class TreeFamily(str, Enum):
    """树族"""
    THETA = "theta"
    THETA_R = "theta_r"
    R = "r"
    R_R = "r_r"
    S_R = "s_r"


@dataclass(frozen=True)
class Line:
    """树线：top 为父节点一侧 (ν_ℓ, σ_ℓ)，bottom 为所出节点一侧 (ν'_ℓ, σ_v)

    kind: "r"（非小 P 模式）、"p"（小模式块）、"q"（核模式）、"e"（端线）
    """
    kind: str
    top: Key
    bottom: Key
    h: int = -1
    i: int = 0


@dataclass(frozen=True, eq=False)
class Node:
    """树节点

    kind: "branch"、"counter"、"end"、"entry"
    order: k_v；branch 为 r+s−1（核出线再减 N），counter 为 r
    coef: branch 节点的 (r, s, m)
    """
    kind: str
    mode: ModeVector
    sign: int
    order: int
    coef: Tuple = ()
    children: Tuple["Branch", ...] = ()
    value: complex = field(default=0j, compare=False)


@dataclass(frozen=True, eq=False)
class Branch:
    """以一条线为根的子树；order 为子树中 k_v 之和"""
    line: Line
    node: Node
    order: int
    value: complex = field(default=0j, compare=False)
    uid: int = -1
    stubbed: bool = False
    renormal: bool = True


@dataclass(frozen=True, eq=False)
class ResonanceTree:
    """ℛ 族的树：根节点无出线，唯一入口端点 entry=(ν', σ')

    h 为内部线最大尺度（无内部线时为 NO_SCALE）；root_scale 仅 𝒮 族使用。
    """
    root: Node
    entry: Key
    order: int
    h: int
    value: complex
    renormal: bool = True
    root_scale: Optional[int] = None

    @property
    def exit(self) -> Key:
        return (self.root.mode, self.root.sign)


@dataclass(frozen=True, eq=False)
class Resonance:
    """树中的共振簇：出线 exit、唯一入线 entry、簇尺度 h"""
    exit: Branch
    entry: Branch
    h: int
    size: int

    @property
    def order(self) -> int:
        return self.exit.order - self.entry.order


Tree = Union[Branch, ResonanceTree]


# ============ 遍历与签名 ============

def _root_children(tree: Tree) -> Tuple[Branch, ...]:
    return tree.root.children if isinstance(tree, ResonanceTree) else (tree,)


def iter_branches(tree: Tree) -> Iterator[Branch]:
    """深度优先遍历所有线（含端线）"""
    stack = list(_root_children(tree))
    while stack:
        b = stack.pop()
        yield b
        stack.extend(b.node.children)


def iter_nodes(tree: Tree) -> Iterator[Node]:
    if isinstance(tree, ResonanceTree):
        yield tree.root
    for b in iter_branches(tree):
        yield b.node


def _key_sig(key: Key) -> Tuple:
    return (key[0].as_tuple(), key[1])


def node_signature(node: Node, stub: Optional[Branch] = None) -> Tuple:
    """拓扑与标签的规范签名（子节点排序，忽略线阶数）；stub 给定时该子树视为入口"""
    children = tuple(sorted(branch_signature(c, stub) for c in node.children))
    return (node.kind, node.mode.as_tuple(), node.sign, node.order, node.coef, children)


def branch_signature(b: Branch, stub: Optional[Branch] = None) -> Tuple:
    if stub is not None and b is stub:
        return ("e", _key_sig(b.line.top), _key_sig(b.line.top), -1, ("entry", b.line.top[0].as_tuple(), b.line.top[1], 0, (), ()))
    return (b.line.kind, _key_sig(b.line.top), _key_sig(b.line.bottom), b.line.h, node_signature(b.node, stub))


def signature(tree: Tree) -> Tuple:
    if isinstance(tree, ResonanceTree):
        return ("R", _key_sig(tree.entry), node_signature(tree.root))
    return ("T", branch_signature(tree))


def _multiplicity(groups: Iterable[Sequence[Tuple]]) -> int:
    """r!/∏c! · s!/∏c!（按签名计重复）"""
    total = 1
    for group in groups:
        counts = Counter(group)
        total *= math.factorial(len(group))
        for c in counts.values():
            total //= math.factorial(c)
    return total


def _uid_multiplicity(children: Sequence[Branch]) -> int:
    counts = Counter(c.uid for c in children)
    out = math.factorial(len(children))
    for c in counts.values():
        out //= math.factorial(c)
    return out


def internal_scale(node: Node) -> int:
    """node 下方非端线的最大尺度"""
    best = NO_SCALE
    stack = list(node.children)
    while stack:
        b = stack.pop()
        if b.line.kind != "e":
            best = max(best, b.line.h)
            stack.extend(b.node.children)
    return best


def to_record(tree: Tree) -> dict:
    """树的结构化记录"""

    def node_rec(node: Node) -> dict:
        return {
            "kind": node.kind,
            "mode": list(node.mode.as_tuple()),
            "sign": node.sign,
            "order": node.order,
            "coef": [node.coef[0], node.coef[1], list(node.coef[2])] if node.coef else [],
            "children": [branch_rec(c) for c in node.children],
        }

    def branch_rec(b: Branch) -> dict:
        return {
            "line": b.line.kind,
            "top": [list(b.line.top[0].as_tuple()), b.line.top[1]],
            "bottom": [list(b.line.bottom[0].as_tuple()), b.line.bottom[1]],
            "h": b.line.h,
            "i": b.line.i,
            "order": b.order,
            "node": node_rec(b.node),
        }

    if isinstance(tree, ResonanceTree):
        return {
            "family": "R",
            "entry": [list(tree.entry[0].as_tuple()), tree.entry[1]],
            "order": tree.order,
            "h": tree.h,
            "root_scale": tree.root_scale,
            "value": [tree.value.real, tree.value.imag],
            "root": node_rec(tree.root),
        }
    return {"family": "theta", "order": tree.order, "value": [tree.value.real, tree.value.imag], "tree": branch_rec(tree)}


# ============ 枚举引擎 ============

class _Family:
    """同一入口（或无入口）的子树池"""

    def __init__(self, stub: Optional[Key]):
        self.stub = stub
        self.pools: Dict[int, Dict[Key, List[Branch]]] = {}
        self.by_sign: Dict[int, List[Branch]] = {PLUS: [], MINUS: []}
        self.built = -1
        self.roots: Dict[int, Dict[Key, List[Node]]] = {}

    def get(self, order: int, key: Key) -> List[Branch]:
        return self.pools.get(order, {}).get(key, [])

    def commit(self, order: int, branches: List[Branch]) -> None:
        pool = self.pools.setdefault(order, {})
        for b in branches:
            pool.setdefault(b.line.top, []).append(b)
            self.by_sign[b.line.top[1]].append(b)


class TreeEngine:
    """树的自底向上枚举器

    第 k 阶的池由低阶池组合而成：P 非小模式出 r 线（1/δ），小模式块出 p 线
    （每个活跃尺度 h 一条，因子 χ_h(x)·A⁻¹），核模式出 q 线（J⁺）。
    反项节点取自 state.counterterms。树值在构造时缓存。

    Args:
        state: 递推状态（提供 u^{(0)}、块、传播子与 J⁺）
        K_tree: 最高阶数
        max_trees: 池中子树总数上限
    """

    def __init__(self, state: SeriesState, K_tree: Optional[int] = None, max_trees: int = MAX_TREES):
        self.state = state
        self.spec: EquationSpec = state.spec
        self.N = state.spec.N
        self.ctx = state.context
        self.index = state.index
        self.K_tree = K_tree if K_tree is not None else self.N + 4
        self.max_trees = max_trees
        self.labels = dict(zip(state.index.modes, state.labels))
        self.blocks: Dict[ModeVector, Tuple[ModeVector, ...]] = {
            nu: tuple(modes) for modes in state.small_blocks() for nu in modes
        }
        self.q_modes = [state.index.modes[i] for i in state.q_idx]
        self.q_pos = {nu: i for i, nu in enumerate(self.q_modes)}
        up, um = state.orders[0]
        self.u0: Dict[Key, complex] = {}
        for i, nu in enumerate(state.index.modes):
            for sigma, vec in ((PLUS, up), (MINUS, um)):
                if vec[i] != 0:
                    self.u0[(nu, sigma)] = complex(vec[i])
        self.coefs: Dict[Coef, complex] = {}
        for c in self.spec.coefficients:
            key = (c.r, c.s, tuple(c.m))
            self.coefs[key] = self.coefs.get(key, 0j) + complex(c.value)
        self.zero = ModeVector(0, (0,) * self.spec.dim)
        self._uid = itertools.count()
        self._count = 0
        self._plain = _Family(None)
        self._stubs: Dict[Key, _Family] = {}
        self._seed(self._plain)

    @property
    def size(self) -> int:
        """已构建的子树总数"""
        return self._count

    # ---------- 因子 ----------

    def coefficient(self, coef: Coef, sigma: int) -> complex:
        a = self.coefs.get(coef, 0j)
        return a if sigma == PLUS else complex(np.conj(a))

    def q_entry(self, top: Key, bottom: Key) -> complex:
        n = len(self.q_modes)
        i = self.q_pos[top[0]] + (0 if top[1] == PLUS else n)
        j = self.q_pos[bottom[0]] + (0 if bottom[1] == PLUS else n)
        return complex(self.state.J_pinv[i, j])

    def line_factor(self, line: Line) -> complex:
        """线因子；标签不一致时抛出 labels-inadmissible"""
        if line.kind == "e":
            if line.top != line.bottom:
                raise TreeError("labels-inadmissible", "end line must carry a single label", witness=line)
            return 1.0 + 0j
        if line.kind == "r":
            nu = line.top[0]
            if line.top != line.bottom or nu in self.blocks or self.labels.get(nu) not in (SetLabel.O, SetLabel.R):
                raise TreeError("labels-inadmissible", f"r line at {line.top} is not a plain P mode", witness=line)
            return 1.0 / self.ctx.delta(nu)
        if line.kind == "q":
            if line.top[0] not in self.q_pos or line.bottom[0] not in self.q_pos:
                raise TreeError("labels-inadmissible", "q line outside the kernel", witness=line)
            return self.q_entry(line.top, line.bottom)
        if line.kind == "p":
            block = self.blocks.get(line.top[0])
            if block is None or line.bottom[0] not in block or line.h < -1:
                raise TreeError("labels-inadmissible", "p line must join modes of one small block", witness=line)
            return self.ctx.propagator(line.top[0], line.bottom[0], line.top[1], line.bottom[1], ScaleIndex(line.h, 1))
        raise TreeError("labels-inadmissible", f"unknown line kind '{line.kind}'", witness=line)

    def node_value(self, node: Node) -> complex:
        """由结构重新计算节点值"""
        if node.kind == "end":
            return self.u0.get((node.mode, node.sign), 0j)
        if node.kind == "entry":
            return 1.0 + 0j
        if node.kind == "counter":
            if len(node.children) != 1:
                raise TreeError("labels-inadmissible", "counter node needs exactly one child", witness=node.mode)
            child = node.children[0]
            block = self.blocks.get(node.mode)
            L = self.state.counterterms.get(node.order)
            if block is None or child.line.top[0] not in block:
                raise TreeError("labels-inadmissible", "counter node must stay in one block", witness=node.mode)
            if L is None:
                return 0j
            return L.entry(node.mode, node.sign, child.line.top[0], child.line.top[1]) * self.evaluate(child)
        if node.kind != "branch":
            raise TreeError("labels-inadmissible", f"unknown node kind '{node.kind}'", witness=node.mode)
        same = [c for c in node.children if c.line.top[1] == node.sign]
        other = [c for c in node.children if c.line.top[1] != node.sign]
        r, s, m = node.coef
        if (len(same), len(other)) != (r, s):
            raise TreeError("labels-inadmissible", f"children signs do not match coefficient {node.coef}", witness=node.mode)
        momentum = ModeVector(0, tuple(m))
        for c in same:
            momentum = momentum + c.line.top[0]
        for c in other:
            momentum = momentum - c.line.top[0]
        if momentum != node.mode:
            raise TreeError("labels-inadmissible", f"momentum not conserved at {node.mode}", witness=(node.mode, momentum))
        mult = _multiplicity([[branch_signature(c) for c in same], [branch_signature(c) for c in other]])
        value = self.coefficient(node.coef, node.sign) * mult
        for c in node.children:
            value *= self.evaluate(c)
        return value

    def evaluate(self, tree: Tree) -> complex:
        """Val(θ)：按结构逐线逐节点重新求值"""
        if isinstance(tree, ResonanceTree):
            return self.node_value(tree.root)
        return self.line_factor(tree.line) * self.node_value(tree.node)

    # ---------- 构建 ----------

    def _next_uid(self) -> int:
        self._count += 1
        if self._count > self.max_trees:
            raise TreeError("tree-explosion", f"more than {self.max_trees} subtrees", witness=self.max_trees)
        return next(self._uid)

    def _seed(self, fam: _Family) -> None:
        if fam.stub is None:
            leaves = [
                Branch(Line("e", key, key), Node("end", key[0], key[1], 0, value=v), 0, v, self._next_uid())
                for key, v in self.u0.items()
            ]
        else:
            key = fam.stub
            leaves = [Branch(Line("e", key, key), Node("entry", key[0], key[1], 0, value=1.0 + 0j), 0, 1.0 + 0j, self._next_uid(), stubbed=True)]
        fam.commit(0, leaves)
        fam.built = 0

    def _stub_family(self, entry: Key) -> _Family:
        if entry not in self._stubs:
            fam = _Family(entry)
            self._seed(fam)
            self._stubs[entry] = fam
        return self._stubs[entry]

    def grow(self, fam: _Family, k: int) -> None:
        """把 fam 的池扩展到第 k 阶

        Raises:
            TreeError: "order-cap"
        """
        if k > self.K_tree:
            raise TreeError("order-cap", f"order {k} above tree cap {self.K_tree}", witness=k)
        if fam.stub is not None:
            self.grow(self._plain, k)
        for order in range(fam.built + 1, k + 1):
            self._build(fam, order)
            fam.built = order

    def _candidates(self, fam: _Family, sigma: int) -> List[Branch]:
        pool = list(self._plain.by_sign[sigma])
        if fam.stub is not None:
            pool += fam.by_sign[sigma]
        return sorted(pool, key=lambda b: (b.order, b.uid))

    def _multisets(self, cands: List[Branch], size: int, budget: int, stubs: int) -> List[Tuple[Tuple[Branch, ...], int, ModeVector, int]]:
        """从 cands 中选 size 个（可重复，位置不减），阶数和 ≤ budget，入口数 ≤ stubs"""
        out = []

        def rec(start: int, left: int, remaining: int, chosen: Tuple[Branch, ...], acc: ModeVector, used: int) -> None:
            if left == 0:
                out.append((chosen, budget - remaining, acc, used))
                return
            for pos in range(start, len(cands)):
                b = cands[pos]
                if b.order > remaining:
                    break
                extra = 1 if b.stubbed else 0
                if used + extra > stubs:
                    continue
                rec(pos, left - 1, remaining - b.order, chosen + (b,), acc + b.line.top[0], used + extra)

        rec(0, size, budget, (), self.zero, 0)
        return out

    def _node_buckets(self, fam: _Family, j: int, q_exit: bool) -> Dict[Key, List[Node]]:
        """f-阶为 j 的全部 branch 节点，按 (ν, σ) 分组"""
        stubs = 1 if fam.stub is not None else 0
        cands = {sigma: self._candidates(fam, sigma) for sigma in SIGNS}
        out: Dict[Key, List[Node]] = defaultdict(list)
        for (r, s, m), _ in sorted(self.coefs.items()):
            t = r + s - self.N - 1
            if t > j:
                continue
            budget = j - t
            kv = t if q_exit else t + self.N
            coef_mode = ModeVector(0, tuple(m))
            for sigma in SIGNS:
                a = self.coefficient((r, s, m), sigma)
                if a == 0:
                    continue
                by_order: Dict[Tuple[int, int], list] = defaultdict(list)
                for item in self._multisets(cands[-sigma], s, budget, stubs):
                    by_order[(item[1], item[3])].append(item)
                for rg, r_order, r_acc, r_used in self._multisets(cands[sigma], r, budget, stubs):
                    for sg, _, s_acc, _ in by_order.get((budget - r_order, stubs - r_used), ()):
                        nu = coef_mode + r_acc - s_acc
                        if nu not in self.index:
                            continue
                        children = rg + sg
                        value = a * _uid_multiplicity(rg) * _uid_multiplicity(sg)
                        for c in children:
                            value *= c.value
                        out[(nu, sigma)].append(Node("branch", nu, sigma, kv, (r, s, m), children, value))
        return out

    def _counter_nodes(self, fam: _Family, k: int) -> Dict[Key, List[Node]]:
        out: Dict[Key, List[Node]] = defaultdict(list)
        for r, L in sorted(self.state.counterterms.items()):
            if not self.N <= r <= k - self.N:
                continue
            for nu2, block in self.blocks.items():
                for s2 in SIGNS:
                    for nu3 in block:
                        for s3 in SIGNS:
                            weight = L.entry(nu2, s2, nu3, s3)
                            if weight == 0:
                                continue
                            for child in fam.get(k - r, (nu3, s3)):
                                if child.line.kind == "p":
                                    out[(nu2, s2)].append(Node("counter", nu2, s2, r, (), (child,), weight * child.value))
        return out

    def _make_branch(self, line: Line, node: Node, order: int, factor: complex) -> Branch:
        stubbed = any(c.stubbed for c in node.children)
        renormal = node.kind != "counter" and all(c.renormal for c in node.children)
        b = Branch(line, node, order, factor * node.value, self._next_uid(), stubbed, renormal)
        if renormal and line.kind == "p" and self.resonances_at(b):
            b = replace(b, renormal=False)
        return b

    def _outside_entry_block(self, fam: _Family, nu: ModeVector) -> bool:
        if fam.stub is None:
            return True
        block = self.blocks.get(fam.stub[0], (fam.stub[0],))
        return nu not in block

    def _build(self, fam: _Family, k: int) -> None:
        if k < self.N:
            fam.commit(k, [])
            return
        nodes = self._node_buckets(fam, k - self.N, q_exit=False)
        counters = self._counter_nodes(fam, k)
        made: List[Branch] = []
        for nu in self.index.modes:
            if self.labels[nu] == SetLabel.Q:
                continue
            for sigma in SIGNS:
                key = (nu, sigma)
                block = self.blocks.get(nu)
                if block is None:
                    if not self._outside_entry_block(fam, nu):
                        continue
                    line = Line("r", key, key)
                    factor = 1.0 / self.ctx.delta(nu)
                    made += [self._make_branch(line, node, k, factor) for node in nodes.get(key, ())]
                    continue
                scales = self.ctx.scales_of(nu)
                for nu2 in block:
                    if not self._outside_entry_block(fam, nu2):
                        continue
                    for s2 in SIGNS:
                        cand = nodes.get((nu2, s2), []) + counters.get((nu2, s2), [])
                        if not cand:
                            continue
                        for scale in scales:
                            g = self.ctx.propagator(nu, nu2, sigma, s2, scale)
                            if g == 0:
                                continue
                            line = Line("p", key, (nu2, s2), scale.h, 1)
                            made += [self._make_branch(line, node, k, g) for node in cand]
        fam.commit(k, made)

        q_made: List[Branch] = []
        if self.q_modes:
            q_nodes = self._node_buckets(fam, k, q_exit=True)
            for nu in self.q_modes:
                for sigma in SIGNS:
                    for nu2 in self.q_modes:
                        if not self._outside_entry_block(fam, nu2):
                            continue
                        for s2 in SIGNS:
                            g = self.q_entry((nu, sigma), (nu2, s2))
                            if abs(g) < 1e-15:
                                continue
                            line = Line("q", (nu, sigma), (nu2, s2))
                            q_made += [self._make_branch(line, node, k, g) for node in q_nodes.get((nu2, s2), ())]
        fam.commit(k, q_made)
        logger.debug(f"🌳 Order {k}: {len(made)} P/block lines, {len(q_made)} kernel lines (entry={fam.stub})")

    # ---------- 共振 ----------

    def _cluster(self, v: Node, level: int) -> Tuple[List[Line], List[Branch], int]:
        lines: List[Line] = []
        entering: List[Branch] = []
        size = 0
        stack = [v]
        while stack:
            node = stack.pop()
            size += 1
            for c in node.children:
                if c.line.kind == "e":
                    size += 1
                elif c.line.h <= level:
                    lines.append(c.line)
                    stack.append(c.node)
                else:
                    entering.append(c)
        return lines, entering, size

    def resonances_at(self, b: Branch) -> List[Resonance]:
        """以 b 的线为出线的全部共振簇"""
        if b.line.kind != "p":
            return []
        v = b.node
        block = self.blocks.get(v.mode)
        if block is None:
            return []
        tau = self.state.params.tau
        found = []
        for level in range(NO_SCALE, b.line.h - 1):
            lines, entering, size = self._cluster(v, level)
            h_T = max((line.h for line in lines), default=NO_SCALE)
            if h_T != level or size <= 1 or len(entering) != 1:
                continue
            e = entering[0]
            if e.line.kind != "p" or e.line.top[0] not in block:
                continue
            if min(e.line.top[0].size, v.mode.size) < 2.0 ** ((level - 2) / tau):
                continue
            if any(line.bottom[0] in block for line in lines):
                continue
            found.append(Resonance(b, e, level, size))
        return found

    def find_resonances(self, tree: Tree) -> List[Resonance]:
        out = []
        for b in iter_branches(tree):
            out += self.resonances_at(b)
        return out

    # ---------- 族 ----------

    def theta(self, k: int, nu: ModeVector, sigma: int, renormalized: bool = False) -> List[Branch]:
        """Θ^{(k)σ}_ν（renormalized 时为 Θ_R）"""
        self.grow(self._plain, k)
        trees = self._plain.get(k, (nu, sigma))
        return [t for t in trees if t.renormal] if renormalized else list(trees)

    def _roots(self, fam: _Family, j: int) -> Dict[Key, List[Node]]:
        if j not in fam.roots:
            fam.roots[j] = self._node_buckets(fam, j, q_exit=False)
        return fam.roots[j]

    def resonance_trees(
        self,
        r: int,
        nu: ModeVector,
        sigma: int,
        entry: Key,
        renormalized: bool = False,
        h: Optional[int] = None,
    ) -> List[ResonanceTree]:
        """ℛ^{(r)σσ'}_{ν,ν'}（renormalized 时为 ℛ_R），h 给定时只取 h_θ = h"""
        if r > self.K_tree:
            raise TreeError("order-cap", f"order {r} above tree cap {self.K_tree}", witness=r)
        block = self.blocks.get(nu)
        if r < self.N or block is None or entry[0] not in block:
            return []
        fam = self._stub_family(entry)
        self.grow(fam, r - self.N)
        out = []
        for node in self._roots(fam, r - self.N).get((nu, sigma), ()):
            renormal = all(c.renormal for c in node.children)
            if renormalized and not renormal:
                continue
            h_theta = internal_scale(node)
            if h is not None and h_theta != h:
                continue
            out.append(ResonanceTree(node, entry, r, h_theta, node.value, renormal))
        return out

    def reduced_trees(self, r: int, nu: ModeVector, sigma: int, entry: Key, h: int) -> List[ResonanceTree]:
        """𝒮_R(h)：根线带尺度标签 h_{ℓ0}，整体最大尺度为 h"""
        tau = self.state.params.tau
        out = []
        for tree in self.resonance_trees(r, nu, sigma, entry, renormalized=True):
            if tree.h > h:
                continue
            labels = range(-1, h + 1) if tree.h == h else (h,)
            for h0 in labels:
                if nu.size >= 2.0 ** ((h0 - 2) / tau):
                    out.append(replace(tree, root_scale=h0))
        return out

    def enumerate(
        self,
        k: int,
        nu: ModeVector,
        sigma: int,
        family: Union[TreeFamily, str] = TreeFamily.THETA_R,
        h: Optional[int] = None,
        entry: Optional[Key] = None,
    ) -> List[Tree]:
        family = TreeFamily(family)
        if family in (TreeFamily.THETA, TreeFamily.THETA_R):
            return list(self.theta(k, nu, sigma, renormalized=family == TreeFamily.THETA_R))
        if entry is None:
            raise TreeError("not-in-R", f"family '{family.value}' needs an entry label")
        if family == TreeFamily.S_R:
            if h is None:
                raise TreeError("not-in-R", "reduced family needs a scale h")
            return list(self.reduced_trees(k, nu, sigma, entry, h))
        return list(self.resonance_trees(k, nu, sigma, entry, renormalized=family == TreeFamily.R_R, h=h))

    # ---------- 反项 ----------

    def counterterm(self, r: int, nu: ModeVector, sigma: int, nu2: ModeVector, sigma2: int, h: Optional[int] = None) -> complex:
        """L^{(r)σσ'}_{ν,ν'}

        h 为 None 时取 −Σ C_{h_θ+2}(x_ν) Val；否则为尺度 h 的分量 −Σ_{h_θ < h−1} Val。
        """
        trees = self.resonance_trees(r, nu, sigma, (nu2, sigma2), renormalized=True)
        if h is not None:
            return -sum((t.value for t in trees if t.h < h - 1), 0j)
        x = self.ctx.small_divisor(nu)
        return -sum((float(self.ctx.scales.C(t.h + 2, x)) * t.value for t in trees), 0j)

    def counterterm_by_scales(self, r: int, nu: ModeVector, sigma: int, nu2: ModeVector, sigma2: int) -> complex:
        """Σ_{h≥0} χ_h(x_ν) L_h：与 C 形式等价的逐尺度写法"""
        x = self.ctx.small_divisor(nu)
        total = 0j
        for h in self.ctx.scales.active_scales(x):
            if h >= 0:
                total += float(self.ctx.scales.chi_h(h, x)) * self.counterterm(r, nu, sigma, nu2, sigma2, h=h)
        return total

    def counterterm_matrix(self, r: int, by_scales: bool = False) -> BlockMatrix:
        L = zero_like(self.state.M)
        for modes, _ in L.blocks.values():
            for nu in modes:
                for nu2 in modes:
                    for sigma in SIGNS:
                        for sigma2 in SIGNS:
                            if by_scales:
                                value = self.counterterm_by_scales(r, nu, sigma, nu2, sigma2)
                            else:
                                value = self.counterterm(r, nu, sigma, nu2, sigma2)
                            if value != 0:
                                L.set_entry(nu, sigma, nu2, sigma2, value)
        return L

    # ---------- 变换 ----------

    def _exit_order(self, node: Node, q_exit: bool) -> int:
        if node.kind != "branch":
            return node.order
        r, s, _ = node.coef
        return r + s - 1 - (self.N if q_exit else 0)

    def reverse_path(self, tree: ResonanceTree) -> ResonanceTree:
        """反转根到入口的路径，得到 ℛ^{(r)−σ',−σ}_{ν',ν} 中的树

        Raises:
            TreeError: "not-in-R"
        """
        if not isinstance(tree, ResonanceTree):
            raise TreeError("not-in-R", "only trees with an entry can be reversed")
        nodes: List[Node] = [tree.root]
        path: List[Branch] = []
        node = tree.root
        while True:
            nxt = [c for c in node.children if _contains_entry(c)]
            if len(nxt) != 1:
                raise TreeError("not-in-R", "tree has no unique entry path", witness=signature(tree))
            path.append(nxt[0])
            if nxt[0].node.kind == "entry":
                break
            node = nxt[0].node
            nodes.append(node)

        root_mode, root_sign = tree.root.mode, tree.root.sign
        stub_key = (root_mode, -root_sign)
        child = Branch(Line("e", stub_key, stub_key), Node("entry", root_mode, -root_sign, 0, value=1.0 + 0j), 0, 1.0 + 0j)
        root = tree.root
        for k, old in enumerate(nodes):
            out_line = path[k]
            new_sign = -out_line.line.top[1]
            new_mode = out_line.line.top[0]
            others = tuple(c for c in old.children if c is not out_line)
            children = others + (child,)
            is_root = k == len(nodes) - 1
            q_exit = not is_root and out_line.line.kind == "q"
            if old.kind == "counter":
                new_node = Node("counter", new_mode, new_sign, old.order, (), children)
            else:
                r = sum(1 for c in children if c.line.top[1] == new_sign)
                m = tuple(-old.sign * out_line.line.top[1] * x for x in old.coef[2])
                coef = (r, len(children) - r, m)
                new_node = Node("branch", new_mode, new_sign, 0, coef, children)
                new_node = replace(new_node, order=self._exit_order(new_node, q_exit))
            if is_root:
                root = new_node
                break
            # 反转后的线：父侧取原 bottom 的模式与相反符号，节点侧为新节点标签
            top = (out_line.line.bottom[0], -out_line.line.bottom[1])
            line = Line(out_line.line.kind, top, (new_mode, new_sign), out_line.line.h, out_line.line.i)
            child = Branch(line, new_node, new_node.order + sum(c.order for c in children))
        root = replace(root, value=self.node_value(root))
        return ResonanceTree(root, stub_key, tree.order, internal_scale(root), root.value, tree.renormal)

    def conjugate(self, tree: Tree) -> Tree:
        """全部符号取反；值应为原值的复共轭"""

        def flip_key(key: Key) -> Key:
            return (key[0], -key[1])

        def flip_node(node: Node) -> Node:
            return Node(node.kind, node.mode, -node.sign, node.order, node.coef, tuple(flip_branch(c) for c in node.children))

        def flip_branch(b: Branch) -> Branch:
            line = Line(b.line.kind, flip_key(b.line.top), flip_key(b.line.bottom), b.line.h, b.line.i)
            return Branch(line, flip_node(b.node), b.order, uid=b.uid)

        if isinstance(tree, ResonanceTree):
            root = flip_node(tree.root)
            root = replace(root, value=self.node_value(root))
            return ResonanceTree(root, flip_key(tree.entry), tree.order, tree.h, root.value, tree.renormal, tree.root_scale)
        out = flip_branch(tree)
        return replace(out, value=self.evaluate(out))


def _contains_entry(b: Branch) -> bool:
    return any(x.node.kind == "entry" for x in iter_branches(b))


def scale_violations(tree: Tree, blocks: Dict[ModeVector, Tuple[ModeVector, ...]]) -> List[Tuple[Line, Line]]:
    """相邻 p 线 ℓ、ℓ' 的块相同时要求 |h_ℓ − h_ℓ'| ≤ 1"""
    out = []
    for b in iter_branches(tree):
        if b.line.kind != "p":
            continue
        block = blocks.get(b.line.bottom[0], ())
        for c in b.node.children:
            if c.line.kind == "p" and c.line.top[0] in block and abs(b.line.h - c.line.h) > 1:
                out.append((b.line, c.line))
    return out


# ============ 计数与界 ============

def scale_census(tree: Tree) -> Dict[str, object]:
    """N_h（i=1 且 h_ℓ ≥ h 的线数）与 K(θ)"""
    lines = list(iter_branches(tree))
    K = tree.order
    for node in iter_nodes(tree):
        if node.kind == "branch":
            K += sum(abs(x) for x in node.coef[2])
        elif node.kind == "end":
            K += node.mode.size
    for b in lines:
        if b.line.kind == "q":
            K += (b.line.top[0] - b.line.bottom[0]).size
    scales = [b.line.h for b in lines if b.line.i == 1]
    top = max(scales, default=-1)
    counts = {h: sum(1 for x in scales if x >= h) for h in range(0, top + 1)}
    return {"K": K, "N_h": counts, "lines": len(lines)}


def bound_check(trees: Iterable[Tree], beta: float, tau: float, c: Optional[float] = None) -> Dict[str, object]:
    """N_h ≤ max{0, c·K(θ)·2^{(2−h)β/(2τ)} − 1}（h ≥ 1）

    c 为 None 时拟合最小可行常数。
    """
    needed = 0.0
    rows = []
    for tree in trees:
        census = scale_census(tree)
        K = max(int(census["K"]), 1)
        for h, n in census["N_h"].items():
            if h < 1 or n == 0:
                continue
            scale = K * 2.0 ** ((2 - h) * beta / (2 * tau))
            needed = max(needed, (n + 1) / scale)
            rows.append((n, scale))
    c_used = needed if c is None else c
    ok = all(n <= max(0.0, c_used * scale - 1) + 1e-12 for n, scale in rows)
    return {"c": c_used, "c_min": needed, "ok": ok, "checked": len(rows)}


def momentum_bound(trees: Iterable[Tree], alpha: float = 0.5) -> float:
    """拟合 |ν_ℓ| ≤ B·K(θ)^{1+4α} 中的 B"""
    B = 0.0
    for tree in trees:
        K = max(int(scale_census(tree)["K"]), 1)
        for b in iter_branches(tree):
            B = max(B, b.line.top[0].size / K ** (1 + 4 * alpha), b.line.bottom[0].size / K ** (1 + 4 * alpha))
    return B


def reality_defects(spec: EquationSpec) -> Dict[Coef, float]:
    """路径反转所需的系数恒等式 (s+1)·a⁻_{s+1,r−1,−m} = r·a⁺_{r,s,m} 的偏差"""
    table: Dict[Coef, complex] = {}
    for c in spec.coefficients:
        key = (c.r, c.s, tuple(c.m))
        table[key] = table.get(key, 0j) + complex(c.value)
    out = {}
    for (r, s, m), a in table.items():
        if r < 1:
            continue
        mirror = table.get((s + 1, r - 1, tuple(-x for x in m)), 0j)
        out[(r, s, m)] = abs((s + 1) * np.conj(mirror) - r * a)
    return out


# ============ 反项提供者与审计 ============

class TreeCounterterms(CountertermProvider):
    """由重整化共振树 ℛ_R 求和得到的反项"""

    def __init__(self, K_tree: Optional[int] = None, max_trees: int = MAX_TREES):
        self.K_tree = K_tree
        self.max_trees = max_trees

    @property
    def name(self) -> str:
        return "trees"

    def compute(self, state: SeriesState, max_order: int) -> Dict[int, BlockMatrix]:
        engine = TreeEngine(state, self.K_tree, self.max_trees)
        if max_order > engine.K_tree:
            raise TreeError("order-cap", f"counterterms up to {max_order} exceed tree cap {engine.K_tree}", witness=max_order)
        out = {r: engine.counterterm_matrix(r) for r in range(state.spec.N, max_order + 1)}
        logger.info(f"🌳 Tree counterterms for orders {state.spec.N}..{max_order} ({engine.size} subtrees)")
        return out


def counterterm_forms_gap(engine: TreeEngine, r: int) -> float:
    """C 形式与逐尺度形式的最大差异"""
    a = engine.counterterm_matrix(r)
    b = engine.counterterm_matrix(r, by_scales=True)
    return max((float(np.max(np.abs(x - b.blocks[j][1]), initial=0.0)) for j, (_, x) in a.blocks.items()), default=0.0)


def _all_keys(state: SeriesState) -> List[Key]:
    return [(nu, sigma) for nu in state.index.modes for sigma in SIGNS]


def recursion_equivalence(
    state: SeriesState,
    K: int,
    family: Union[TreeFamily, str] = TreeFamily.THETA,
    K_tree: Optional[int] = None,
    max_trees: int = MAX_TREES,
    engine: Optional[TreeEngine] = None,
) -> float:
    """树和与递推解 u^{(k)}（k ≤ K）的最大差异

    engine 给定时复用其子树池（须由同一 state 构建），否则按 K_tree、max_trees 新建。
    """
    family = TreeFamily(family)
    if family not in (TreeFamily.THETA, TreeFamily.THETA_R):
        raise TreeError("not-in-R", f"family '{family.value}' has no recursion counterpart")
    if engine is None:
        engine = TreeEngine(state, K_tree if K_tree is not None else K, max_trees)
    elif engine.state is not state:
        raise TreeError("state-mismatch", "engine was built from another series state")
    run_recursion(state, K)
    gap = 0.0
    for k in range(K + 1):
        up, um = state.orders[k]
        for i, nu in enumerate(state.index.modes):
            for sigma, vec in ((PLUS, up), (MINUS, um)):
                total = sum((t.value for t in engine.theta(k, nu, sigma, family == TreeFamily.THETA_R)), 0j)
                gap = max(gap, abs(total - vec[i]))
    logger.info(f"🌳 Tree/recursion gap up to order {K} ({family.value}): {gap:.3e}")
    return gap


def resonance_audit(engine: TreeEngine, K: int) -> Dict[str, object]:
    """Θ 树中每个共振簇（入口子树替换为端点后）都应出现在对应的 ℛ 族中"""
    state = engine.state
    found = 0
    matched = 0
    unmatched = []
    seen: Dict[Tuple, set] = {}
    for k in range(state.spec.N, K + 1):
        for nu, sigma in _all_keys(state):
            for tree in engine.theta(k, nu, sigma):
                for res in engine.find_resonances(tree):
                    found += 1
                    entry = res.entry.line.top
                    key = (res.order, res.exit.node.mode, res.exit.node.sign, entry, res.h)
                    if key not in seen:
                        family = engine.resonance_trees(res.order, res.exit.node.mode, res.exit.node.sign, entry, h=res.h)
                        seen[key] = {node_signature(t.root) for t in family}
                    if node_signature(res.exit.node, stub=res.entry) in seen[key]:
                        matched += 1
                    else:
                        unmatched.append(key)
    return {"resonances": found, "matched": matched, "unmatched": unmatched[:20], "ok": matched == found}


def reversal_audit(engine: TreeEngine, r: int, tol: float = 1e-10) -> Dict[str, object]:
    """路径反转：值不变且为对合"""
    worst = 0.0
    involution = True
    count = 0
    for modes in engine.state.small_blocks():
        for nu in modes:
            for nu2 in modes:
                for sigma in SIGNS:
                    for sigma2 in SIGNS:
                        for tree in engine.resonance_trees(r, nu, sigma, (nu2, sigma2)):
                            back = engine.reverse_path(tree)
                            worst = max(worst, abs(back.value - tree.value))
                            involution &= signature(engine.reverse_path(back)) == signature(tree)
                            count += 1
    return {"trees": count, "max_gap": worst, "involution": involution, "ok": involution and worst <= tol}


def reduction_audit(engine: TreeEngine, r: int, tol: float = 1e-12) -> Dict[str, object]:
    """ℛ_R(h) 中每棵树在 𝒮_R(h) 中有根尺度为 h−1 的对应树且值相等"""
    missing = 0
    count = 0
    for modes in engine.state.small_blocks():
        for nu in modes:
            for nu2 in modes:
                for sigma in SIGNS:
                    for sigma2 in SIGNS:
                        for tree in engine.resonance_trees(r, nu, sigma, (nu2, sigma2), renormalized=True):
                            if tree.h < 0:
                                continue
                            count += 1
                            partners = [
                                t for t in engine.reduced_trees(r, nu, sigma, (nu2, sigma2), tree.h)
                                if t.root is tree.root and t.root_scale == tree.h - 1 and abs(t.value - tree.value) <= tol
                            ]
                            missing += 0 if partners else 1
    return {"trees": count, "missing": missing, "ok": missing == 0}


def enumerate_trees(
    state: SeriesState,
    k: int,
    nu: ModeVector,
    sigma: int,
    family: Union[TreeFamily, str] = TreeFamily.THETA_R,
    h: Optional[int] = None,
    entry: Optional[Key] = None,
    K_tree: Optional[int] = None,
    max_trees: int = MAX_TREES,
) -> List[Tree]:
    """快捷方式：新建引擎并枚举一个族"""
    return TreeEngine(state, K_tree, max_trees).enumerate(k, nu, sigma, family, h, entry)


def tree_value(state: SeriesState, tree: Tree) -> complex:
    return TreeEngine(state).evaluate(tree)


def counterterm_trees(
    state: SeriesState,
    k: int,
    h: Optional[int],
    nu: ModeVector,
    nu2: ModeVector,
    sigma: int,
    sigma2: int,
    K_tree: Optional[int] = None,
    max_trees: int = MAX_TREES,
) -> complex:
    """L^{(k)σσ'}_{h,ν,ν'}；h 为 None 时返回整体 L^{(k)}"""
    return TreeEngine(state, K_tree, max_trees).counterterm(k, nu, sigma, nu2, sigma2, h=h)
