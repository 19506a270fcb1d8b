"""
Geometric martingale over a cube tree.

Every cube ``Q`` of a tree owns a mass ``w_Q(Q) = diam(Q)`` that is pushed
down the tree: at a node ``Q'`` holding mass ``m`` the children ``Q'^i``
receive ``m diam(Q'^i) / s'`` and the remainder ``R_{Q'}`` (the part of the
curve in ``Q'`` outside every child) receives ``m H1(R_{Q'}) / s'``, spread
uniformly, with ``s' = H1(R_{Q'}) + sum_i diam(Q'^i)``.

The curve meets each cube in a finite union of parameter intervals, and
``H1`` is the parameter (arclength) measure of those intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..curves import Arc, Curve, curve_length
from ..heisenberg import MetricCtx
from ..multires import CubeForest

__all__ = [
    "DecompositionError",
    "j_m",
    "select_BM",
    "MNode",
    "MartingaleTree",
    "build_martingale",
    "tree_from_cubes",
    "random_tree",
    "verify_martingale",
    "martingale_for_curve",
]

REL = 1e-12


class DecompositionError(ValueError):
    pass


def j_m(M: int, eps0: float) -> int:
    """Smallest integer strictly larger than ``M - log2(10 eps0) + 10``."""
    x = M - math.log2(10 * eps0) + 10
    return math.floor(x) + 1


def select_BM(balls, betas, M: int, flat=None) -> list[int]:
    """Indices of balls with ``beta in [2^(-M-1), 2^(-M)]`` (and flat, when ``flat`` is given)."""
    lo, hi = 2.0 ** (-M - 1), 2.0 ** (-M)
    out = []
    for i, b in enumerate(betas):
        if lo <= b <= hi and (flat is None or flat[i]):
            out.append(i)
    return out


# interval sets on [0, T) ----------------------------------------------------


def _normalize(iv) -> np.ndarray:
    iv = np.asarray(iv, dtype=float).reshape(-1, 2)
    iv = iv[iv[:, 1] > iv[:, 0]]
    if len(iv) == 0:
        return np.zeros((0, 2))
    iv = iv[np.argsort(iv[:, 0])]
    out = [list(iv[0])]
    for a, b in iv[1:]:
        if a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return np.array(out)


def _measure(iv: np.ndarray) -> float:
    return float((iv[:, 1] - iv[:, 0]).sum()) if len(iv) else 0.0


def _intersect(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = []
    i = j = 0
    while i < len(x) and j < len(y):
        a, b = max(x[i, 0], y[j, 0]), min(x[i, 1], y[j, 1])
        if b > a:
            out.append((a, b))
        if x[i, 1] < y[j, 1]:
            i += 1
        else:
            j += 1
    return np.array(out).reshape(-1, 2)


def _subtract(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = []
    for a, b in x:
        cur = a
        for c, d in y:
            if d <= cur or c >= b:
                continue
            if c > cur:
                out.append((cur, c))
            cur = max(cur, d)
            if cur >= b:
                break
        if cur < b:
            out.append((cur, b))
    return np.array(out).reshape(-1, 2)


def _wrap(a: float, b: float, T: float) -> np.ndarray:
    """Interval ``[a, b]`` of the circle as pieces of ``[0, T)``."""
    if b - a >= T:
        return np.array([[0.0, T]])
    a0 = a % T
    b0 = a0 + (b - a)
    if b0 <= T:
        return np.array([[a0, b0]])
    return np.array([[a0, T], [0.0, b0 - T]])


# tree ----------------------------------------------------------------------


@dataclass
class MNode:
    """One cube: its curve part ``intervals`` (subset of ``[0, T)``) and diameter."""

    intervals: np.ndarray
    diam: float
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    remainder: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    h1: float = 0.0
    h1_R: float = 0.0
    s: float = 0.0


@dataclass
class MartingaleTree:
    nodes: list[MNode]
    T: float
    M: int
    eps0: float
    length: float
    # mass[owner][node]: w_owner(node); rem[owner][node]: w_owner(R_node)
    mass: list[dict[int, float]]
    rem: list[dict[int, float]]

    @property
    def J_M(self) -> int:
        return j_m(self.M, self.eps0)

    @property
    def q(self) -> float:
        return 1.0 / (1.0 + self.eps0 / 10 * 2.0 ** (-self.M))

    @property
    def density_bound(self) -> float:
        return 10.0 / self.eps0 * 2.0 ** self.M

    @property
    def roots(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.parent is None]

    def subtree(self, i: int) -> list[int]:
        out, stack = [], [i]
        while stack:
            k = stack.pop()
            out.append(k)
            stack.extend(self.nodes[k].children)
        return out

    def chain(self, i: int) -> list[int]:
        """``i`` and its ancestors, innermost first."""
        out = [i]
        while self.nodes[out[-1]].parent is not None:
            out.append(self.nodes[out[-1]].parent)
        return out

    def remainder_density(self, i: int) -> float:
        """``sum_Q w_Q(x)`` for ``x`` in ``R_i`` (constant there)."""
        h = self.nodes[i].h1_R
        if h <= 0:
            return 0.0
        return sum(self.rem[k][i] for k in self.chain(i)) / h

    def density(self, s) -> np.ndarray:
        """``sum_Q w_Q(gamma(s))`` at parameters ``s`` (0 outside every cube)."""
        s = np.atleast_1d(np.asarray(s, dtype=float)) % self.T
        out = np.zeros(len(s))
        for i, n in enumerate(self.nodes):
            if not len(n.remainder) or n.h1_R <= 0:
                continue
            hit = np.zeros(len(s), dtype=bool)
            for a, b in n.remainder:
                hit |= (s >= a) & (s < b)
            out[hit] = self.remainder_density(i)
        return out


def build_martingale(nodes: list[MNode], T: float, M: int, eps0: float, length: float,
                     tol: float = 1e-12) -> MartingaleTree:
    """Decompose every node and distribute each cube's diameter down its subtree.

    Raises :class:`DecompositionError` when children overlap, stick out of
    their parent, or a node has ``s' = 0``.
    """
    if not (eps0 > 0) or M < 0:
        raise ValueError("need eps0 > 0 and M >= 0")
    for i, n in enumerate(nodes):
        n.intervals = _normalize(n.intervals)
        n.h1 = _measure(n.intervals)
    for i, n in enumerate(nodes):
        kids = [nodes[c].intervals for c in n.children]
        for c in n.children:
            if nodes[c].parent != i:
                raise DecompositionError(f"node {c} lists parent {nodes[c].parent}, expected {i}")
            out = _measure(_subtract(nodes[c].intervals, n.intervals))
            if out > tol * T:
                raise DecompositionError(f"child {c} leaves node {i} on a set of measure {out:.3g}")
        for x in range(len(kids)):
            for y in range(x + 1, len(kids)):
                ov = _measure(_intersect(kids[x], kids[y]))
                if ov > tol * T:
                    raise DecompositionError(f"children {n.children[x]} and {n.children[y]} of node {i} "
                                             f"overlap on measure {ov:.3g}")
        union = _normalize(np.concatenate(kids)) if kids else np.zeros((0, 2))
        n.remainder = _subtract(n.intervals, union)
        n.h1_R = _measure(n.remainder)
        n.s = n.h1_R + sum(nodes[c].diam for c in n.children)
        if n.s <= 0:
            raise DecompositionError(f"node {i} has s' = 0")
    tree = MartingaleTree(nodes, float(T), int(M), float(eps0), float(length),
                          [dict() for _ in nodes], [dict() for _ in nodes])
    for owner in range(len(nodes)):
        mass, rem = tree.mass[owner], tree.rem[owner]
        mass[owner] = nodes[owner].diam
        stack = [owner]
        while stack:
            k = stack.pop()
            n = nodes[k]
            f = mass[k] / n.s
            rem[k] = f * n.h1_R
            for c in n.children:
                mass[c] = f * nodes[c].diam
                stack.append(c)
    return tree


# tree constructors -----------------------------------------------------------


def _runs(mask: np.ndarray, s: np.ndarray, T: float) -> np.ndarray:
    """Intervals of ``[0, T)`` where a mask sampled at cell midpoints ``s`` is set."""
    h = T / len(s)
    out = []
    i = 0
    while i < len(mask):
        if mask[i]:
            j = i
            while j + 1 < len(mask) and mask[j + 1]:
                j += 1
            out.append((i * h, (j + 1) * h))
            i = j + 1
        else:
            i += 1
    return np.array(out).reshape(-1, 2)


def tree_from_cubes(ctx: MetricCtx, curve: Curve, forest: CubeForest, cells: int = 20000) -> list[MNode]:
    """Nodes for every cube of a forest, with curve parts resolved on ``cells`` equal parameter cells.

    A cell belongs to a cube when its midpoint does.  Member sets are nested
    along the forest, so the sampled parts nest exactly.
    """
    T = curve.T
    s = (np.arange(cells) + 0.5) * (T / cells)
    pts = curve(s)
    nodes = []
    for q in forest.cubes:
        mask = q.contains_point(ctx, pts)
        nodes.append(MNode(_runs(mask, s, T), q.diameter(ctx), q.parent, list(q.children)))
    return nodes


def random_tree(ctx: MetricCtx, curve: Curve, depth: int, branching: tuple = (1, 4),
                fill: tuple = (0.5, 0.95), seed: int = 0) -> list[MNode]:
    """Random nested arcs: the root is the whole curve, children are disjoint sub-arcs.

    ``diam`` of a node is the diameter of its arc image.
    """
    rng = np.random.default_rng(seed)
    T = curve.T
    nodes = [MNode(np.array([[0.0, T]]), Arc(curve, 0.0, T).diameter(ctx))]
    spans = [(0.0, T)]
    frontier = [0]
    for _ in range(depth - 1):
        nxt = []
        for k in frontier:
            a, b = spans[k]
            nk = int(rng.integers(branching[0], branching[1] + 1))
            share = rng.uniform(*fill)
            w = rng.dirichlet(np.ones(2 * nk + 1))
            # alternate gap / child widths, children taking ``share`` of the span
            gaps = w[0::2] / w[0::2].sum() * (1 - share) * (b - a)
            kids = w[1::2] / w[1::2].sum() * share * (b - a)
            cur = a
            for g, c in zip(gaps, kids):
                lo, hi = cur + g, cur + g + c
                cur = hi
                if hi - lo <= 0:
                    continue
                nodes.append(MNode(_wrap(lo, hi, T), Arc(curve, lo % T, lo % T + (hi - lo)).diameter(ctx), k))
                spans.append((lo, hi))
                nodes[k].children.append(len(nodes) - 1)
                nxt.append(len(nodes) - 1)
        frontier = nxt
    return nodes


# verification ----------------------------------------------------------------


def verify_martingale(t: MartingaleTree, samples: int = 10_000, seed: int = 0) -> dict:
    """Check properties (i)-(iii), mass conservation and ``sum diam(Q) <= (10/eps0) 2^M length``.

    The density bound is checked on every remainder set (where the density
    is constant, so this is exact) and on ``samples`` random parameters.
    """
    nodes = t.nodes
    problems = []
    cons = 0.0
    for owner in range(len(nodes)):
        for k, m in t.mass[owner].items():
            out = t.rem[owner][k] + sum(t.mass[owner][c] for c in nodes[k].children)
            cons = max(cons, abs(out - m) / max(m, 1e-300))
    if cons > REL:
        problems.append(f"mass conservation off by {cons:.3g} relative")
    # (i): integral of w_Q over Q is the total remainder mass of its subtree
    worst_i = math.inf
    for owner in range(len(nodes)):
        total = sum(t.rem[owner][k] for k in t.subtree(owner))
        gap = (total - nodes[owner].diam) / nodes[owner].diam if nodes[owner].diam > 0 else 0.0
        worst_i = min(worst_i, gap)
    if worst_i < -REL:
        problems.append(f"(i) fails: integral short of diam(Q) by {-worst_i:.3g} relative")
    # (iii): w_Q lives on remainders of Q's subtree, each inside Q's curve part
    leak = 0.0
    for owner in range(len(nodes)):
        for k in t.subtree(owner):
            if t.rem[owner][k] > 0:
                leak = max(leak, _measure(_subtract(nodes[k].remainder, nodes[owner].intervals)))
    if leak > REL * t.T:
        problems.append(f"(iii) fails: support leaves Q on measure {leak:.3g}")
    # (ii)
    dens = [t.remainder_density(k) for k in range(len(nodes))]
    max_density = max(dens) if dens else 0.0
    rng = np.random.default_rng(seed)
    sampled = t.density(rng.uniform(0, t.T, samples)) if samples else np.zeros(0)
    max_sampled = float(sampled.max()) if len(sampled) else 0.0
    if max(max_density, max_sampled) > t.density_bound * (1 + REL):
        problems.append(f"(ii) fails: density {max_density:.6g} > {t.density_bound:.6g}")
    # the per-node ratio the geometric series relies on
    ratios = [n.diam / n.s for n in nodes if n.children]
    sum_diam = float(sum(n.diam for n in nodes))
    prop_bound = t.density_bound * t.length
    if sum_diam > prop_bound:
        problems.append(f"sum diam(Q) = {sum_diam:.6g} exceeds {prop_bound:.6g}")
    return {
        "M": t.M,
        "eps0": t.eps0,
        "J_M": t.J_M,
        "q": t.q,
        "nodes": len(nodes),
        "depth": max(len(t.chain(k)) for k in range(len(nodes))) if nodes else 0,
        "mass_conservation": cons,
        "prop_i_min_rel": worst_i if nodes else 0.0,
        "support_leak": leak,
        "max_density": max_density,
        "max_sampled_density": max_sampled,
        "density_bound": t.density_bound,
        "max_ratio": max(ratios) if ratios else None,
        "ratio_above_q": int(sum(r > t.q for r in ratios)),
        "sum_diam": sum_diam,
        "length": t.length,
        "prop_bound": prop_bound,
        "problems": problems,
        "ok": not problems,
    }


def martingale_for_curve(ctx: MetricCtx, curve: Curve, nodes: list[MNode], M: int, eps0: float) -> MartingaleTree:
    """:func:`build_martingale` with the curve's length as the ``H1`` surrogate."""
    return build_martingale(nodes, curve.T, M, eps0, curve_length(ctx, curve))
