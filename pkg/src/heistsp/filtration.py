"""
Arc families on the parameter circle: prefiltrations cut out by cubes, the
completion to a full filtration, children, and the increments ``d_tau``.

Arc endpoints are kept *unwrapped*: a filtration fixes an origin ``s0`` at
the start of one of its coarsest arcs and every arc is an interval inside
``[s0, s0 + T]``.  The whole circle is the arc ``[s0, s0 + T]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .curves import Arc, Curve, point_set_diameter
from .heisenberg import MetricCtx, distance, segment_distance_sup
from .multires import Ball, Cube, CubeForest

__all__ = [
    "PrefiltrationError",
    "Prefiltration",
    "FArc",
    "Filtration",
    "lambda_arcs",
    "prefiltration_from_cubes",
    "check_prefiltration",
    "synthetic_prefiltration",
    "complete_filtration",
    "audit_filtration",
    "children",
    "d_tau",
    "deviation",
    "lambda_prime",
    "chord_sums",
    "telescoping_bound",
    "modified_four_point",
]

BISECT_ITERS = 60


class PrefiltrationError(ValueError):
    pass


# lambda arcs -------------------------------------------------------------


def lambda_arcs(ctx: MetricCtx, curve: Curve, cube: Cube, ball: Ball,
                samples_per_radius: int = 64) -> list[Arc]:
    """Connected components of ``gamma^-1(Q)`` whose image meets ``ball``.

    Only loop edges whose planar image comes within reach of the cube are
    sampled (Koranyi distance dominates planar distance), at spacing
    ``r(ball) / samples_per_radius``; component ends are refined by
    bisection on cube membership.
    """
    forest = cube.forest
    cB = forest.centers[cube.gen]
    reach = float((distance(ctx, cB, forest.centers[cube.members]) + forest.radii[cube.members]).max())
    start, u, h = curve.frames
    # Koranyi distance dominates planar distance, so only the part of each
    # edge whose planar image lies in the disc of radius ``reach`` can be in Q
    w = cB[:2] - start[:, :2]
    proj = np.einsum("ij,ij->i", w, u)
    perp2 = np.einsum("ij,ij->i", w, w) - proj ** 2
    R2 = (reach * (1 + 1e-9)) ** 2
    edges = np.flatnonzero((perp2 <= R2) & (proj + np.sqrt(np.maximum(R2 - perp2, 0)) >= 0)
                           & (proj - np.sqrt(np.maximum(R2 - perp2, 0)) <= h))
    if len(edges) == 0:
        return []
    half = np.sqrt(np.maximum(R2 - perp2[edges], 0.0))
    gaps = curve.gaps[edges]
    lo = np.maximum(0.0, proj[edges] - half)
    hi = np.minimum(h[edges], proj[edges] + half)
    # past the horizontal length the edge rests at its end point
    hi = np.where(hi >= h[edges], gaps, hi)
    spacing = ball.radius / samples_per_radius
    T = curve.T
    m = np.maximum(2, np.ceil((hi - lo) / spacing).astype(int) + 1)
    k = np.repeat(np.arange(len(edges)), m)
    j = np.arange(m.sum()) - np.repeat(np.cumsum(m) - m, m)
    s = np.unique(curve.t[edges][k] + lo[k] + (hi - lo)[k] * j / np.repeat(m - 1, m))
    inside = cube.contains_point(ctx, curve(s))

    if inside.all() and np.isclose(s[0], 0.0) and np.isclose(s[-1], T) and np.all(np.diff(s) <= spacing * 1.0001):
        return [Arc(curve, 0.0, T)] if np.any(ball.contains(ctx, curve(s))) else []
    # sample params that are not adjacent (a skipped edge) are separated by outside points
    step_ok = np.diff(s) <= spacing * 1.0001 + 1e-15
    runs = []
    i = 0
    n = len(s)
    while i < n:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and inside[j + 1] and step_ok[j]:
            j += 1
        runs.append([i, j])
        i = j + 1
    # bisect every inside/outside boundary at once; ``lo`` stays inside
    lo, hi, slot = [], [], []
    for r, (i, j) in enumerate(runs):
        if i > 0 and step_ok[i - 1]:
            lo.append(s[i]); hi.append(s[i - 1]); slot.append((r, 0))
        if j + 1 < n and step_ok[j]:
            lo.append(s[j]); hi.append(s[j + 1]); slot.append((r, 1))
    ends = [[s[i], s[j]] for i, j in runs]
    if lo:
        lo, hi = np.array(lo), np.array(hi)
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            m_in = cube.contains_point(ctx, curve(mid))
            lo = np.where(m_in, mid, lo)
            hi = np.where(m_in, hi, mid)
        for (r, side), x in zip(slot, lo):
            ends[r][side] = x
    arcs = [[a, b, np.arange(i, j + 1)] for (a, b), (i, j) in zip(ends, runs)]
    # glue a run ending at T with one starting at 0
    if len(arcs) > 1 and np.isclose(arcs[-1][1], T) and np.isclose(arcs[0][0], 0.0):
        last = arcs.pop()
        first = arcs.pop(0)
        arcs.append([last[0], first[1] + T, np.concatenate([last[2], first[2]])])
    out = []
    for a, b, idx in arcs:
        pts = curve(np.concatenate([s[idx], [a, b]]))
        if np.any(ball.contains(ctx, pts)):
            out.append(Arc(curve, a, b))
    return out


# prefiltrations ------------------------------------------------------------


@dataclass
class Prefiltration:
    curve: Curve
    J: int
    L: float
    levels: dict[int, list[Arc]]

    @property
    def m(self) -> int:
        nonempty = [k for k, v in self.levels.items() if v]
        return min(nonempty) if nonempty else 0

    @property
    def max_level(self) -> int:
        nonempty = [k for k, v in self.levels.items() if v]
        return max(nonempty) if nonempty else 0

    def scale(self, n: int) -> float:
        return self.L * 2.0 ** (-n * self.J)

    def is_empty(self) -> bool:
        return not any(self.levels.values())


def _unwrap_into(a: float, b: float, s0: float, T: float) -> tuple[float, float]:
    shift = math.floor((a - s0) / T) * T
    return a - shift, b - shift


def _intervals_overlap(x, y, T):
    """Overlap length of two arcs on the circle given by (a, b)."""
    total = 0.0
    for shift in (-T, 0.0, T):
        total += max(0.0, min(x[1], y[1] + shift) - max(x[0], y[0] + shift))
    return total


def _contained(inner, outer, T, tol):
    for shift in (-T, 0.0, T):
        if outer[0] - tol <= inner[0] + shift and inner[1] + shift <= outer[1] + tol:
            return True
    return False


def check_prefiltration(ctx: MetricCtx, pre: Prefiltration, tol: float = 1e-9) -> list[str]:
    """Violations of the diameter bracket, same-level disjointness and nesting."""
    T = pre.curve.T
    problems = []
    ivs = {k: [(arc.a, arc.b) for arc in arcs] for k, arcs in pre.levels.items()}
    for k, arcs in pre.levels.items():
        lo, hi = pre.scale(k), 8 * pre.scale(k)
        for i, arc in enumerate(arcs):
            d = arc.diameter(ctx)
            if not (lo * (1 - tol) <= d < hi):
                problems.append(f"(i) level {k} arc {i}: diameter {d:.6g} outside [{lo:.6g}, {hi:.6g})")
        for i in range(len(arcs)):
            for j in range(i + 1, len(arcs)):
                if _intervals_overlap(ivs[k][i], ivs[k][j], T) > tol * T:
                    problems.append(f"(ii) level {k}: arcs {i} and {j} overlap")
    ks = sorted(pre.levels)
    for x, k in enumerate(ks):
        for k2 in ks[x + 1:]:
            for i, big in enumerate(ivs[k]):
                for j, small in enumerate(ivs[k2]):
                    if _intervals_overlap(big, small, T) > tol * T and not _contained(small, big, T, tol * T):
                        problems.append(f"(iii) level {k} arc {i} meets level {k2} arc {j} without containing it")
    return problems


def prefiltration_from_cubes(ctx: MetricCtx, curve: Curve, forest: CubeForest,
                             A: float | None = None, samples_per_radius: int = 64,
                             check: bool = True) -> Prefiltration:
    """Arcs ``Lambda(Q(B))`` of every cube, grouped by level ``k = ceil(n / J)``.

    Cubes are generated by doubled balls ``2B``; the arcs of ``Q(2B)`` are
    the components that meet ``B``.  Their diameters lie in
    ``[r(B), 5 r(B)]``, and with ``r(B) = A 2^-n = L 2^(-kJ)`` where
    ``L = A 2^(kJ - n)`` the prefiltration bracket follows.
    """
    J = forest.J
    if not forest.cubes:
        return Prefiltration(curve, J, A or 1.0, {})
    levels: dict[int, list[Arc]] = {}
    Ls = set()
    for q in forest.cubes:
        B2 = q.ball
        half = B2.scaled(0.5)
        n = B2.n
        k = -((-n) // J)
        l = k * J - n
        r_half = half.radius
        Ls.add(round(r_half * 2.0 ** (k * J), 12))
        arcs = lambda_arcs(ctx, curve, q, half, samples_per_radius)
        levels.setdefault(k, []).extend(arcs)
    if len(Ls) != 1:
        raise PrefiltrationError(f"family mixes residues mod J: L values {sorted(Ls)}")
    L = Ls.pop()
    pre = Prefiltration(curve, J, L, {k: sorted(v, key=lambda a: a.a) for k, v in sorted(levels.items())})
    if check:
        problems = check_prefiltration(ctx, pre)
        if problems:
            raise PrefiltrationError(problems[0])
    return pre


def _vertex_params(curve: Curve, origin: float, laps: int = 3) -> np.ndarray:
    base = curve.t + (origin - origin % curve.T)
    return np.sort(np.concatenate([base + j * curve.T for j in range(-1, laps)]))


def synthetic_prefiltration(ctx: MetricCtx, curve: Curve, J: int, L: float, levels: int,
                            seed: int = 0, target: float = 2.0) -> Prefiltration:
    """Random nested prefiltration: arcs of diameter ``target L 2^(-nJ)`` separated by random gaps.

    Level 0 runs around the whole circle from a random origin; each finer
    level is placed inside the arcs of the previous one, so containment
    holds by construction and the bracket ``[U, 8U)`` holds for
    ``1 <= target < 8``.
    """
    if not (1.0 <= target < 8.0):
        raise ValueError("target must lie in [1, 8)")
    rng = np.random.default_rng(seed)
    T = curve.T
    s0 = float(rng.uniform(0, T))
    scanner = _DiamScanner(ctx, curve, _vertex_params(curve, s0))
    out: dict[int, list[Arc]] = {}
    parents = [(s0, s0 + T)]
    for n in range(levels):
        U = L * 2.0 ** (-n * J)
        arcs = []
        for pa, pb in parents:
            cur = pa + float(rng.uniform(0.0, 2.0)) * U
            while cur < pb:
                e = scanner.first_reaching(cur, pb, target * U)
                if e is None:
                    break
                arcs.append((cur, e))
                cur = e + float(rng.uniform(0.25, 3.0)) * U
        out[n] = [Arc(curve, a, b) for a, b in arcs]
        parents = arcs
        if not arcs:
            break
    return Prefiltration(curve, J, L, {k: v for k, v in out.items() if v})


# filtrations -------------------------------------------------------------------


@dataclass
class FArc:
    level: int
    a: float
    b: float
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    source: int | None = None  # index into the prefiltration level it extends
    kind: str = "extended"


@dataclass
class Filtration:
    curve: Curve
    J: int
    delta: float
    L: float
    m: int
    origin: float
    arcs: list[FArc] = field(default_factory=list)
    levels: dict[int, list[int]] = field(default_factory=dict)
    extension: dict[tuple[int, int], int] = field(default_factory=dict)
    _arc_cache: dict[int, Arc] = field(default_factory=dict, repr=False)

    def scale(self, n: int) -> float:
        return self.L * 2.0 ** (-n * self.J)

    def arc(self, i: int) -> Arc:
        if i not in self._arc_cache:
            f = self.arcs[i]
            self._arc_cache[i] = Arc(self.curve, f.a, f.b)
        return self._arc_cache[i]

    def diameter(self, ctx: MetricCtx, i: int) -> float:
        return self.arc(i).diameter(ctx)

    @property
    def max_level(self) -> int:
        return max(self.levels)

    def to_json(self) -> list[dict]:
        return [{"id": i, "level": f.level, "a": f.a, "b": f.b, "parent": f.parent, "kind": f.kind}
                for i, f in enumerate(self.arcs)]


class _DiamScanner:
    """Diameters of arcs ``[a, e]`` as ``e`` grows, over vertices and endpoints."""

    def __init__(self, ctx: MetricCtx, curve: Curve, vparams: np.ndarray):
        self.ctx = ctx
        self.curve = curve
        self.vparams = vparams

    def diam(self, a: float, b: float) -> float:
        v = self.vparams[np.searchsorted(self.vparams, a, "right"):np.searchsorted(self.vparams, b, "left")]
        return point_set_diameter(self.ctx, self.curve(np.concatenate([[a], v, [b]])))

    def first_reaching(self, a: float, b: float, target: float) -> float | None:
        """Smallest (up to bisection) ``e`` in ``(a, b]`` with ``diam([a, e]) >= target``."""
        ctx = self.ctx
        lo_i = np.searchsorted(self.vparams, a, "right")
        hi_i = np.searchsorted(self.vparams, b, "left")
        stops = np.concatenate([self.vparams[lo_i:hi_i], [b]])
        pts = self.curve.point(a)[None, :]
        D = 0.0
        prev = a
        for e in stops:
            p = self.curve.point(e)[None, :]
            De = max(D, float(distance(ctx, p, pts).max()))
            if De >= target:
                lo, hi = prev, e
                for _ in range(BISECT_ITERS):
                    mid = 0.5 * (lo + hi)
                    q = self.curve.point(mid)
                    if max(D, float(distance(ctx, q, pts).max())) >= target:
                        hi = mid
                    else:
                        lo = mid
                return hi
            pts = np.concatenate([pts, p])
            D = De
            prev = e
        return None


def complete_filtration(ctx: MetricCtx, pre: Prefiltration, delta: float = 2.0 ** -10,
                        min_J: int = 10) -> Filtration:
    """Extend a prefiltration to a filtration covering the circle at every level.

    Level by level, each parent arc (the whole circle at the coarsest level)
    is split at the prefiltration arcs it contains.  A leftover gap of
    diameter below ``delta U`` joins the arc before it (the one after it when
    it starts the parent), a gap with diameter in ``[delta U, 16 U)`` becomes
    an arc, and a larger gap is cut greedily into pieces of diameter about
    ``4U``, with cuts pushed past any finer prefiltration arc they would
    split.  ``U = L 2^(-nJ)``.

    ``J >= 10`` guarantees the greedy cuts stay inside the diameter bracket;
    ``min_J`` lowers that floor for small multi-level instances, whose
    output is still audited by :func:`audit_filtration`.
    """
    if not (0 < delta < 1):
        raise ValueError("delta must lie in (0, 1)")
    if pre.J < min_J:
        raise ValueError(f"J must be at least {min_J}")
    if pre.is_empty():
        raise PrefiltrationError("cannot complete an empty prefiltration")
    curve = pre.curve
    T = curve.T
    m = pre.m
    origin = min(arc.a for arc in pre.levels[m])
    filt = Filtration(curve, pre.J, delta, pre.L, m, origin)
    # unwrapped F0 intervals per level
    F0: dict[int, list[tuple[float, float, int]]] = {}
    for k, arcs in pre.levels.items():
        ivs = []
        for i, arc in enumerate(arcs):
            a, b = _unwrap_into(arc.a, arc.b, origin, T)
            ivs.append((a, b, i))
        F0[k] = sorted(ivs)
    scanner = _DiamScanner(ctx, curve, _vertex_params(curve, origin))
    finer_cache: dict[int, np.ndarray] = {}

    def finer_arcs(n):
        if n not in finer_cache:
            rows = [(a, b) for k, ivs in F0.items() if k > n for a, b, _ in ivs]
            finer_cache[n] = np.array(rows).reshape(-1, 2)
        return finer_cache[n]

    def push_out_of_finer(e, n, limit):
        fa = finer_arcs(n)
        if len(fa) == 0:
            return e
        while True:
            hit = (fa[:, 0] < e) & (e < fa[:, 1])
            if not hit.any():
                return e
            e = min(float(fa[hit, 1].max()), limit)
            if e >= limit:
                return limit

    def partition(a, b, n):
        U = filt.scale(n)
        cuts = [a]
        cur = a
        while True:
            e = scanner.first_reaching(cur, b, 4 * U)
            if e is None or e >= b:
                break
            e = push_out_of_finer(e, n, b)
            if e >= b:
                break
            cuts.append(e)
            cur = e
        pieces = [[cuts[i], cuts[i + 1]] for i in range(len(cuts) - 1)]
        rem = [cuts[-1], b]
        if pieces and scanner.diam(rem[0], rem[1]) < U:
            pieces[-1][1] = b
        else:
            pieces.append(rem)
        return pieces

    levels = sorted(k for k in pre.levels if k >= m)
    all_levels = list(range(m, max(levels) + 1))
    parents = [(origin, origin + T, None)]
    for n in all_levels:
        U = filt.scale(n)
        new_ids = []
        f0 = F0.get(n, [])
        for pa, pb, pid in parents:
            inside = [(a, b, i) for a, b, i in f0 if pa - 1e-12 <= a and b <= pb + 1e-12]
            # segments of the parent in flow order: ('f0', a, b, i) or ('gap', a, b)
            segs = []
            cur = pa
            for a, b, i in inside:
                if a > cur:
                    segs.append(["gap", cur, a, None])
                segs.append(["f0", a, b, i])
                cur = b
            if cur < pb:
                segs.append(["gap", cur, pb, None])
            out = []  # [a, b, source, kind]
            pending_right = None
            for kind, a, b, i in segs:
                if kind == "f0":
                    start = pending_right if pending_right is not None else a
                    pending_right = None
                    out.append([start, b, i, "extended"])
                    continue
                D = scanner.diam(a, b)
                if D < delta * U and (out or inside):
                    if out and out[-1][3] == "extended" and out[-1][1] == a:
                        out[-1][1] = b
                    else:
                        pending_right = a
                elif D < 16 * U:
                    out.append([a, b, None, "gap"])
                else:
                    for x, y in partition(a, b, n):
                        out.append([x, y, None, "piece"])
            if pending_right is not None:
                # a small leading gap in a parent with no later arc cannot happen; keep it whole
                out.append([pending_right, pb, None, "gap"])
            for a, b, src, kind in out:
                idx = len(filt.arcs)
                filt.arcs.append(FArc(n, a, b, pid, [], src, kind))
                if pid is not None:
                    filt.arcs[pid].children.append(idx)
                if src is not None:
                    filt.extension[(n, src)] = idx
                new_ids.append(idx)
        filt.levels[n] = new_ids
        parents = [(filt.arcs[i].a, filt.arcs[i].b, i) for i in new_ids]
    return filt


def audit_filtration(ctx: MetricCtx, filt: Filtration, pre: Prefiltration, tol: float = 1e-9) -> dict:
    """Check the six filtration properties; returns counts and violations."""
    T = filt.curve.T
    problems = []
    F0 = {k: [_unwrap_into(arc.a, arc.b, filt.origin, T) for arc in arcs] for k, arcs in pre.levels.items()}
    for n, ids in filt.levels.items():
        U = filt.scale(n)
        ivs = sorted((filt.arcs[i].a, filt.arcs[i].b, i) for i in ids)
        # (4) cover, (3) disjoint except endpoints
        if abs(ivs[0][0] - filt.origin) > tol * T or abs(ivs[-1][1] - (filt.origin + T)) > tol * T:
            problems.append(f"(4) level {n}: arcs do not start/end at the origin")
        for (a1, b1, i1), (a2, b2, i2) in zip(ivs, ivs[1:]):
            if a2 > b1 + tol * T:
                problems.append(f"(4) level {n}: gap between arcs {i1} and {i2}")
            if a2 < b1 - tol * T:
                problems.append(f"(3) level {n}: arcs {i1} and {i2} overlap")
        for a, b, i in ivs:
            d = filt.diameter(ctx, i)
            if not (filt.delta * U * (1 - tol) <= d < 16 * U):
                problems.append(f"(2) level {n} arc {i}: diameter {d:.6g} outside [{filt.delta * U:.6g}, {16 * U:.6g})")
            # (1) unique parent
            if n > filt.m:
                f = filt.arcs[i]
                owners = [j for j in filt.levels[n - 1]
                          if filt.arcs[j].a - tol * T <= f.a and f.b <= filt.arcs[j].b + tol * T]
                if owners != [f.parent]:
                    problems.append(f"(1) level {n} arc {i}: parents {owners}, recorded {f.parent}")
        # (5) and (6)
        targets = []
        for j, (a0, b0) in enumerate(F0.get(n, [])):
            key = (n, j)
            if key not in filt.extension:
                problems.append(f"(5) level {n}: prefiltration arc {j} not extended")
                continue
            i = filt.extension[key]
            f = filt.arcs[i]
            targets.append(i)
            if not (f.a <= a0 + tol * T and b0 <= f.b + tol * T):
                problems.append(f"(5) level {n}: arc {i} does not contain prefiltration arc {j}")
                continue
            for x, y in ((f.a, a0), (b0, f.b)):
                if y - x > tol * T:
                    dd = Arc(filt.curve, x, y).diameter(ctx)
                    if dd >= filt.delta * U:
                        problems.append(f"(5) level {n} arc {i}: extension piece of diameter {dd:.6g}")
        if len(set(targets)) != len(targets):
            problems.append(f"(6) level {n}: two prefiltration arcs share an extension")
    return {"levels": len(filt.levels), "arcs": len(filt.arcs), "problems": problems}


def lambda_prime(filt: Filtration, level: int, index: int) -> int:
    """Filtration arc extending prefiltration arc ``index`` of ``level``."""
    try:
        return filt.extension[(level, index)]
    except KeyError:
        raise LookupError(f"prefiltration arc {index} at level {level} is not registered") from None


def children(filt: Filtration, i: int, k: int = 1) -> list[int]:
    """``F_{tau,k}``: descendants ``k`` levels below ``tau`` (``k = 0`` gives ``[tau]``)."""
    out = [i]
    for _ in range(k):
        out = [c for j in out for c in filt.arcs[j].children]
    return out


# increments --------------------------------------------------------------


def _in_frame(filt: Filtration, i: int, params) -> np.ndarray:
    """``gamma(a_tau)^-1 gamma(s)`` for unwrapped filtration parameters inside arc ``i``."""
    arc = filt.arc(i)
    return arc.local(np.asarray(params, dtype=float) - (filt.arcs[i].a - arc.a))


def d_tau(ctx: MetricCtx, filt: Filtration, i: int, samples: int = 33) -> float:
    """``max over children tau'`` of ``sup_{z in L_tau'} d(z, L_tau)``; 0 for a leaf.

    Computed in the frame of ``gamma(a_tau)`` with 33 samples per child
    segment plus golden-section refinement.
    """
    kids = filt.arcs[i].children
    if not kids:
        return 0.0
    ends = _in_frame(filt, i, [[filt.arcs[c].a, filt.arcs[c].b] for c in kids])
    top = _in_frame(filt, i, [filt.arcs[i].a, filt.arcs[i].b])
    return max(_kernels.segment_sup(e[0], e[1], top[0], top[1], float(ctx.eta), samples, 60) for e in ends)


def deviation(ctx: MetricCtx, filt: Filtration, i: int) -> float:
    """``beta(tau) diam(tau) = sup_t d(gamma(t), L_tau)`` in the arc's own frame."""
    P = np.ascontiguousarray(filt.arc(i).local_vertex_points())
    return float(_kernels.polyline_chord_sups(P, float(ctx.eta), 33, 60)[0])


def chord_sums(ctx: MetricCtx, filt: Filtration) -> dict[int, float]:
    """``sum over F_n of d(gamma(a), gamma(b))`` for each level."""
    out = {}
    for n, ids in filt.levels.items():
        a = filt.curve(np.array([filt.arcs[i].a for i in ids]))
        b = filt.curve(np.array([filt.arcs[i].b for i in ids]))
        out[n] = float(distance(ctx, a, b).sum())
    return out


def telescoping_bound(ctx: MetricCtx, filt: Filtration, i: int, dcache: dict | None = None,
                      tol: float = 1e-10) -> dict:
    """Compare ``beta(tau) diam(tau)`` with the chain bound down to the finest level.

    The bound is ``sum_k max_{tau' in F_{tau,k}} d_tau' + max_{F_{tau,K}} beta diam``,
    where ``K`` is the depth of the finest level below ``tau``.
    """
    dcache = {} if dcache is None else dcache

    def dt(j):
        if j not in dcache:
            dcache[j] = d_tau(ctx, filt, j)
        return dcache[j]

    lhs = deviation(ctx, filt, i)
    level = filt.arcs[i].level
    K = filt.max_level - level
    chain = 0.0
    for k in range(K):
        chain += max(dt(j) for j in children(filt, i, k))
    tail = max(deviation(ctx, filt, j) for j in children(filt, i, K))
    diam = filt.diameter(ctx, i)
    return {"lhs": lhs, "chain": chain, "tail": tail, "bound": chain + tail,
            "crude_tail": 2.0 * max(filt.diameter(ctx, j) for j in children(filt, i, K)),
            "diam": diam, "ok": lhs <= chain + tail + tol * diam}


def modified_four_point(ctx: MetricCtx, filt: Filtration, i: int, constant: float | None = None) -> dict | None:
    """``d_tau^4 / diam^3`` against ``C (sum over F_{tau,2} of chords - chord(tau))``.

    Only defined when ``tau`` has grandchildren.  ``C`` defaults to
    ``1e14 2^(4J+64) / eta^2``.
    """
    grand = children(filt, i, 2)
    if not grand or grand == [i]:
        return None
    if constant is None:
        constant = 1e14 * 2.0 ** (4 * filt.J + 64) / ctx.eta ** 2
    diam = filt.diameter(ctx, i)
    ends = _in_frame(filt, i, [[filt.arcs[j].a, filt.arcs[j].b] for j in grand])
    top = _in_frame(filt, i, [filt.arcs[i].a, filt.arcs[i].b])
    excess = float(distance(ctx, ends[:, 0], ends[:, 1]).sum()) - float(distance(ctx, top[0], top[1]))
    lhs = d_tau(ctx, filt, i) ** 4 / diam ** 3
    # the grandchildren partition tau, so the excess is >= 0 up to roundoff
    tol = 1e-12 * diam
    clean = max(excess, 0.0)
    rhs = constant * clean
    needed = lhs / clean if clean > 0 else (0.0 if lhs <= tol else math.inf)
    return {"lhs": lhs, "rhs": rhs, "excess": excess, "needed_constant": needed,
            "ok": excess >= -tol and lhs <= rhs + tol}
