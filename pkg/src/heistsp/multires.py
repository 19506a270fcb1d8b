"""
Separated nets, multiresolution ball families, and cube forests.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .heisenberg import MetricCtx, as_points, distance, inverse, koranyi_norm, multiply

__all__ = [
    "NetHierarchy",
    "Ball",
    "Cube",
    "CubeForest",
    "build_nets",
    "check_nets",
    "multiresolution",
    "filter_G",
    "split_families",
    "family_report",
    "build_cubes",
    "audit_cubes",
]


# nets --------------------------------------------------------------------


@dataclass
class NetHierarchy:
    """Nested ``2^-n``-separated nets ``X_n`` of a finite set ``K``.

    ``levels[n]`` holds indices into ``K``; each level's list starts with
    the previous level's list.
    """

    K: np.ndarray
    levels: dict[int, np.ndarray]

    def points(self, n: int) -> np.ndarray:
        return self.K[self.levels[n]]

    @property
    def level_range(self) -> range:
        ks = sorted(self.levels)
        return range(ks[0], ks[-1] + 1)


def _greedy_extend(ctx: MetricCtx, K: np.ndarray, seed: list[int], sep: float) -> list[int]:
    # Koranyi distance dominates planar distance, so candidates that could be
    # closer than sep live in neighbouring planar cells of side sep.
    cells: dict[tuple[int, int], list[int]] = defaultdict(list)
    chosen = list(seed)
    # exact python ints: K / sep can exceed the int64 range at deep levels
    key = [(int(a), int(b)) for a, b in np.floor(K[:, :2] / sep).tolist()]
    for i in chosen:
        cells[key[i]].append(i)
    in_net = np.zeros(len(K), dtype=bool)
    in_net[chosen] = True
    for i in range(len(K)):
        if in_net[i]:
            continue
        kx, ky = key[i]
        near = [j for dx in (-1, 0, 1) for dy in (-1, 0, 1) for j in cells.get((kx + dx, ky + dy), ())]
        if near and distance(ctx, K[i], K[near]).min() < sep:
            continue
        chosen.append(i)
        in_net[i] = True
        cells[(kx, ky)].append(i)
    return chosen


def build_nets(ctx: MetricCtx, K, n_range) -> NetHierarchy:
    """Greedy nets in input order, each level seeded with the previous one."""
    K = as_points(K).reshape(-1, 3)
    if len(K) == 0:
        raise ValueError("K must be nonempty")
    levels: dict[int, np.ndarray] = {}
    prev: list[int] = []
    for n in n_range:
        prev = _greedy_extend(ctx, K, prev, 2.0 ** (-n))
        levels[n] = np.array(prev, dtype=int)
    return NetHierarchy(K, levels)


def check_nets(ctx: MetricCtx, nets: NetHierarchy, tol: float = 1e-12) -> list[str]:
    """Return a list of violated net invariants (empty when all hold)."""
    problems = []
    prev = None
    for n in sorted(nets.levels):
        idx = nets.levels[n]
        X = nets.K[idx]
        sep = 2.0 ** (-n)
        if len(X) > 1:
            d = distance(ctx, X[:, None, :], X[None, :, :])
            np.fill_diagonal(d, np.inf)
            if d.min() < sep * (1 - tol):
                problems.append(f"level {n}: separation {d.min():.3g} < {sep:.3g}")
        cover = np.min(distance(ctx, nets.K[:, None, :], X[None, :, :]), axis=1)
        if cover.max() >= sep * (1 + tol):
            problems.append(f"level {n}: covering radius {cover.max():.3g} >= {sep:.3g}")
        if prev is not None and not np.array_equal(idx[:len(prev)], prev):
            problems.append(f"level {n}: does not extend level {n - 1}")
        prev = idx
    return problems


# balls -------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    n: int
    index: int = -1

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    @property
    def diameter(self) -> float:
        # a Koranyi ball of radius r has diameter exactly 2r
        return 2.0 * self.radius

    def scaled(self, lam: float) -> "Ball":
        """Concentric ball ``lam B``."""
        return Ball(self.center, self.radius * lam, self.n, self.index)

    def contains(self, ctx: MetricCtx, p, tol: float = 1e-12) -> np.ndarray:
        return distance(ctx, self.c, p) <= self.radius * (1 + tol)


def multiresolution(nets: NetHierarchy, A: float = 10.0) -> list[Ball]:
    """One ball ``B(x, A 2^-n)`` per net point ``x`` of each level ``n``."""
    balls = []
    for n in sorted(nets.levels):
        for i in nets.levels[n]:
            balls.append(Ball(tuple(nets.K[i]), A * 2.0 ** (-n), n, len(balls)))
    return balls


def filter_G(balls: list[Ball], r_max: float = 0.01) -> list[Ball]:
    return [b for b in balls if b.radius < r_max]


# families ----------------------------------------------------------------


def _centers(balls) -> np.ndarray:
    return np.array([b.center for b in balls], dtype=float).reshape(-1, 3)


def split_families(ctx: MetricCtx, balls: list[Ball], J: int, kappa: float = 3.0,
                   C: float | None = None) -> list[list[Ball]]:
    """Partition balls into families that are well separated at every radius.

    Balls are grouped by ``n mod J`` (so radius ratios within a family are
    powers of ``2^J``), then greedily coloured level by level so that two
    same-radius balls share a colour only when ``d(c1, c2) - 2r > kappa r``,
    a lower bound for the distance between the balls as sets.  ``C`` is the
    multiresolution constant; it only affects how many colours appear.
    """
    if J < 1:
        raise ValueError("J must be positive")
    by_level: dict[int, list[Ball]] = defaultdict(list)
    for b in balls:
        by_level[b.n].append(b)
    families: dict[tuple[int, int], list[Ball]] = defaultdict(list)
    for n in sorted(by_level):
        group = by_level[n]
        X = _centers(group)
        r = group[0].radius
        d = distance(ctx, X[:, None, :], X[None, :, :])
        conflict = d - 2 * r <= kappa * r
        colour = np.full(len(group), -1)
        for i in range(len(group)):
            used = set(colour[conflict[i] & (colour >= 0)].tolist())
            k = 0
            while k in used:
                k += 1
            colour[i] = k
        for b, k in zip(group, colour):
            families[(n % J, int(k))].append(b)
    return [families[key] for key in sorted(families)]


def family_report(ctx: MetricCtx, families: list[list[Ball]], J: int, kappa: float,
                  n_input: int | None = None) -> dict:
    """Check the family postconditions; returns counts and any violations."""
    problems = []
    seen = 0
    for fi, fam in enumerate(families):
        seen += len(fam)
        ns = {b.n for b in fam}
        if len({n % J for n in ns}) > 1:
            problems.append(f"family {fi}: radius ratios outside 2^(JZ)")
        for n in ns:
            same = [b for b in fam if b.n == n]
            if len(same) < 2:
                continue
            X = _centers(same)
            r = same[0].radius
            d = distance(ctx, X[:, None, :], X[None, :, :])
            np.fill_diagonal(d, np.inf)
            if (d - 2 * r).min() <= kappa * r:
                problems.append(f"family {fi}: level {n} balls closer than kappa r")
    ids = [b.index for fam in families for b in fam]
    if len(set(ids)) != len(ids):
        problems.append("a ball appears in more than one family")
    if n_input is not None and seen != n_input:
        problems.append(f"families hold {seen} balls, input had {n_input}")
    return {"D_prime": len(families), "balls": seen, "problems": problems}


# cubes -------------------------------------------------------------------


@dataclass
class Cube:
    """Union of member balls of one family, generated by ``balls[gen]``."""

    forest: "CubeForest" = field(repr=False)
    gen: int
    members: np.ndarray
    parent: int | None = None
    children: list[int] = field(default_factory=list)

    @property
    def ball(self) -> Ball:
        return self.forest.balls[self.gen]

    @property
    def radius(self) -> float:
        return self.ball.radius

    @property
    def level(self) -> int:
        return self.ball.n

    def member_balls(self) -> list[Ball]:
        return [self.forest.balls[i] for i in self.members]

    def contains_point(self, ctx: MetricCtx, p, tol: float = 1e-12) -> np.ndarray:
        p = as_points(p)
        c = self.forest.centers[self.members]
        r = self.forest.radii[self.members]
        d = distance(ctx, p[..., None, :], c)
        return np.any(d <= r * (1 + tol), axis=-1)

    def diameter(self, ctx: MetricCtx) -> float:
        """``max d(c_i, c_j) + r_i + r_j`` over member pairs; exact for a single ball."""
        c = self.forest.centers[self.members]
        r = self.forest.radii[self.members]
        d = distance(ctx, c[:, None, :], c[None, :, :]) + r[:, None] + r[None, :]
        return float(d.max())


@dataclass
class CubeForest:
    balls: list[Ball]
    J: int
    cubes: list[Cube] = field(default_factory=list)

    def __post_init__(self):
        self.centers = _centers(self.balls)
        self.radii = np.array([b.radius for b in self.balls], dtype=float)

    @property
    def roots(self) -> list[int]:
        return [i for i, q in enumerate(self.cubes) if q.parent is None]

    def to_json(self) -> list[dict]:
        return [{"id": i, "level": q.level, "radius": q.radius, "center": list(q.ball.center),
                 "members": [int(m) for m in q.members], "parent": q.parent}
                for i, q in enumerate(self.cubes)]


def _touching(ctx: MetricCtx, centers, radii, chunk: int = 1024) -> list[np.ndarray]:
    """Neighbour lists for the predicate ``d(c_i, c_j) < r_i + r_j``."""
    out = []
    for i in range(0, len(centers), chunk):
        d = distance(ctx, centers[i:i + chunk, None, :], centers[None, :, :])
        hit = d < radii[i:i + chunk, None] + radii[None, :]
        out.extend(np.flatnonzero(row) for row in hit)
    return out


def build_cubes(ctx: MetricCtx, family: list[Ball], J: int) -> CubeForest:
    """Cube forest of one family.

    ``Q(B)`` is the fixed point of repeatedly absorbing family balls of
    radius at most ``r(B)`` that meet the current union (balls are taken to
    meet when ``d(c, c') < r + r'``).  Equivalently it is the connected
    component of ``B`` among such balls, which is how it is computed: radii
    are processed in increasing order with a union-find.
    """
    forest = CubeForest(list(family), J)
    nb = len(family)
    if nb == 0:
        return forest
    nbrs = _touching(ctx, forest.centers, forest.radii)
    parent = list(range(nb))
    comp_members: dict[int, list[int]] = {i: [i] for i in range(nb)}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri == rj:
            return
        if len(comp_members[ri]) < len(comp_members[rj]):
            ri, rj = rj, ri
        parent[rj] = ri
        comp_members[ri].extend(comp_members.pop(rj))

    order = np.argsort(forest.radii, kind="stable")
    active = np.zeros(nb, dtype=bool)
    cube_of: dict[int, int] = {}
    pos = 0
    while pos < nb:
        r = forest.radii[order[pos]]
        level = []
        while pos < nb and forest.radii[order[pos]] == r:
            level.append(int(order[pos]))
            pos += 1
        for i in level:
            active[i] = True
        for i in level:
            for j in nbrs[i]:
                if active[j] and j != i:
                    union(i, j)
        for i in level:
            members = np.array(sorted(comp_members[find(i)]), dtype=int)
            cube_of[i] = len(forest.cubes)
            forest.cubes.append(Cube(forest, i, members))
    # parent: the smallest strictly larger cube containing the generating ball
    by_radius_desc = sorted(range(len(forest.cubes)), key=lambda k: -forest.cubes[k].radius)
    owner: dict[int, int] = {}
    for k in by_radius_desc:
        q = forest.cubes[k]
        if q.gen in owner:
            q.parent = owner[q.gen]
        for m in q.members:
            if forest.radii[m] < q.radius:
                owner[int(m)] = k
    for k, q in enumerate(forest.cubes):
        if q.parent is not None:
            forest.cubes[q.parent].children.append(k)
    return forest


def audit_cubes(ctx: MetricCtx, forest: CubeForest, kappa: float = 3.0, boundary_samples: int = 100,
                seed: int = 0, tol: float = 1e-9) -> dict:
    """Check containment, nesting and separation of a cube forest.

    Containment ``B subset Q subset (1 + 2^(2-J)) B`` is checked analytically
    on member balls and by sampling points on the member balls' boundaries.
    """
    rng = np.random.default_rng(seed)
    J = forest.J
    problems = []
    cubes = forest.cubes
    factor = 1.0 + 2.0 ** (-J + 2)
    # unit Koranyi sphere samples: delta_{1/N(g)} g
    g = rng.normal(size=(boundary_samples, 3))
    N = np.sqrt(np.sqrt((g[:, 0] ** 2 + g[:, 1] ** 2) ** 2 + ctx.eta * g[:, 2] ** 2))
    unit = g * np.column_stack([1 / N, 1 / N, 1 / N ** 2])
    for k, q in enumerate(cubes):
        cB, rB = forest.centers[q.gen], forest.radii[q.gen]
        if q.gen not in set(q.members.tolist()):
            problems.append(f"cube {k}: generating ball missing")
        # work in the frame of cB (left-invariance), where B is centred at the exact origin
        mc = multiply(inverse(cB), forest.centers[q.members])
        mr = forest.radii[q.members]
        reach = koranyi_norm(ctx, mc) + mr
        if reach.max() > factor * rB * (1 + tol):
            problems.append(f"cube {k}: member reaches {reach.max() / rB:.6g} r(B) > {factor:.6g}")
        # boundary points of every member must sit inside the enlarged ball
        pick = rng.integers(len(q.members), size=boundary_samples)
        pts = multiply(mc[pick], unit * np.column_stack([mr[pick], mr[pick], mr[pick] ** 2]))
        if koranyi_norm(ctx, pts).max() > factor * rB * (1 + tol):
            problems.append(f"cube {k}: sampled boundary point outside (1 + 2^(2-J)) B")
        # B itself: its boundary points are in the member ball B
        bpts = unit * np.array([rB, rB, rB * rB])
        inside = np.any(distance(ctx, bpts[:, None, :], mc[None, :, :]) <= mr * (1 + tol), axis=1)
        if not inside.all():
            problems.append(f"cube {k}: B not contained in Q")
    # nesting and separation via member-ball predicates
    member_sets = [set(q.members.tolist()) for q in cubes]
    n_pairs = 0
    for i in range(len(cubes)):
        for j in range(i + 1, len(cubes)):
            qi, qj = cubes[i], cubes[j]
            ci, ri = forest.centers[qi.members], forest.radii[qi.members]
            cj, rj = forest.centers[qj.members], forest.radii[qj.members]
            gap = distance(ctx, ci[:, None, :], cj[None, :, :]) - ri[:, None] - rj[None, :]
            if qi.radius == qj.radius:
                n_pairs += 1
                if gap.min() <= (kappa - 1) * qi.radius:
                    problems.append(f"cubes {i},{j}: same radius but gap {gap.min():.3g} <= (kappa-1) r")
            elif gap.min() < 0:
                big, small = (i, j) if qi.radius > qj.radius else (j, i)
                if not member_sets[small] <= member_sets[big]:
                    problems.append(f"cubes {big},{small}: intersect without nesting")
    return {"cubes": len(cubes), "same_radius_pairs": n_pairs, "problems": problems}
