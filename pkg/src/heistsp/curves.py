"""
Arclength-parametrised polyline curves in the Heisenberg group.

A :class:`Curve` is a closed loop on a parameter circle of circumference
``T``.  Consecutive vertices are joined by horizontal segments, and the
last vertex connects back to the first.  Open paths are stored as the
out-and-back loop that retraces them, which keeps the parametrisation
1-Lipschitz and surjective onto the path image.
"""

from __future__ import annotations

import bisect
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .heisenberg import (
    MetricCtx,
    HorizontalSegment,
    as_points,
    dilate,
    multiply,
    dist_to_horizontal,
    distance,
    horizontal_segment,
    segment_frame,
    segment_point,
)

LIPSCHITZ_TOL = 1e-9
ARC_INTERIOR_SAMPLES = 8


class DegenerateArcError(ValueError):
    pass


def point_set_diameter(ctx: MetricCtx, pts, chunk: int = 2048) -> float:
    """Largest pairwise Koranyi distance in a point set."""
    pts = as_points(pts)
    n = len(pts)
    if n < 2:
        return 0.0
    best = 0.0
    for i in range(0, n, chunk):
        block = pts[i:i + chunk]
        # only pairs (i, j) with j >= start of the block are needed
        d = distance(ctx, block[:, None, :], pts[None, i:, :])
        best = max(best, float(d.max()))
    return best


def polyline_length(ctx: MetricCtx, pts, closed: bool = False) -> float:
    pts = as_points(pts)
    if len(pts) < 2:
        return 0.0
    total = float(distance(ctx, pts[:-1], pts[1:]).sum())
    if closed:
        total += float(distance(ctx, pts[-1], pts[0]))
    return total


@dataclass(frozen=True, eq=False)
class Curve:
    """Closed polyline with vertex parameters ``t`` on the circle ``[0, T)``.

    ``n_path`` is set for curves built from an open path: the first
    ``n_path`` vertices are the path and the remaining ones retrace it.
    """

    t: np.ndarray
    points: np.ndarray
    T: float
    n_path: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        pts = as_points(self.points)
        if pts.ndim != 2 or len(t) != len(pts) or len(pts) < 1:
            raise ValueError("t and points must have matching lengths")
        if len(t) > 1 and np.any(np.diff(t) < 0):
            raise ValueError("vertex parameters must be nondecreasing")
        if not (self.T > 0 and t[0] >= 0 and t[-1] <= self.T):
            raise ValueError("vertex parameters must lie in [0, T] with T > 0")
        t.flags.writeable = False
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "points", pts)

    # construction -------------------------------------------------------

    @classmethod
    def from_loop(cls, points, meta: dict | None = None) -> "Curve":
        """Closed loop through ``points`` parametrised by segment length."""
        pts = as_points(points)
        if len(pts) == 1:
            return cls(np.zeros(1), pts, 1.0, meta=dict(meta or {}))
        nxt = np.roll(pts, -1, axis=0)
        _, _, gaps = segment_frame(pts, nxt)
        t = np.concatenate([[0.0], np.cumsum(gaps[:-1])])
        T = float(gaps.sum())
        if T == 0:
            T = 1.0
        return cls(t, pts, T, meta=dict(meta or {}))

    @classmethod
    def from_path(cls, points, meta: dict | None = None) -> "Curve":
        """Open path, stored as the loop that runs out along it and back."""
        pts = as_points(points)
        if len(pts) < 2:
            return cls.from_loop(pts, meta)
        loop = np.concatenate([pts, pts[-2:0:-1]], axis=0)
        c = cls.from_loop(loop, meta)
        return cls(c.t, c.points, c.T, n_path=len(pts), meta=c.meta)

    # basic properties ---------------------------------------------------

    @property
    def closed(self) -> bool:
        return self.n_path is None

    @property
    def path(self) -> np.ndarray:
        """Vertices of the underlying path (the loop itself when closed)."""
        return self.points if self.n_path is None else self.points[:self.n_path]

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def frames(self):
        """Per-edge ``(start, unit direction, horizontal length)`` of the loop."""
        nxt = np.roll(self.points, -1, axis=0)
        return segment_frame(self.points, nxt)

    @cached_property
    def gaps(self) -> np.ndarray:
        """Parameter length of each loop edge (last entry is the closing edge)."""
        return np.diff(np.concatenate([self.t, [self.T + self.t[0]]]))

    def lipschitz_defect(self, ctx: MetricCtx) -> float:
        """Largest ``d(p_k, p_{k+1}) - (t_{k+1} - t_k)`` over loop edges."""
        if len(self.points) < 2:
            return 0.0
        nxt = np.roll(self.points, -1, axis=0)
        return float((distance(ctx, self.points, nxt) - self.gaps).max())

    def check_lipschitz(self, ctx: MetricCtx, tol: float = LIPSCHITZ_TOL) -> None:
        defect = self.lipschitz_defect(ctx)
        if defect > tol:
            raise ValueError(f"curve is not 1-Lipschitz: excess {defect:.3e}")

    # evaluation ---------------------------------------------------------

    def locate(self, s):
        """Edge index and offset along that edge for parameters ``s`` (taken mod T)."""
        s = np.mod(np.asarray(s, dtype=float), self.T)
        k = np.searchsorted(self.t, s, side="right") - 1
        # parameters before the first vertex belong to the closing edge
        wrap = k < 0
        k = np.where(wrap, len(self.t) - 1, k)
        off = np.where(wrap, s + self.T - self.t[-1], s - self.t[k])
        return k, off

    def __call__(self, s) -> np.ndarray:
        """Point ``gamma(s)``."""
        k, off = self.locate(s)
        start, u, h = self.frames
        off = np.minimum(off, h[k])
        return segment_point(start[k], u[k], off)

    @cached_property
    def _tables(self):
        start, u, h = self.frames
        return self.t.tolist(), start.tolist(), u.tolist(), h.tolist()

    def point(self, s: float) -> np.ndarray:
        """Scalar fast path of ``gamma(s)``."""
        t, start, u, h = self._tables
        s = float(s) % self.T
        k = bisect.bisect_right(t, s) - 1
        if k < 0:
            k = len(t) - 1
            off = s + self.T - t[-1]
        else:
            off = s - t[k]
        off = min(off, h[k])
        x, y, z = start[k]
        dx, dy = off * u[k][0], off * u[k][1]
        return np.array([x + dx, y + dy, z + 0.5 * (x * dy - dx * y)])

    def dilate(self, lam: float) -> "Curve":
        """Image under ``delta_lam``; parameters scale by ``lam`` to stay arclength."""
        if lam <= 0:
            raise ValueError("dilation factor must be positive")
        return Curve(self.t * lam, dilate(self.points, lam), self.T * lam, self.n_path, dict(self.meta))

    def vertex_diameter(self, ctx: MetricCtx) -> float:
        return point_set_diameter(ctx, self.path)

    def normalized(self, ctx: MetricCtx) -> tuple["Curve", float]:
        """Dilate to image diameter 1; returns the curve and the factor used."""
        diam = self.vertex_diameter(ctx)
        if diam == 0:
            return self, 1.0
        lam = 1.0 / diam
        return self.dilate(lam), lam

    def resampled(self, max_step: float) -> "Curve":
        """Insert vertices along each edge so no edge is longer than ``max_step``."""
        if max_step <= 0:
            raise ValueError("max_step must be positive")
        start, u, h = self.frames
        gaps = self.gaps
        counts = np.maximum(1, np.ceil(gaps / max_step).astype(int))
        if self.n_path is not None:
            # resample the path and rebuild the retrace so it stays symmetric
            path_edges = self.n_path - 1
            pieces = []
            for k in range(path_edges):
                frac = np.arange(counts[k]) / counts[k]
                pieces.append(segment_point(start[k], u[k], frac * h[k]))
            pieces.append(self.points[self.n_path - 1][None, :])
            return Curve.from_path(np.concatenate(pieces), self.meta)
        pieces = []
        ts = []
        for k in range(len(self.points)):
            frac = np.arange(counts[k]) / counts[k]
            pieces.append(segment_point(start[k], u[k], frac * h[k]))
            ts.append(self.t[k] + frac * gaps[k])
        return Curve(np.concatenate(ts), np.concatenate(pieces), self.T, None, dict(self.meta))


def curve_length(ctx: MetricCtx, c: Curve) -> float:
    """Length of the curve: the path length for open paths, loop length when closed."""
    if c.n_path is not None:
        return polyline_length(ctx, c.path)
    return polyline_length(ctx, c.points, closed=True)


def param_length(c: Curve) -> float:
    """Length of the parametrising loop, i.e. the circumference of its domain."""
    return float(c.T)


# arcs --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Arc:
    """Domain interval ``[a, b]`` of a curve, with ``0 <= a < T`` and ``a <= b <= a + T``."""

    curve: Curve
    a: float
    b: float

    def __post_init__(self):
        T = self.curve.T
        a = float(self.a)
        b = float(self.b)
        if b < a or b - a > T * (1 + 1e-12):
            raise ValueError(f"invalid arc [{a}, {b}] on circle of length {T}")
        shift = np.floor(a / T) * T
        object.__setattr__(self, "a", a - shift)
        object.__setattr__(self, "b", b - shift)

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def start(self) -> np.ndarray:
        return self.curve(self.a)

    @property
    def end(self) -> np.ndarray:
        return self.curve(self.b)

    def vertex_params(self) -> np.ndarray:
        """Unwrapped parameters of loop vertices strictly inside ``(a, b)``."""
        c = self.curve
        out = []
        lap = 0.0
        while c.t[0] + lap < self.b:
            tt = c.t + lap
            out.append(tt[(tt > self.a) & (tt < self.b)])
            lap += c.T
        return np.concatenate(out) if out else np.zeros(0)

    def breakpoints(self) -> np.ndarray:
        """``a``, interior vertex parameters, ``b``."""
        return np.concatenate([[self.a], self.vertex_params(), [self.b]])

    def sample_params(self, interior: int = ARC_INTERIOR_SAMPLES) -> np.ndarray:
        bp = self.breakpoints()
        if interior <= 0 or len(bp) < 2:
            return bp
        frac = np.arange(1, interior + 1) / (interior + 1)
        mids = bp[:-1, None] + (bp[1:] - bp[:-1])[:, None] * frac[None, :]
        out = np.empty(len(bp) + mids.size)
        out[0] = bp[0]
        body = np.concatenate([mids, bp[1:, None]], axis=1).ravel()
        out[1:] = body
        return out

    def vertex_points(self) -> np.ndarray:
        return self.curve(self.breakpoints())

    @cached_property
    def _local_pieces(self):
        """Breakpoint images relative to ``gamma(a)``, built from the edge steps.

        Composing short horizontal steps keeps the roundoff at the scale of
        the arc; left-translating global coordinates instead loses about
        ``sqrt(eps |z|)`` to cancellation in the height.
        """
        c = self.curve
        bp = self.breakpoints()
        mids = 0.5 * (bp[:-1] + bp[1:])
        k, _ = c.locate(mids)
        start, u, h = c.frames
        t0 = c.t[k] + np.floor((mids - c.t[k]) / c.T) * c.T
        o0 = np.clip(bp[:-1] - t0, 0.0, h[k])
        o1 = np.clip(bp[1:] - t0, 0.0, h[k])
        sx = (o1 - o0) * u[k, 0]
        sy = (o1 - o0) * u[k, 1]
        x = np.concatenate([[0.0], np.cumsum(sx)])
        y = np.concatenate([[0.0], np.cumsum(sy)])
        z = np.concatenate([[0.0], np.cumsum(0.5 * (x[:-1] * sy - sx * y[:-1]))])
        return bp, np.stack([x, y, z], axis=-1), k, t0, o0

    def local_vertex_points(self) -> np.ndarray:
        """``gamma(a)^-1 gamma(s)`` at the breakpoints."""
        return self._local_pieces[1]

    def local(self, s) -> np.ndarray:
        """``gamma(a)^-1 gamma(s)`` for unwrapped parameters ``s`` in ``[a, b]``."""
        bp, P, k, t0, o0 = self._local_pieces
        s = np.asarray(s, dtype=float)
        j = np.clip(np.searchsorted(bp, s, side="right") - 1, 0, len(bp) - 2)
        u = self.curve.frames[1][k[j]]
        h = self.curve.frames[2][k[j]]
        step = np.clip(s - t0[j], 0.0, h) - o0[j]
        step = np.stack([step * u[..., 0], step * u[..., 1], np.zeros_like(step)], axis=-1)
        return multiply(P[j], step)

    @cached_property
    def diameter_cache(self) -> dict:
        return {}

    def diameter(self, ctx: MetricCtx) -> float:
        key = ctx.eta
        cache = self.diameter_cache
        if key not in cache:
            cache[key] = point_set_diameter(ctx, self.local_vertex_points())
        return cache[key]

    def contains(self, other: "Arc", tol: float = 1e-12) -> bool:
        """Domain containment, judged on the circle."""
        T = self.curve.T
        a = other.a
        for shift in (0.0, T, -T):
            if self.a - tol <= a + shift and other.b + shift <= self.b + tol:
                return True
        return False

    def overlap(self, other: "Arc") -> float:
        """Length of the domain intersection (on the circle)."""
        T = self.curve.T
        total = 0.0
        for shift in (-T, 0.0, T):
            lo = max(self.a, other.a + shift)
            hi = min(self.b, other.b + shift)
            total += max(0.0, hi - lo)
        return total


def arc_diameter(ctx: MetricCtx, arc: Arc) -> float:
    return arc.diameter(ctx)


def L_tau(arc: Arc) -> HorizontalSegment:
    return horizontal_segment(arc.start, arc.end)


def arc_deviation(ctx: MetricCtx, arc: Arc, interior: int = ARC_INTERIOR_SAMPLES) -> float:
    """``sup_t d(gamma(t), L_tau)`` over the arc's sample points."""
    pts = arc.local(arc.sample_params(interior))
    start, u, h = segment_frame(pts[0], pts[-1])
    return float(dist_to_horizontal(ctx, pts, start, u, 0.0, h).max())


def beta_arc(ctx: MetricCtx, arc: Arc, interior: int = ARC_INTERIOR_SAMPLES) -> float:
    diam = arc.diameter(ctx)
    if diam == 0:
        raise DegenerateArcError("beta of an arc with zero diameter is undefined")
    return arc_deviation(ctx, arc, interior) / diam


# generators ---------------------------------------------------------------


def lift_increments(planar) -> np.ndarray:
    """Horizontal lift of a planar polyline from the origin-height 0, as an ``(n, 3)`` array."""
    planar = np.asarray(planar, dtype=float)
    if planar.ndim != 2 or planar.shape[1] != 2:
        raise ValueError("planar polyline must have shape (n, 2)")
    x, y = planar[:, 0], planar[:, 1]
    dz = np.zeros(len(planar))
    if len(planar) > 1:
        dx = np.diff(x)
        dy = np.diff(y)
        dz[1:] = np.cumsum(0.5 * (x[:-1] * dy - y[:-1] * dx))
    return np.column_stack([x, y, dz])


def lift_planar(points, z0: float = 0.0, closed: bool = False) -> Curve:
    """Horizontal lift of a planar polyline starting at height ``z0``.

    Each step is ``p_{k+1} = p_k . (dx, dy, 0)``.  The result is an open path
    (stored as its retracing loop) unless ``closed`` is set, in which case
    the planar polyline must enclose zero signed area for the loop to close.
    """
    planar = np.asarray(points, dtype=float)
    if len(planar) < 2:
        raise ValueError("need at least two points to lift")
    lifted = lift_increments(planar)
    lifted[:, 2] += z0
    if closed:
        return Curve.from_loop(lifted)
    return Curve.from_path(lifted)


def _subdivide_planar(planar: np.ndarray, per_edge: int) -> np.ndarray:
    if per_edge <= 1:
        return planar
    frac = np.arange(per_edge) / per_edge
    a = planar[:-1]
    b = planar[1:]
    body = (a[:, None, :] + (b - a)[:, None, :] * frac[None, :, None]).reshape(-1, 2)
    return np.concatenate([body, planar[-1:]], axis=0)


def oscillating_planar(q: float, c: float, stages: int, base_len: float = 1.0) -> np.ndarray:
    """Planar vertices of the tent construction with half-angles ``c / k^q``."""
    pts = np.array([[0.0, 0.0], [base_len, 0.0]])
    for k in range(1, stages + 1):
        theta = c / k ** q
        a = pts[:-1]
        b = pts[1:]
        v = (b - a) / 2.0
        normal = np.column_stack([-v[:, 1], v[:, 0]])
        side = np.where(np.arange(len(a)) % 2 == 0, 1.0, -1.0)[:, None]
        apex = a + v + side * np.tan(theta) * normal
        new = np.empty((2 * len(a) + 1, 2))
        new[0:-1:2] = a
        new[1::2] = apex
        new[-1] = pts[-1]
        pts = new
    return pts


def oscillating_length(q: float, c: float, stages: int, base_len: float = 1.0) -> float:
    """Exact length ``base_len * prod 1/cos(theta_k)`` of the tent construction."""
    k = np.arange(1, stages + 1)
    return float(base_len / np.prod(np.cos(c / k ** q))) if stages else float(base_len)


def gen_oscillating(q: float, c: float, stages: int, base_len: float = 1.0,
                    subdivide: int = 1) -> Curve:
    """Oscillating horizontal curve: stage ``k`` replaces every segment by a tent.

    The tent apex sits over the segment midpoint on alternating sides, so
    each half is the half-segment rotated by ``theta_k = c / k^q`` and the
    length grows by ``1/cos(theta_k)`` per stage.  ``subdivide`` inserts
    evenly spaced vertices inside each final segment.
    """
    if stages < 0:
        raise ValueError("stages must be nonnegative")
    if c <= 0 or base_len <= 0:
        raise ValueError("c and base_len must be positive")
    bounded = q > 0.5
    if not bounded:
        warnings.warn("q <= 1/2: the construction is not guaranteed to have bounded length",
                      RuntimeWarning, stacklevel=2)
    planar = _subdivide_planar(oscillating_planar(q, c, stages, base_len), subdivide)
    meta = {"generator": "oscillating", "q": q, "c": c, "stages": stages,
            "base_len": base_len, "bounded_length": bounded}
    return Curve.from_path(lift_increments(planar), meta)


def gen_segment(length: float = 1.0, pieces: int = 1) -> Curve:
    x = np.linspace(0.0, length, pieces + 1)
    return Curve.from_path(np.column_stack([x, np.zeros_like(x), np.zeros_like(x)]),
                           {"generator": "segment", "length": length})


def gen_circle(radius: float = 0.5, n: int = 256) -> Curve:
    """Horizontal lift of a planar circle; it climbs by twice the enclosed area."""
    s = np.linspace(0.0, 2 * np.pi, n + 1)
    planar = np.column_stack([radius * np.cos(s), radius * np.sin(s)])
    c = lift_planar(planar)
    return Curve(c.t, c.points, c.T, c.n_path, {"generator": "circle", "radius": radius, "n": n})


def gen_square(side: float = 1.0, per_edge: int = 16) -> Curve:
    planar = np.array([[0, 0], [side, 0], [side, side], [0, side], [0, 0]], dtype=float)
    c = lift_planar(_subdivide_planar(planar, per_edge))
    return Curve(c.t, c.points, c.T, c.n_path, {"generator": "square", "side": side})


def gen_random_walk(steps: int = 200, step: float = 0.05, seed: int = 0,
                    turn: float = 0.6) -> Curve:
    """Horizontal lift of a planar random walk with bounded turning angles."""
    rng = np.random.default_rng(seed)
    heading = np.cumsum(rng.uniform(-turn, turn, steps))
    incr = step * np.column_stack([np.cos(heading), np.sin(heading)])
    planar = np.concatenate([[[0.0, 0.0]], np.cumsum(incr, axis=0)])
    c = lift_planar(planar)
    return Curve(c.t, c.points, c.T, c.n_path, {"generator": "walk", "steps": steps, "seed": seed})


def gen_tent(theta: float, base_len: float = 1.0, subdivide: int = 1) -> Curve:
    """Single tent: the first stage of the oscillating family with half-angle ``theta``."""
    h = base_len / 2
    planar = np.array([[0.0, 0.0], [h, h * np.tan(theta)], [base_len, 0.0]])
    return Curve.from_path(lift_increments(_subdivide_planar(planar, subdivide)),
                           {"generator": "tent", "theta": theta})


def gen_two_strand(gap: float = 0.05, length: float = 1.0, pieces: int = 64) -> Curve:
    """Two parallel horizontal strands joined at one end (a thin hairpin)."""
    x = np.linspace(0.0, length, pieces + 1)
    out = np.column_stack([x, np.zeros_like(x)])
    back = np.column_stack([x[::-1], np.full_like(x, gap)])
    planar = np.concatenate([out, back])
    c = lift_planar(planar)
    return Curve(c.t, c.points, c.T, c.n_path, {"generator": "two_strand", "gap": gap})


GENERATORS = {
    "segment": gen_segment,
    "circle": gen_circle,
    "square": gen_square,
    "walk": gen_random_walk,
    "oscillating": gen_oscillating,
    "tent": gen_tent,
    "two_strand": gen_two_strand,
}
