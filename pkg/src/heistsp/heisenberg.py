"""
Heisenberg group arithmetic and the Koranyi metric.

Points are triples ``(x, y, z)``.  Every function here accepts array-likes
of shape ``(..., 3)`` and broadcasts, so a single point and a batch of
points go through the same code path.

The group law is

    (x, y, z) . (x', y', z') = (x + x', y + y', z + z' + (x y' - x' y) / 2)

and the Koranyi metric is ``d(g, h) = N(g^-1 h)`` with
``N(x, y, z) = ((x^2 + y^2)^2 + eta z^2)^(1/4)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Point",
    "MetricCtx",
    "HorizontalLine",
    "HorizontalSegment",
    "as_points",
    "multiply",
    "inverse",
    "dilate",
    "koranyi_norm",
    "distance",
    "pairwise_distance",
    "rotate_z",
    "project_pi",
    "project_pi_tilde",
    "horizontal_segment",
    "dist_point_to_line",
    "dist_point_to_segment",
    "dist_to_horizontal",
    "segment_frame",
    "segment_point",
    "sup_on_interval",
    "segment_distance_sup",
]

ORIGIN = np.zeros(3)


class Point(NamedTuple):
    x: float
    y: float
    z: float


def as_points(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {arr.shape}")
    return arr


def multiply(a, b) -> np.ndarray:
    """Group product ``a . b`` (broadcasting)."""
    a = as_points(a)
    b = as_points(b)
    x = a[..., 0] + b[..., 0]
    y = a[..., 1] + b[..., 1]
    z = a[..., 2] + b[..., 2] + 0.5 * (a[..., 0] * b[..., 1] - b[..., 0] * a[..., 1])
    return np.stack([x, y, z], axis=-1)


def inverse(p) -> np.ndarray:
    return -as_points(p)


def dilate(p, lam: float) -> np.ndarray:
    """Anisotropic dilation ``(x, y, z) -> (lam x, lam y, lam^2 z)``.

    Negative ``lam`` is only defined on horizontal points (``z == 0``),
    where it acts as ``(x, y, 0) -> (lam x, lam y, 0)``.
    """
    p = as_points(p)
    if lam < 0:
        if np.any(p[..., 2] != 0):
            raise ValueError("negative dilation is only defined for horizontal points")
        return p * lam
    return p * np.array([lam, lam, lam * lam])


@dataclass(frozen=True)
class MetricCtx:
    """Koranyi metric with vertical weight ``eta``.

    The triangle inequality holds for ``0 < eta <= 16``; larger values give
    a quasi-metric that is still left-invariant and 1-homogeneous.
    """

    eta: float = 1.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def is_metric(self) -> bool:
        return self.eta <= 16.0

    def norm(self, p) -> np.ndarray:
        return koranyi_norm(self, p)

    def dist(self, a, b) -> np.ndarray:
        return distance(self, a, b)


def koranyi_norm(ctx: MetricCtx, p) -> np.ndarray:
    p = as_points(p)
    h = p[..., 0] ** 2 + p[..., 1] ** 2
    return np.sqrt(np.sqrt(h * h + ctx.eta * p[..., 2] ** 2))


def distance(ctx: MetricCtx, a, b) -> np.ndarray:
    """Koranyi distance ``N(a^-1 b)``."""
    a = as_points(a)
    b = as_points(b)
    dx = b[..., 0] - a[..., 0]
    dy = b[..., 1] - a[..., 1]
    dz = b[..., 2] - a[..., 2] - 0.5 * (a[..., 0] * b[..., 1] - b[..., 0] * a[..., 1])
    h = dx * dx + dy * dy
    return np.sqrt(np.sqrt(h * h + ctx.eta * dz * dz))


def pairwise_distance(ctx: MetricCtx, a, b) -> np.ndarray:
    """Distance matrix between point sets of shapes ``(n, 3)`` and ``(m, 3)``."""
    a = as_points(a)
    b = as_points(b)
    return distance(ctx, a[:, None, :], b[None, :, :])


def rotate_z(p, theta: float) -> np.ndarray:
    """Rotation about the z-axis; an automorphism and an isometry for every eta."""
    p = as_points(p)
    c, s = np.cos(theta), np.sin(theta)
    x = c * p[..., 0] - s * p[..., 1]
    y = s * p[..., 0] + c * p[..., 1]
    return np.stack([x, y, p[..., 2]], axis=-1)


def project_pi(p) -> np.ndarray:
    return as_points(p)[..., :2].copy()


def project_pi_tilde(p) -> np.ndarray:
    p = as_points(p).copy()
    p[..., 2] = 0.0
    return p


@dataclass(frozen=True)
class HorizontalLine:
    """Unit-speed horizontal line ``t -> base . (t cos(angle), t sin(angle), 0)``."""

    base: tuple
    angle: float

    @property
    def direction(self) -> np.ndarray:
        return np.array([np.cos(self.angle), np.sin(self.angle)])

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        u = self.direction
        step = np.stack([t * u[0], t * u[1], np.zeros_like(t)], axis=-1)
        return multiply(np.asarray(self.base, dtype=float), step)


@dataclass(frozen=True)
class HorizontalSegment:
    """The interpolant from ``start`` in the horizontal direction of ``start^-1 end_target``.

    It always contains ``start`` but reaches ``end_target`` only when the two
    points are co-horizontal.
    """

    start: tuple
    end_target: tuple

    @property
    def direction(self) -> np.ndarray:
        a = np.asarray(self.start, dtype=float)
        b = np.asarray(self.end_target, dtype=float)
        return project_pi_tilde(multiply(inverse(a), b))

    @property
    def length(self) -> float:
        h = self.direction
        return float(np.hypot(h[0], h[1]))

    @property
    def end(self) -> np.ndarray:
        return self.eval(1.0)

    def eval(self, t) -> np.ndarray:
        """Point at parameter ``t`` in ``[0, 1]``."""
        t = np.asarray(t, dtype=float)
        h = self.direction
        step = np.stack([t * h[0], t * h[1], np.zeros_like(t)], axis=-1)
        return multiply(np.asarray(self.start, dtype=float), step)

    def line(self) -> HorizontalLine:
        h = self.direction
        return HorizontalLine(tuple(np.asarray(self.start, dtype=float)), float(np.arctan2(h[1], h[0])))


def horizontal_segment(a, b) -> HorizontalSegment:
    return HorizontalSegment(tuple(np.asarray(a, dtype=float)), tuple(np.asarray(b, dtype=float)))


def _real_cubic_root(P, Q):
    # Unique real root of s^3 + P s + Q = 0 for P >= 0 (monotone cubic).
    half_q = 0.5 * Q
    disc = np.sqrt(half_q * half_q + (P / 3.0) ** 3)
    sgn = np.where(half_q > 0, -1.0, 1.0)
    u = np.cbrt(-half_q + sgn * disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(u != 0, u - P / (3.0 * np.where(u != 0, u, 1.0)), 0.0)
    for _ in range(2):
        f = (s * s + P) * s + Q
        fp = 3.0 * s * s + P
        s = np.where(fp > 0, s - f / np.where(fp > 0, fp, 1.0), s)
    return s


def dist_to_horizontal(ctx: MetricCtx, p, base, direction, t_min=-np.inf, t_max=np.inf,
                       return_t=False):
    """Distance from points ``p`` to the unit-speed horizontal line through ``base``.

    ``direction`` is a planar unit vector (shape ``(..., 2)``).  The
    parameter range is clipped to ``[t_min, t_max]`` so the same routine
    serves lines and segments.

    Along a horizontal line, ``t -> d(p, L(t))^4`` is a quartic
    polynomial that is a sum of convex terms, so its minimiser is the
    unique real root of a monotone cubic; on a segment the minimiser is
    that root clipped to the parameter range.
    """
    p = as_points(p)
    base = as_points(base)
    u = np.asarray(direction, dtype=float)
    ux, uy = u[..., 0], u[..., 1]
    # q = base^-1 p, then rotate so the line runs along the x-axis
    dx = p[..., 0] - base[..., 0]
    dy = p[..., 1] - base[..., 1]
    dz = p[..., 2] - base[..., 2] - 0.5 * (base[..., 0] * p[..., 1] - p[..., 0] * base[..., 1])
    qx = dx * ux + dy * uy
    qy = -dx * uy + dy * ux
    c = dz - 0.5 * qx * qy
    eta = ctx.eta
    P = qy * qy * (1.0 + eta / 8.0)
    Q = -0.25 * eta * qy * c
    t = np.clip(qx + _real_cubic_root(P, Q), t_min, t_max)
    rx = qx - t
    rz = dz - 0.5 * t * qy
    h = rx * rx + qy * qy
    d = np.sqrt(np.sqrt(h * h + eta * rz * rz))
    if return_t:
        return d, t
    return d


def dist_point_to_line(ctx: MetricCtx, p, line: HorizontalLine) -> np.ndarray:
    return dist_to_horizontal(ctx, p, np.asarray(line.base, dtype=float), line.direction)


def dist_point_to_segment(ctx: MetricCtx, p, seg: HorizontalSegment) -> np.ndarray:
    """Distance to a horizontal segment; a degenerate segment is its start point."""
    h = seg.direction
    length = float(np.hypot(h[0], h[1]))
    start = np.asarray(seg.start, dtype=float)
    if length == 0.0:
        return distance(ctx, start, p)
    return dist_to_horizontal(ctx, p, start, h[:2] / length, 0.0, length)


def segment_frame(a, b):
    """Vectorised ``(start, unit direction, length)`` of the interpolants ``overline{ab}``.

    Degenerate interpolants get direction ``(1, 0)`` and length 0, which the
    clipped distance routine turns into the distance to ``a``.
    """
    a = as_points(a)
    b = as_points(b)
    h = project_pi_tilde(multiply(inverse(a), b))
    length = np.hypot(h[..., 0], h[..., 1])
    safe = np.where(length > 0, length, 1.0)
    u = np.stack([np.where(length > 0, h[..., 0] / safe, 1.0),
                  np.where(length > 0, h[..., 1] / safe, 0.0)], axis=-1)
    return a, u, length


def segment_point(start, u, s) -> np.ndarray:
    """Point at arclength ``s`` along the horizontal ray from ``start`` with unit direction ``u``."""
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    step = np.stack([s * u[..., 0], s * u[..., 1], np.zeros_like(s)], axis=-1)
    return multiply(start, step)


def sup_on_interval(f, length: float, samples: int = 33, refine_iters: int = 40) -> float:
    """Max of ``f`` on ``[0, length]``: dense samples then golden refinement around the best one."""
    if length <= 0:
        return float(f(np.array([0.0]))[0])
    s = np.linspace(0.0, length, samples)
    v = f(s)
    j = int(np.argmax(v))
    best = float(v[j])
    lo = s[max(j - 1, 0)]
    hi = s[min(j + 1, samples - 1)]
    g = (math.sqrt(5) - 1) / 2
    x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
    f1, f2 = float(f(np.array([x1]))[0]), float(f(np.array([x2]))[0])
    for _ in range(refine_iters):
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - g * (hi - lo)
            f1 = float(f(np.array([x1]))[0])
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + g * (hi - lo)
            f2 = float(f(np.array([x2]))[0])
    return max(best, f1, f2)


def segment_distance_sup(ctx: MetricCtx, p, q, a, b, samples: int = 33) -> float:
    """``sup_{z in overline{pq}} d(z, overline{ab})``."""
    s0, u0, h0 = segment_frame(np.asarray(p, float), np.asarray(q, float))
    s1, u1, h1 = segment_frame(np.asarray(a, float), np.asarray(b, float))

    def f(t):
        z = segment_point(s0, u0, t)
        return dist_to_horizontal(ctx, z, s1, u1, 0.0, h1)

    return sup_on_interval(f, float(h0), samples)
