"""
Ball beta numbers: minimax fitting of a horizontal line to a point set.

For a ball ``B(c, r)`` the points of ``K`` inside it are first normalised
to the unit ball by ``q = delta_{1/r}(c^-1 p)``.  Since left translation and
dilation map horizontal lines to horizontal lines, ``beta_K(B)`` equals the
normalised problem's value divided by ``diam(B) = 2``.

A horizontal line is parametrised by ``(theta, s, z0)``: direction
``u = (cos theta, sin theta)``, planar foot point ``s * n`` with
``n = (-sin theta, cos theta)``, and height ``z0`` at that foot point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import minimum_filter

from ..heisenberg import MetricCtx, as_points, dilate, distance, dist_to_horizontal, multiply, inverse, segment_frame
from .. import _kernels

__all__ = [
    "EmptyBallError",
    "BetaFit",
    "points_in_ball",
    "normalize_to_unit_ball",
    "line_max_distance",
    "fit_line",
    "beta_ball",
    "beta_ball_grid_oracle",
]


class EmptyBallError(ValueError):
    pass


@dataclass(frozen=True)
class BetaFit:
    beta: float
    theta: float
    s: float
    z0: float
    n_points: int


def points_in_ball(ctx: MetricCtx, K, center, radius: float, tol: float = 1e-12) -> np.ndarray:
    K = as_points(K).reshape(-1, 3)
    d = distance(ctx, np.asarray(center, dtype=float), K)
    return K[d <= radius * (1 + tol)]


def normalize_to_unit_ball(points, center, radius: float) -> np.ndarray:
    return dilate(multiply(inverse(np.asarray(center, dtype=float)), as_points(points)), 1.0 / radius)


def _line_frames(theta, s, z0):
    theta = np.asarray(theta, dtype=float)
    s = np.asarray(s, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    c, sn = np.cos(theta), np.sin(theta)
    base = np.stack(np.broadcast_arrays(-s * sn, s * c, z0), axis=-1)
    u = np.stack(np.broadcast_arrays(c, sn), axis=-1)
    return base, u


def line_max_distance(ctx: MetricCtx, q, theta, s, z0, chunk: int = 4096) -> np.ndarray:
    """``max_i d(q_i, L)`` for a batch of lines given by broadcastable parameter arrays."""
    q = as_points(q)
    base, u = _line_frames(theta, s, z0)
    shape = base.shape[:-1]
    base = base.reshape(-1, 3)
    u = u.reshape(-1, 2)
    out = np.empty(len(base))
    step = max(1, chunk * 64 // max(len(q), 1))
    for i in range(0, len(base), step):
        d = dist_to_horizontal(ctx, q[None, :, :], base[i:i + step, None, :], u[i:i + step, None, :])
        out[i:i + step] = d.max(axis=1)
    return out.reshape(shape)


def _heuristic_lines(q: np.ndarray, thetas: np.ndarray):
    """For each direction, the line through the middle of the point cloud."""
    c, sn = np.cos(thetas), np.sin(thetas)
    pu = q[None, :, 0] * c[:, None] + q[None, :, 1] * sn[:, None]
    pn = -q[None, :, 0] * sn[:, None] + q[None, :, 1] * c[:, None]
    s = 0.5 * (pn.max(axis=1) + pn.min(axis=1))
    # height making the vertical offsets c_i = b_i - z0 + s w_i symmetric about 0
    b = q[None, :, 2] - 0.5 * pu * pn + s[:, None] * pu
    z0 = 0.5 * (b.max(axis=1) + b.min(axis=1))
    return s, z0


def _on_one_line(ctx: MetricCtx, q: np.ndarray, tol: float) -> bool:
    d0 = distance(ctx, q[0], q)
    far = q[int(np.argmax(d0))]
    if d0.max() == 0:
        return True
    start, u, h = segment_frame(q[0], far)
    return bool(dist_to_horizontal(ctx, q, start, u).max() <= tol)


START_OFFSETS = (-0.5, 0.0, 0.5)


def fit_line(ctx: MetricCtx, q, n_angles: int = 48, n_starts: int = 6,
             maxfev: int = 1500, tol: float = 1e-12, offsets=START_OFFSETS) -> BetaFit:
    """Minimax horizontal line for points ``q`` already normalised to the unit ball.

    Multi-start Nelder-Mead on ``(theta, s, z0)`` from the best heuristic
    lines over a fan of directions and planar offsets, followed by two restarts from the
    winner and a coordinate-descent polish.  Point sets lying on a single
    horizontal line short-circuit to 0.
    """
    q = as_points(q).reshape(-1, 3)
    m = len(q)
    if m == 0:
        raise EmptyBallError("no points of K in the ball")
    if m == 1 or _on_one_line(ctx, q, tol):
        if m == 1:
            return BetaFit(0.0, 0.0, 0.0, float(q[0, 2]), 1)
        d0 = distance(ctx, q[0], q)
        far = q[int(np.argmax(d0))]
        _, u, _ = segment_frame(q[0], far)
        th = float(np.arctan2(u[1], u[0]))
        s, z0 = _heuristic_lines(q, np.array([th]))
        return BetaFit(0.0, th, float(s[0]), float(z0[0]), m)

    x, fx = _kernels.fit_minimax(np.ascontiguousarray(q), float(ctx.eta), n_angles, n_starts, maxfev,
                                  np.asarray(offsets, dtype=float))
    return BetaFit(float(fx) / 2.0, float(x[0]), float(x[1]), float(x[2]), m)


def beta_ball(ctx: MetricCtx, K, center, radius: float, **kw) -> float:
    """``beta_K(B(center, radius))`` with ``diam(B) = 2 radius``."""
    return beta_ball_fit(ctx, K, center, radius, **kw).beta


def beta_ball_fit(ctx: MetricCtx, K, center, radius: float, **kw) -> BetaFit:
    if radius <= 0:
        raise ValueError("radius must be positive")
    inside = points_in_ball(ctx, K, center, radius)
    if len(inside) == 0:
        raise EmptyBallError("K does not meet the ball")
    return fit_line(ctx, normalize_to_unit_ball(inside, center, radius), **kw)


def _grid_local_minima(vals: np.ndarray, limit: int) -> np.ndarray:
    """Flat indices of grid points no larger than any of their neighbours."""
    mask = vals <= minimum_filter(vals, size=3, mode="nearest")
    idx = np.flatnonzero(mask)
    return idx[np.argsort(vals.ravel()[idx])][:limit]


def _min_over_height(ctx: MetricCtx, q, theta, s, zmax: float, iters: int = 60):
    """Golden-section search over ``z0`` for each ``(theta, s)`` pair.

    For fixed ``(theta, s)`` each ``d(q_i, L)^4`` is a convex function of
    the line height (a partial minimum of a jointly convex function), so the
    max over points is quasi-convex in ``z0`` and the search is exact up to
    the bracket width.
    """
    theta, s = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(s, dtype=float))
    lo = np.full(theta.shape, -zmax)
    hi = np.full(theta.shape, zmax)
    g = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - g * (hi - lo)
    x2 = lo + g * (hi - lo)
    f1 = line_max_distance(ctx, q, theta, s, x1)
    f2 = line_max_distance(ctx, q, theta, s, x2)
    for _ in range(iters):
        left = f1 <= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x2n = np.where(left, x1, lo + g * (hi - lo))
        x1n = np.where(left, hi - g * (hi - lo), x2)
        fnew = line_max_distance(ctx, q, theta, s, np.where(left, x1n, x2n))
        f2, f1 = np.where(left, f1, fnew), np.where(left, fnew, f2)
        x1, x2 = x1n, x2n
    z = np.where(f1 <= f2, x1, x2)
    return np.minimum(f1, f2), z


def beta_ball_grid_oracle(ctx: MetricCtx, K, center, radius: float, n: int = 50,
                          basins: int = 4, min_width: float = 1e-8, max_steps: int = 400,
                          stencil: int = 7) -> float:
    """Brute-force value from a parameter grid with local grid refinement.

    Direction and planar offset run over an ``n x n`` grid and the height is
    resolved at every grid node by an exact one-dimensional search.  The
    best local minima of the grid are then refined by a grid
    pattern search (``stencil x stencil`` nodes) that moves to the best node and halves its width once
    the centre is best, so it can follow narrow diagonal valleys.  Shares no
    search logic with :func:`fit_line`, only the numpy distance routine.
    """
    inside = points_in_ball(ctx, K, center, radius)
    if len(inside) == 0:
        raise EmptyBallError("K does not meet the ball")
    q = normalize_to_unit_ball(inside, center, radius)
    zmax = float(np.abs(q[:, 2]).max()) + 2.0 / np.sqrt(ctx.eta) + 2.0
    th = np.linspace(0.0, np.pi, n, endpoint=False)
    ss = np.linspace(-3.0, 3.0, n)
    T, S = np.meshgrid(th, ss, indexing="ij")
    vals, _ = _min_over_height(ctx, q, T, S, zmax)
    best = float(vals.min())
    g = np.linspace(-1.0, 1.0, stencil)
    dT0, dS0 = (a.ravel() for a in np.meshgrid(g, g, indexing="ij"))
    start = _grid_local_minima(vals, basins)
    x = np.column_stack([T.ravel()[start], S.ravel()[start]])
    fx = vals.ravel()[start].copy()
    width = np.tile([th[1] - th[0], ss[1] - ss[0]], (len(start), 1))
    # all basins advance together: one batched height search per step
    for _ in range(max_steps):
        live = width.max(axis=1) >= min_width
        if not live.any():
            break
        xl, wl = x[live], width[live]
        cT = xl[:, :1] + dT0[None, :] * wl[:, :1]
        cS = xl[:, 1:] + dS0[None, :] * wl[:, 1:]
        v, _ = _min_over_height(ctx, q, cT, cS, zmax)
        k = np.argmin(v, axis=1)
        rows = np.arange(len(k))
        vk = v[rows, k]
        moved = vk < fx[live]
        xl = np.where(moved[:, None], np.column_stack([cT[rows, k], cS[rows, k]]), xl)
        wl = np.where(moved[:, None], wl, 0.5 * wl)
        x[live], width[live] = xl, wl
        fx[live] = np.minimum(fx[live], vk)
    return min(best, float(fx.min())) / 2.0 if len(fx) else best / 2.0
