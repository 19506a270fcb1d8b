"""Compiled inner loops: the minimax line fit, segment-to-segment sups and
the batched four-point curvature evaluation.

The line-fit objective ``max_i d(q_i, L(theta, s, z0))`` is evaluated
thousands of times per ball, so both it and the simplex search around it
are compiled.  The distance formula mirrors
:func:`heistsp.heisenberg.dist_to_horizontal`.
"""

from __future__ import annotations

import math
import os

import numba
import numpy as np
from numba import njit, prange

# the TBB layer shipped with some environments is too old; workqueue is always present
numba.config.THREADING_LAYER = "workqueue"


def apply_thread_cap() -> int:
    """Honour ``HEIS_TSP_THREADS`` for the compiled parallel loops."""
    cap = os.environ.get("HEIS_TSP_THREADS")
    n = numba.config.NUMBA_NUM_THREADS
    if cap:
        n = max(1, min(int(cap), n))
    numba.set_num_threads(n)
    return n


@njit(cache=True)
def _cubic_root(P, Q):
    half_q = 0.5 * Q
    disc = math.sqrt(half_q * half_q + (P / 3.0) ** 3)
    if half_q > 0:
        u = np.cbrt(-half_q - disc)
    else:
        u = np.cbrt(-half_q + disc)
    s = 0.0
    if u != 0.0:
        s = u - P / (3.0 * u)
    for _ in range(2):
        fp = 3.0 * s * s + P
        if fp > 0:
            s -= ((s * s + P) * s + Q) / fp
    return s


@njit(cache=True)
def max_line_distance(q, eta, theta, s, z0):
    c = math.cos(theta)
    sn = math.sin(theta)
    bx = -s * sn
    by = s * c
    best = 0.0
    for i in range(q.shape[0]):
        px = q[i, 0]
        py = q[i, 1]
        dx = px - bx
        dy = py - by
        dz = q[i, 2] - z0 - 0.5 * (bx * py - px * by)
        qx = dx * c + dy * sn
        qy = -dx * sn + dy * c
        cc = dz - 0.5 * qx * qy
        t = qx + _cubic_root(qy * qy * (1.0 + eta / 8.0), -0.25 * eta * qy * cc)
        rx = qx - t
        rz = dz - 0.5 * t * qy
        h = rx * rx + qy * qy
        d = math.sqrt(math.sqrt(h * h + eta * rz * rz))
        if d > best:
            best = d
    return best


@njit(cache=True)
def heuristic_lines(q, thetas, offsets):
    """Start lines: for each direction, the planar midline shifted by each offset, at the height
    that centres the vertical residuals."""
    n = thetas.shape[0]
    m = offsets.shape[0]
    t_out = np.empty(n * m)
    s_out = np.empty(n * m)
    z_out = np.empty(n * m)
    for k in range(n):
        c = math.cos(thetas[k])
        sn = math.sin(thetas[k])
        lo = np.inf
        hi = -np.inf
        for i in range(q.shape[0]):
            pn = -q[i, 0] * sn + q[i, 1] * c
            lo = min(lo, pn)
            hi = max(hi, pn)
        mid = 0.5 * (lo + hi)
        for j in range(m):
            s = mid + offsets[j]
            lo = np.inf
            hi = -np.inf
            for i in range(q.shape[0]):
                pu = q[i, 0] * c + q[i, 1] * sn
                pn = -q[i, 0] * sn + q[i, 1] * c
                b = q[i, 2] - 0.5 * pu * pn + s * pu
                lo = min(lo, b)
                hi = max(hi, b)
            t_out[k * m + j] = thetas[k]
            s_out[k * m + j] = s
            z_out[k * m + j] = 0.5 * (lo + hi)
    return t_out, s_out, z_out


@njit(cache=True)
def _f(q, eta, x):
    return max_line_distance(q, eta, x[0], x[1], x[2])


@njit(cache=True)
def nelder_mead(q, eta, x0, step, maxfev, xatol, fatol):
    """Standard Nelder-Mead (reflect 1, expand 2, contract 1/2, shrink 1/2) in 3 dimensions."""
    n = 3
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    sim[0] = x0
    for i in range(n):
        sim[i + 1] = x0
        sim[i + 1, i] += step[i]
    for i in range(n + 1):
        fs[i] = _f(q, eta, sim[i])
    nfev = n + 1
    while nfev < maxfev:
        order = np.argsort(fs)
        sim = sim[order]
        fs = fs[order]
        spread = 0.0
        for i in range(1, n + 1):
            for j in range(n):
                spread = max(spread, abs(sim[i, j] - sim[0, j]))
        if spread <= xatol and fs[n] - fs[0] <= fatol:
            break
        centroid = np.zeros(n)
        for i in range(n):
            centroid += sim[i]
        centroid /= n
        xr = centroid + (centroid - sim[n])
        fr = _f(q, eta, xr)
        nfev += 1
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - sim[n])
            fe = _f(q, eta, xe)
            nfev += 1
            if fe < fr:
                sim[n] = xe
                fs[n] = fe
            else:
                sim[n] = xr
                fs[n] = fr
        elif fr < fs[n - 1]:
            sim[n] = xr
            fs[n] = fr
        else:
            if fr < fs[n]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (sim[n] - centroid)
            fc = _f(q, eta, xc)
            nfev += 1
            if fc < min(fr, fs[n]):
                sim[n] = xc
                fs[n] = fc
            else:
                for i in range(1, n + 1):
                    sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                    fs[i] = _f(q, eta, sim[i])
                nfev += n
    k = np.argmin(fs)
    return sim[k].copy(), fs[k]


@njit(cache=True)
def coordinate_polish(q, eta, x, fx, rounds):
    x = x.copy()
    step = 1e-2
    for _ in range(rounds):
        improved = False
        for j in range(3):
            for sign in (1.0, -1.0):
                h = step
                while h > 1e-10:
                    y = x.copy()
                    y[j] += sign * h
                    fy = _f(q, eta, y)
                    if fy < fx:
                        x = y
                        fx = fy
                        improved = True
                    else:
                        h *= 0.5
        if not improved:
            break
        step *= 0.5
    return x, fx


@njit(cache=True)
def fit_minimax(q, eta, n_angles, n_starts, maxfev, offsets):
    thetas = np.empty(n_angles)
    for k in range(n_angles):
        thetas[k] = math.pi * k / n_angles
    t0, s0, z00 = heuristic_lines(q, thetas, offsets)
    n = t0.shape[0]
    vals = np.empty(n)
    for k in range(n):
        vals[k] = max_line_distance(q, eta, t0[k], s0[k], z00[k])
    order = np.argsort(vals)
    best_x = np.array([t0[order[0]], s0[order[0]], z00[order[0]]])
    best_f = vals[order[0]]
    step = np.array([math.pi / n_angles, 0.1, 0.1])
    for r in range(min(n_starts, n)):
        k = order[r]
        x0 = np.array([t0[k], s0[k], z00[k]])
        x, fx = nelder_mead(q, eta, x0, step, maxfev, 1e-9, 1e-12)
        if fx < best_f:
            best_x = x
            best_f = fx
    for radius in (0.05, 0.005):
        x, fx = nelder_mead(q, eta, best_x, np.full(3, radius), maxfev, 1e-10, 1e-13)
        if fx < best_f:
            best_x = x
            best_f = fx
    best_x, best_f = coordinate_polish(q, eta, best_x, best_f, 4)
    return best_x, best_f


# curvature inequality ------------------------------------------------------


@njit(cache=True)
def _kdist(a, b, eta):
    dx = b[0] - a[0]
    dy = b[1] - a[1]
    dz = b[2] - a[2] - 0.5 * (a[0] * b[1] - b[0] * a[1])
    h = dx * dx + dy * dy
    return math.sqrt(math.sqrt(h * h + eta * dz * dz))


@njit(cache=True)
def _seg_frame(a, b):
    hx = b[0] - a[0]
    hy = b[1] - a[1]
    L = math.hypot(hx, hy)
    if L > 0:
        return hx / L, hy / L, L
    return 1.0, 0.0, 0.0


@njit(cache=True)
def _dist_to_seg(px, py, pz, b, ux, uy, L, eta):
    dx = px - b[0]
    dy = py - b[1]
    dz = pz - b[2] - 0.5 * (b[0] * py - px * b[1])
    qx = dx * ux + dy * uy
    qy = -dx * uy + dy * ux
    return _dist_frame(qx, qy, dz, L, eta)


@njit(cache=True)
def _dist_frame(qx, qy, dz, L, eta):
    """Distance from ``(qx, qy, dz)`` to ``{(t, 0, 0) : 0 <= t <= L}``."""
    cc = dz - 0.5 * qx * qy
    t = qx + _cubic_root(qy * qy * (1.0 + eta / 8.0), -0.25 * eta * qy * cc)
    t = min(max(t, 0.0), L)
    rx = qx - t
    rz = dz - 0.5 * t * qy
    h = rx * rx + qy * qy
    return math.sqrt(math.sqrt(h * h + eta * rz * rz))


@njit(cache=True)
def _seg_point_dist(s, p, vx, vy, a, ux, uy, L, eta):
    """``d(p (s v), overline{a..})`` in the frame of the target segment.

    The offset of ``p`` from ``a`` and the step ``s v`` are rotated
    separately, so a step parallel to ``u`` has lateral part exactly 0;
    rotating the summed coordinates would leave a rounding residue whose
    Koranyi size is ``sqrt(eps)`` times the scale.
    """
    dx = p[0] - a[0]
    dy = p[1] - a[1]
    bx = dx * ux + dy * uy
    by = -dx * uy + dy * ux
    bz = p[2] - a[2] - 0.5 * (a[0] * p[1] - p[0] * a[1])
    cv = vx * ux + vy * uy
    sv = vy * ux - vx * uy
    qx = bx + s * cv
    qy = by + s * sv
    qz = bz + 0.5 * (bx * s * sv - s * cv * by)
    return _dist_frame(qx, qy, qz, L, eta)


@njit(cache=True)
def segment_sup(p, q, a, b, eta, samples, iters):
    """``sup_{z in overline{pq}} d(z, overline{ab})`` by sampling plus golden refinement."""
    vx, vy, Lp = _seg_frame(p, q)
    ux, uy, La = _seg_frame(a, b)
    if Lp == 0.0:
        return _seg_point_dist(0.0, p, vx, vy, a, ux, uy, La, eta)
    best = -1.0
    jbest = 0
    for j in range(samples):
        s = Lp * j / (samples - 1)
        v = _seg_point_dist(s, p, vx, vy, a, ux, uy, La, eta)
        if v > best:
            best = v
            jbest = j
    lo = Lp * max(jbest - 1, 0) / (samples - 1)
    hi = Lp * min(jbest + 1, samples - 1) / (samples - 1)
    g = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - g * (hi - lo)
    x2 = lo + g * (hi - lo)
    f1 = _seg_point_dist(x1, p, vx, vy, a, ux, uy, La, eta)
    f2 = _seg_point_dist(x2, p, vx, vy, a, ux, uy, La, eta)
    for _ in range(iters):
        if f1 >= f2:
            hi = x2
            x2 = x1
            f2 = f1
            x1 = hi - g * (hi - lo)
            f1 = _seg_point_dist(x1, p, vx, vy, a, ux, uy, La, eta)
        else:
            lo = x1
            x1 = x2
            f1 = f2
            x2 = lo + g * (hi - lo)
            f2 = _seg_point_dist(x2, p, vx, vy, a, ux, uy, La, eta)
    return max(best, f1, f2)


@njit(cache=True, parallel=True)
def curvature_batch(P, eta, samples, iters):
    """Per configuration ``(p1..p4)``: broken-line excess, diameter, max segment sup."""
    n = P.shape[0]
    lhs = np.empty(n)
    diam = np.empty(n)
    dev = np.empty(n)
    for k in prange(n):
        p1 = P[k, 0]
        p4 = P[k, 3]
        lhs[k] = (_kdist(P[k, 0], P[k, 1], eta) + _kdist(P[k, 1], P[k, 2], eta)
                  + _kdist(P[k, 2], P[k, 3], eta) - _kdist(p1, p4, eta))
        dm = 0.0
        for i in range(4):
            for j in range(i + 1, 4):
                dm = max(dm, _kdist(P[k, i], P[k, j], eta))
        diam[k] = dm
        best = 0.0
        for i in range(3):
            best = max(best, segment_sup(P[k, i], P[k, i + 1], p1, p4, eta, samples, iters))
        dev[k] = best
    return lhs, diam, dev


# arcs against their chord -------------------------------------------------


@njit(cache=True)
def _chord_point_dist(s, a, ux, uy, P, U, H, eta):
    best = np.inf
    for j in range(H.shape[0]):
        best = min(best, _seg_point_dist(s, a, ux, uy, P[j], U[j, 0], U[j, 1], H[j], eta))
    return best


@njit(cache=True)
def polyline_chord_sups(P, eta, samples, iters):
    """For a piecewise-horizontal polyline ``P``: ``sup_t d(gamma(t), L)`` and
    ``sup_{x in L} d(x, gamma)`` where ``L`` is the segment from ``P[0]`` toward ``P[-1]``.
    """
    m = P.shape[0]
    a = P[0]
    b = P[m - 1]
    out_sup = 0.0
    for j in range(m - 1):
        out_sup = max(out_sup, segment_sup(P[j], P[j + 1], a, b, eta, samples, iters))
    npc = m - 1
    U = np.empty((npc, 2))
    H = np.empty(npc)
    for j in range(npc):
        ux, uy, L = _seg_frame(P[j], P[j + 1])
        U[j, 0] = ux
        U[j, 1] = uy
        H[j] = L
    ux, uy, L = _seg_frame(a, b)
    if L == 0.0:
        return out_sup, _chord_point_dist(0.0, a, ux, uy, P, U, H, eta)
    n = 4 * samples + 1
    vals = np.empty(n)
    for i in range(n):
        vals[i] = _chord_point_dist(L * i / (n - 1), a, ux, uy, P, U, H, eta)
    in_sup = vals.max()
    # refine around the three largest samples
    order = np.argsort(vals)[::-1]
    g = (math.sqrt(5.0) - 1.0) / 2.0
    for r in range(min(3, n)):
        i = order[r]
        lo = L * max(i - 1, 0) / (n - 1)
        hi = L * min(i + 1, n - 1) / (n - 1)
        x1 = hi - g * (hi - lo)
        x2 = lo + g * (hi - lo)
        f1 = _chord_point_dist(x1, a, ux, uy, P, U, H, eta)
        f2 = _chord_point_dist(x2, a, ux, uy, P, U, H, eta)
        for _ in range(iters):
            if f1 >= f2:
                hi = x2
                x2 = x1
                f2 = f1
                x1 = hi - g * (hi - lo)
                f1 = _chord_point_dist(x1, a, ux, uy, P, U, H, eta)
            else:
                lo = x1
                x1 = x2
                f1 = f2
                x2 = lo + g * (hi - lo)
                f2 = _chord_point_dist(x2, a, ux, uy, P, U, H, eta)
        in_sup = max(in_sup, f1, f2)
    return out_sup, in_sup
