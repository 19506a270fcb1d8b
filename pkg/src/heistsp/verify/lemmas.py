"""
Predicates for the helper inequalities, the arc/segment comparison for
arcs, flat/non-flat ball classification and the covering excess of flat
balls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..curves import Arc, Curve, beta_arc, DegenerateArcError
from ..heisenberg import MetricCtx, distance, multiply, segment_frame
from ..multires import Ball
from .. import _kernels
from .curvature import HypothesisError

__all__ = [
    "check_concave_power",
    "check_power_curvature",
    "power_curvature_sides",
    "sample_concave_power",
    "sample_power_triples",
    "verify_helper_lemmas",
    "arc_pieces",
    "arc_segment_sides",
    "arc_to_segment_sup",
    "segment_to_arc_sup",
    "check_lemma8",
    "BallClass",
    "classify_ball",
    "flat_excess_set",
    "check_flat_excess",
]

SLACK = 1e-12


def check_concave_power(p: float, a: float, b: float) -> bool:
    """``(a + b)^(1/p) >= a^(1/p) + b^(1/p) / 2`` given ``p >= 1`` and ``b >= 2^p a``."""
    if p < 1 or a <= 0 or b <= 0:
        raise HypothesisError("need p >= 1 and a, b > 0")
    if b < 2.0 ** p * a:
        raise HypothesisError("need b >= 2^p a")
    lhs = (a + b) ** (1 / p)
    rhs = a ** (1 / p) + 0.5 * b ** (1 / p)
    return lhs - rhs >= -SLACK * max(lhs, 1.0)


def power_curvature_sides(ctx: MetricCtx, a, b, c, alpha: float) -> tuple[float, float]:
    dab, dbc, dac = (float(distance(ctx, a, b)), float(distance(ctx, b, c)), float(distance(ctx, a, c)))
    if alpha < 0.5:
        raise HypothesisError("need alpha >= 1/2")
    if dac == 0 or max(dab, dbc) > alpha * dac * (1 + 1e-15):
        raise HypothesisError("need max{d(a,b), d(b,c)} <= alpha d(a,c)")
    lhs = dab + dbc - dac
    rhs = ((dab + dbc) ** 4 - dac ** 4) / (100 * alpha ** 3 * dac ** 3)
    return lhs, rhs


def check_power_curvature(ctx: MetricCtx, a, b, c, alpha: float) -> bool:
    """``d(a,b) + d(b,c) - d(a,c) >= [(d(a,b) + d(b,c))^4 - d(a,c)^4] / (100 alpha^3 d(a,c)^3)``."""
    lhs, rhs = power_curvature_sides(ctx, a, b, c, alpha)
    return lhs - rhs >= -SLACK * float(distance(ctx, a, c))


def sample_concave_power(rng, n: int) -> np.ndarray:
    """Rows ``(p, a, b)`` with ``p in [1, 8]`` and ``b >= 2^p a``, spread over many decades."""
    p = rng.uniform(1.0, 8.0, n)
    a = 10.0 ** rng.uniform(-6, 6, n)
    b = 2.0 ** p * a * (1.0 + 10.0 ** rng.uniform(-12, 3, n))
    return np.column_stack([p, a, b])


def sample_power_triples(ctx: MetricCtx, rng, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n`` triples ``(a, b, c)`` with ``max{d(a,b), d(b,c)} <= alpha d(a,c)``, ``alpha in [1/2, 3/2]``.

    ``b`` is drawn near the dilation path from ``a`` towards ``c`` and
    rejected until admissible; a third of the draws have ``a^-1 c``
    horizontal, which reaches the small-excess end.
    """
    out, alphas = [], []
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        a = rng.normal(size=(m, 3))
        v = rng.normal(size=(m, 3))
        v[rng.random(m) < 1 / 3, 2] = 0.0
        c = multiply(a, v)
        # b = a (t v) perturbed: a point near the horizontal or vertical path from a to c
        t = rng.uniform(0, 1, (m, 1))
        tv = v * np.column_stack([t, t, t ** 2])
        b = multiply(a, tv + rng.normal(size=(m, 3)) * 10.0 ** rng.uniform(-4, 0, (m, 1)))
        alpha = rng.uniform(0.5, 1.5, m)
        dab, dbc, dac = distance(ctx, a, b), distance(ctx, b, c), distance(ctx, a, c)
        ok = (dac > 0) & (np.maximum(dab, dbc) <= alpha * dac)
        for k in np.flatnonzero(ok):
            out.append((a[k], b[k], c[k]))
            alphas.append(alpha[k])
    return np.array(out[:n]), np.array(alphas[:n])


def verify_helper_lemmas(ctx: MetricCtx, n: int = 10_000, seed: int = 0) -> dict:
    """Random checks of the concave-power and power-curvature inequalities."""
    rng = np.random.default_rng(seed)
    cp = sample_concave_power(rng, n)
    cp_bad = [tuple(r) for r in cp if not check_concave_power(*r)]
    triples, alphas = sample_power_triples(ctx, rng, n)
    slack = []
    for (a, b, c), al in zip(triples, alphas):
        lhs, rhs = power_curvature_sides(ctx, a, b, c, al)
        slack.append((lhs - rhs) / float(distance(ctx, a, c)))
    slack = np.array(slack)
    pc_bad = int((slack < -SLACK).sum())
    return {
        "samples": n,
        "concave_power": {"violations": len(cp_bad), "witnesses": [list(w) for w in cp_bad[:10]]},
        "power_curvature": {"violations": pc_bad, "min_rel_slack": float(slack.min()) if n else None},
        "violations": len(cp_bad) + pc_bad,
    }


# arcs against their chord segment -----------------------------------------


def arc_pieces(arc: Arc):
    """Horizontal pieces ``(start, unit direction, length)`` of the arc, in the frame of ``gamma(a)``."""
    pts = arc.local_vertex_points()
    return segment_frame(pts[:-1], pts[1:])


def arc_segment_sides(ctx: MetricCtx, arc: Arc, samples: int = 33) -> tuple[float, float]:
    """``(sup_t d(gamma(t), L_tau), sup_{x in L_tau} d(x, tau))`` in the arc's own frame."""
    P = np.ascontiguousarray(arc.local_vertex_points())
    return _kernels.polyline_chord_sups(P, float(ctx.eta), samples, 60)


def arc_to_segment_sup(ctx: MetricCtx, arc: Arc) -> float:
    """``sup_t d(gamma(t), L_tau)``, i.e. ``beta(tau) diam(tau)``."""
    return float(arc_segment_sides(ctx, arc)[0])


def segment_to_arc_sup(ctx: MetricCtx, arc: Arc) -> float:
    """``sup_{x in L_tau} d(x, tau)``; ``d(x, tau)`` is exact as a min over horizontal pieces."""
    return float(arc_segment_sides(ctx, arc)[1])


def check_lemma8(ctx: MetricCtx, arc: Arc) -> float:
    """Slack ``beta(tau) diam(tau) - sup_{x in L_tau} d(x, tau)``; nonnegative when the lemma holds."""
    out_sup, in_sup = arc_segment_sides(ctx, arc)
    return float(out_sup - in_sup)


# classification ------------------------------------------------------------


@dataclass(frozen=True)
class BallClass:
    ball: Ball
    beta_gamma: float
    flat: bool
    witness: int | None = None
    witness_beta: float | None = None

    @property
    def label(self) -> str:
        return "G2" if self.flat else "G1"


def classify_ball(ctx: MetricCtx, ball: Ball, arcs: list[Arc], beta_gamma: float, eps0: float) -> BallClass:
    """Non-flat (G1) iff some arc of ``Lambda'(Q(B))`` has ``beta >= eps0 beta_Gamma(B)``.

    Balls with ``beta_Gamma(B) = 0`` are flat by convention.
    """
    if beta_gamma <= 0:
        return BallClass(ball, 0.0, True)
    best, who = -1.0, None
    for i, arc in enumerate(arcs):
        try:
            b = beta_arc(ctx, arc)
        except DegenerateArcError:
            b = 0.0
        if b > best:
            best, who = b, i
    if who is not None and best >= eps0 * beta_gamma:
        return BallClass(ball, beta_gamma, False, who, best)
    return BallClass(ball, beta_gamma, True, None, best if who is not None else None)


# covering excess of flat balls --------------------------------------------


def _component_params(ctx: MetricCtx, curve: Curve, arc: Arc, center, radius: float, spacing: float):
    """Sample parameters of ``arc`` and a mask of those whose image lies in ``B(center, radius)``."""
    m = max(2, int(np.ceil(arc.length / spacing)) + 1)
    s = np.linspace(arc.a, arc.b, m)
    inside = distance(ctx, center, curve(s)) <= radius
    return s, inside


def flat_excess_set(ctx: MetricCtx, curve: Curve, ball: Ball, tau: Arc, xi: Arc, spacing: float) -> np.ndarray:
    """Sampled set ``E``: the run of ``tau`` inside ``2B`` through the point nearest the centre,
    plus every part of ``xi`` inside ``2B``.
    """
    c = ball.c
    s, inside = _component_params(ctx, curve, tau, c, 2 * ball.radius, spacing)
    d = distance(ctx, c, curve(s))
    k = int(np.argmin(d))
    if not inside[k]:
        raise HypothesisError("tau does not enter 2B")
    i = k
    while i > 0 and inside[i - 1]:
        i -= 1
    j = k
    while j + 1 < len(s) and inside[j + 1]:
        j += 1
    part_tau = curve(s[i:j + 1])
    s2, inside2 = _component_params(ctx, curve, xi, c, 2 * ball.radius, spacing)
    part_xi = curve(s2[inside2])
    return np.concatenate([part_tau, part_xi])


def check_flat_excess(ctx: MetricCtx, ball: Ball, covering: list[Ball], E: np.ndarray,
                      beta_gamma: float, eps0: float) -> bool:
    """``sum diam(B_i) >= 4r + eps0 beta_Gamma(B) diam(B)`` for a cover of ``E`` by small balls."""
    cap = 10 * eps0 * beta_gamma * ball.diameter
    if any(b.diameter >= cap for b in covering):
        raise HypothesisError(f"a covering ball has diameter >= 10 eps0 beta diam(B) = {cap:.6g}")
    if len(E):
        C = np.array([b.center for b in covering], dtype=float).reshape(-1, 3)
        R = np.array([b.radius for b in covering])
        covered = np.zeros(len(E), dtype=bool)
        for i in range(0, len(C), 256):
            d = distance(ctx, E[:, None, :], C[None, i:i + 256, :])
            covered |= np.any(d <= R[None, i:i + 256] * (1 + 1e-12), axis=1)
        if not covered.all():
            raise HypothesisError(f"{int((~covered).sum())} points of E are not covered")
    total = sum(b.diameter for b in covering)
    return total >= 2 * ball.diameter + eps0 * beta_gamma * ball.diameter
