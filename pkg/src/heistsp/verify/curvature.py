"""
The four-point curvature inequality: exact evaluation of both sides and a
seeded Monte-Carlo verifier over three sampling regimes.

For ``p1..p4`` with ``d(p_i, {p1, p4}) >= eps d(p1, p4)`` (i = 2, 3) the
broken-line excess ``d12 + d23 + d34 - d14`` dominates

    eps^4 eta^2 / (1e14 diam^3) * max_i sup_{a in [p_i p_{i+1}]} d(a, [p1 p4])^4

whenever ``eta < (eps / 10)^10``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..heisenberg import MetricCtx, as_points, distance, multiply, rotate_z, dilate, segment_distance_sup
from .. import _kernels

__all__ = [
    "HypothesisError",
    "CurvatureConfig",
    "curvature_lhs",
    "curvature_rhs",
    "separation_ok",
    "sample_configurations",
    "verify_prop4",
]

SUP_SAMPLES = 33
SUP_REFINE = 60
# relative roundoff allowance: both sides are sums of O(diam) terms
ROUNDOFF = 1e-12
REGIMES = ("flat", "vertical", "far-vertical")


class HypothesisError(ValueError):
    pass


@dataclass(frozen=True)
class CurvatureConfig:
    epsilon: float
    eta: float | None = None
    samples: int = 10_000
    seed: int = 0
    regime_weights: tuple = (2, 2, 1)

    def __post_init__(self):
        if not (0 < self.epsilon < 0.5):
            raise ValueError("epsilon must lie in (0, 1/2)")
        if self.eta is None:
            object.__setattr__(self, "eta", (self.epsilon / 10) ** 10 / 2)
        if not (0 < self.eta < (self.epsilon / 10) ** 10):
            raise ValueError("eta must lie in (0, (epsilon/10)^10)")
        if self.samples < 0:
            raise ValueError("samples must be nonnegative")

    @property
    def ctx(self) -> MetricCtx:
        return MetricCtx(self.eta)

    @property
    def constant(self) -> float:
        return self.epsilon ** 4 * self.eta ** 2 / 1e14


def curvature_lhs(ctx: MetricCtx, p1, p2, p3, p4) -> float:
    """``d(p1,p2) + d(p2,p3) + d(p3,p4) - d(p1,p4)``."""
    return float(distance(ctx, p1, p2) + distance(ctx, p2, p3) + distance(ctx, p3, p4) - distance(ctx, p1, p4))


def separation_ok(ctx: MetricCtx, epsilon: float, p1, p2, p3, p4) -> bool:
    d14 = float(distance(ctx, p1, p4))
    return all(min(float(distance(ctx, p, p1)), float(distance(ctx, p, p4))) >= epsilon * d14 for p in (p2, p3))


def curvature_rhs(cfg: CurvatureConfig, p1, p2, p3, p4) -> float:
    """Right-hand side; raises :class:`HypothesisError` when ``p2`` or ``p3`` is too close to an end."""
    ctx = cfg.ctx
    if not separation_ok(ctx, cfg.epsilon, p1, p2, p3, p4):
        raise HypothesisError("d(p_i, {p1, p4}) < epsilon d(p1, p4) for a middle point")
    pts = as_points([p1, p2, p3, p4])
    diam = float(distance(ctx, pts[:, None, :], pts[None, :, :]).max())
    if diam == 0:
        return 0.0
    dev = max(segment_distance_sup(ctx, pts[i], pts[i + 1], pts[0], pts[3], SUP_SAMPLES) for i in range(3))
    return cfg.constant * dev ** 4 / diam ** 3


# sampling ------------------------------------------------------------------


def _random_isometry(rng, pts):
    """Left translation, rotation and dilation; the inequality is invariant (dilation-homogeneous)."""
    g = rng.normal(size=3)
    theta = rng.uniform(0, 2 * np.pi)
    lam = np.exp(rng.uniform(-2, 2))
    return multiply(g, rotate_z(dilate(pts, lam), theta))


def _draw(rng, regime: str, eps: float, eta: float, m: int) -> np.ndarray:
    """``m`` candidate configurations normalised to ``p1 = 0``, ``p4 = (1, 0, t)``."""
    sq = np.sqrt(eta)
    if regime == "flat":
        t = rng.uniform(-2, 2, m)
        x = rng.uniform(-0.5, 1.5, (m, 2))
        y = rng.uniform(-0.6, 0.6, (m, 2))
        z = rng.uniform(-1.5, 1.5, (m, 2)) + t[:, None] * rng.uniform(0, 1, (m, 2))
        # half of the draws sit near the horizontal segment [p1 p4], where the excess is smallest
        near = rng.random(m) < 0.5
        scale = 10.0 ** rng.uniform(-6, -1, (m, 1))
        s_ = np.sort(rng.uniform(0.1, 0.9, (m, 2)), axis=1)
        x = np.where(near[:, None], s_ + scale * rng.normal(size=(m, 2)), x)
        y = np.where(near[:, None], scale * rng.normal(size=(m, 2)), y)
        z = np.where(near[:, None], s_ * t[:, None] + scale * rng.normal(size=(m, 2)), z)
    else:
        lo, hi = (1.0, 100 / eps ** 2) if regime == "vertical" else (100 / eps ** 2, 1e3 / eps ** 2)
        R = np.exp(rng.uniform(np.log(lo), np.log(hi), m))
        t = np.sqrt((R ** 4 - 1) / eta) * rng.choice([-1.0, 1.0], m)
        # middle points spread over the vertical extent, horizontally within O(R)
        x = 0.5 + R[:, None] * rng.uniform(-1, 1, (m, 2))
        y = R[:, None] * rng.uniform(-1, 1, (m, 2))
        frac = rng.uniform(-0.3, 1.3, (m, 2))
        z = frac * t[:, None] + (R[:, None] ** 2 / sq) * rng.uniform(-0.2, 0.2, (m, 2))
    P = np.zeros((m, 4, 3))
    P[:, 1] = np.stack([x[:, 0], y[:, 0], z[:, 0]], axis=-1)
    P[:, 2] = np.stack([x[:, 1], y[:, 1], z[:, 1]], axis=-1)
    P[:, 3] = np.stack([np.ones(m), np.zeros(m), t], axis=-1)
    return P


def _separated(ctx: MetricCtx, eps: float, P: np.ndarray) -> np.ndarray:
    d14 = distance(ctx, P[:, 0], P[:, 3])
    ok = np.ones(len(P), dtype=bool)
    for i in (1, 2):
        near = np.minimum(distance(ctx, P[:, i], P[:, 0]), distance(ctx, P[:, i], P[:, 3]))
        ok &= near >= eps * d14
    return ok


def sample_configurations(cfg: CurvatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """Admissible configurations in the regime mix, plus the regime index of each."""
    rng = np.random.default_rng(cfg.seed)
    ctx = cfg.ctx
    w = np.asarray(cfg.regime_weights, dtype=float)
    counts = np.floor(cfg.samples * w / w.sum()).astype(int)
    counts[0] += cfg.samples - counts.sum()
    out, tags = [], []
    for r, (regime, need) in enumerate(zip(REGIMES, counts)):
        got = []
        have = 0
        while have < need:
            P = _draw(rng, regime, cfg.epsilon, cfg.eta, max(2 * (need - have), 64))
            P = P[_separated(ctx, cfg.epsilon, P)]
            got.append(P)
            have += len(P)
        P = np.concatenate(got)[:need] if got else np.zeros((0, 4, 3))
        if regime == "flat" and len(P):
            P = _random_isometry(rng, P)
        out.append(P)
        tags.append(np.full(len(P), r))
    return np.concatenate(out), np.concatenate(tags)


def verify_prop4(cfg: CurvatureConfig, witnesses: int = 10) -> dict:
    """Check the inequality on ``cfg.samples`` random admissible configurations.

    A violation is ``lhs - rhs < -1e-12 diam``; the slack is reported
    relative to the configuration diameter so regimes of very different
    scale are comparable.
    """
    _kernels.apply_thread_cap()
    P, tags = sample_configurations(cfg)
    P = np.ascontiguousarray(P)
    lhs, diam, dev = _kernels.curvature_batch(P, float(cfg.eta), SUP_SAMPLES, SUP_REFINE)
    rhs = np.where(diam > 0, cfg.constant * dev ** 4 / np.where(diam > 0, diam, 1.0) ** 3, 0.0)
    rel = (lhs - rhs) / np.where(diam > 0, diam, 1.0)
    bad = np.flatnonzero(rel < -ROUNDOFF)
    order = bad[np.argsort(rel[bad])][:witnesses] if len(bad) else np.argsort(rel)[:0]
    per_regime = {}
    for r, name in enumerate(REGIMES):
        sel = tags == r
        per_regime[name] = {"samples": int(sel.sum()),
                            "violations": int((rel[sel] < -ROUNDOFF).sum()),
                            "min_slack": float(rel[sel].min()) if sel.any() else None}
    return {
        "config": {"epsilon": cfg.epsilon, "eta": cfg.eta, "samples": cfg.samples, "seed": cfg.seed,
                   "regime_weights": list(cfg.regime_weights)},
        "samples": int(len(P)),
        "violations": int(len(bad)),
        "min_slack": float(rel.min()) if len(rel) else None,
        "regimes": per_regime,
        "witnesses": [{"points": P[k].tolist(), "lhs": float(lhs[k]), "rhs": float(rhs[k])} for k in order],
    }
