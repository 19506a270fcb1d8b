import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heistsp.curves import Arc, gen_segment, gen_tent, gen_two_strand, lift_planar
from heistsp.heisenberg import MetricCtx, dilate, dist_to_horizontal, distance, multiply, rotate_z, segment_frame
from heistsp.multires import Ball, build_nets
from heistsp.verify.beta import EmptyBallError, beta_ball, beta_ball_fit, beta_ball_grid_oracle, fit_line
from heistsp.verify.curvature import HypothesisError
from heistsp.verify.lemmas import (
    check_concave_power,
    check_flat_excess,
    check_lemma8,
    check_power_curvature,
    classify_ball,
    flat_excess_set,
    arc_segment_sides,
    power_curvature_sides,
    verify_helper_lemmas,
)

CTX = MetricCtx(1.0)


# helper inequalities --------------------------------------------------------


def test_concave_power_example():
    assert (1 + 16) ** 0.25 == pytest.approx(2.0305, abs=1e-4)
    assert check_concave_power(4, 1, 16)
    with pytest.raises(HypothesisError):
        check_concave_power(4, 1, 15)
    with pytest.raises(HypothesisError):
        check_concave_power(0.5, 1, 16)


@given(st.floats(1, 8), st.floats(1e-6, 1e6), st.floats(0, 1e3))
def test_concave_power_property(p, a, extra):
    assert check_concave_power(p, a, 2.0 ** p * a * (1 + extra))


def test_power_curvature_examples():
    a, b, c = np.array([0.0, 0, 0]), np.array([0.4, 0, 0]), np.array([1.0, 0, 0])
    lhs, rhs = power_curvature_sides(CTX, a, b, c, 1.0)
    assert lhs == pytest.approx(0, abs=1e-15) and rhs == pytest.approx(0, abs=1e-15)
    assert check_power_curvature(CTX, a, b, c, 1.0)
    with pytest.raises(HypothesisError):
        power_curvature_sides(CTX, a, [3.0, 0, 0], c, 1.0)
    with pytest.raises(HypothesisError):
        power_curvature_sides(CTX, a, b, c, 0.4)


@pytest.mark.parametrize("eta", [0.1, 1.0, 16.0])
def test_helper_lemmas_random(eta):
    rep = verify_helper_lemmas(MetricCtx(eta), n=2000, seed=3)
    assert rep["violations"] == 0
    assert rep["power_curvature"]["min_rel_slack"] >= -1e-12


# arc against its chord segment ----------------------------------------------


def test_arc_segment_comparison_on_a_straight_arc():
    c = gen_segment(1.0, pieces=4)
    out_sup, in_sup = arc_segment_sides(CTX, Arc(c, 0.1, 0.9))
    assert out_sup == pytest.approx(0, abs=1e-12) and in_sup == pytest.approx(0, abs=1e-12)
    assert check_lemma8(CTX, Arc(c, 0.1, 0.9)) == pytest.approx(0, abs=1e-12)


def test_arc_segment_comparison_tent_matches_dense_oracle():
    c = gen_tent(0.4)
    arc = Arc(c, 0.0, c.t[2])
    pts = c(np.linspace(arc.a, arc.b, 20001))
    start, u, h = segment_frame(pts[0], pts[-1])
    out_oracle = dist_to_horizontal(CTX, pts, start, u, 0.0, h).max()
    seg = multiply(start, np.column_stack([np.linspace(0, h, 1000) * u[0], np.linspace(0, h, 1000) * u[1],
                                           np.zeros(1000)]))
    # d(x, tau) as a min over the two horizontal pieces, then sup over the segment
    p0, u0, h0 = segment_frame(c.points[0], c.points[1])
    p1, u1, h1 = segment_frame(c.points[1], c.points[2])
    in_oracle = np.minimum(dist_to_horizontal(CTX, seg, p0, u0, 0, h0),
                           dist_to_horizontal(CTX, seg, p1, u1, 0, h1)).max()
    out_sup, in_sup = arc_segment_sides(CTX, arc)
    assert out_sup == pytest.approx(out_oracle, abs=1e-4)
    assert in_sup == pytest.approx(in_oracle, abs=1e-4)
    assert check_lemma8(CTX, arc) >= 0


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.sampled_from([0.1, 1.0, 16.0]))
def test_arc_segment_comparison_random_walk_arcs(seed, eta):
    from heistsp.curves import gen_random_walk

    ctx = MetricCtx(eta)
    c = gen_random_walk(60, 0.05, seed=seed)
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, c.T)
    arc = Arc(c, a, a + rng.uniform(0.01, c.T / 2))
    assert check_lemma8(ctx, arc) >= -1e-10 * max(arc.diameter(ctx), 1e-300)


# ball classification and flat excess ----------------------------------------


def corner():
    c = lift_planar([[-1, 0], [0, 0], [0, 1]])
    return c, Ball((0.0, 0.0, 0.0), 0.5, 1)


def test_classify_examples():
    c, ball = corner()
    beta_g = beta_ball(CTX, c.resampled(0.01).path, ball.c, ball.radius)
    arc = Arc(c, 0.5, 1.5)
    cls = classify_ball(CTX, ball, [arc], beta_g, eps0=0.5)
    assert cls.label == "G1" and cls.witness == 0
    flat = classify_ball(CTX, ball, [arc], 0.0, eps0=0.5)
    assert flat.label == "G2"


@given(st.floats(1e-3, 1.0), st.floats(1e-3, 1.0))
def test_classification_is_monotone_in_eps0(e1, e2):
    c, ball = corner()
    arcs = [Arc(c, 0.5, 1.5), Arc(c, 0.0, 0.9)]
    lo, hi = sorted((e1, e2))
    if classify_ball(CTX, ball, arcs, 0.3, lo).flat:
        assert classify_ball(CTX, ball, arcs, 0.3, hi).flat


def test_flat_excess_on_two_strands():
    eps0 = 0.01
    c = gen_two_strand(gap=0.05, pieces=64)
    ball = Ball((0.5, 0.0, 0.0), 0.25, 2)
    K = c.resampled(0.002).path
    beta_g = beta_ball(CTX, K, ball.c, ball.radius)
    tau = Arc(c, 0.0, 1.0)
    xi = Arc(c, 1.05, 2.05)
    assert classify_ball(CTX, ball, [tau, xi], beta_g, eps0).flat
    E = flat_excess_set(CTX, c, ball, tau, xi, spacing=1e-3)
    rho = 4 * eps0 * beta_g * ball.diameter
    nets = build_nets(CTX, E, [0])
    # replace the level by a rho-net of E
    from heistsp.multires import _greedy_extend

    idx = _greedy_extend(CTX, E, [], rho)
    cover = [Ball(tuple(E[i]), rho, 0) for i in idx]
    assert check_flat_excess(CTX, ball, cover, E, beta_g, eps0)
    with pytest.raises(HypothesisError):
        check_flat_excess(CTX, ball, cover[:3], E, beta_g, eps0)
    assert len(nets.levels[0]) >= 1


# beta numbers ------------------------------------------------------------


def test_beta_trivial_cases():
    assert beta_ball(CTX, [[0.1, 0.2, 0.3]], [0, 0, 0], 1.0) == 0.0
    line = multiply([0.2, -0.1, 0.4], np.column_stack([np.linspace(-1, 1, 9) * 0.6, np.linspace(-1, 1, 9) * 0.8,
                                                       np.zeros(9)]))
    assert beta_ball(CTX, line, line[4], 0.7) == pytest.approx(0.0, abs=1e-8)
    with pytest.raises(EmptyBallError):
        beta_ball(CTX, [[5.0, 0, 0]], [0, 0, 0], 1.0)
    with pytest.raises(ValueError):
        beta_ball(CTX, line, line[0], 0.0)


def test_beta_corner_matches_grid_oracle():
    c, _ = corner()
    K = c.resampled(0.05).path
    fit = beta_ball(CTX, K, [0, 0, 0], 1.0)
    oracle = beta_ball_grid_oracle(CTX, K, [0, 0, 0], 1.0)
    assert fit == pytest.approx(oracle, rel=0.02)
    assert fit <= oracle * (1 + 1e-9)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from([0.1, 1.0, 16.0]))
def test_beta_is_invariant_and_bounded(seed, eta):
    ctx = MetricCtx(eta)
    rng = np.random.default_rng(seed)
    K = rng.normal(size=(12, 3)) * 0.4
    center, r = K[0], 0.8
    b = beta_ball(ctx, K, center, r)
    assert 0.0 <= b <= 0.5
    g = rng.normal(size=3)
    theta, lam = rng.uniform(0, 2 * np.pi), float(np.exp(rng.uniform(-1, 1)))
    moved = multiply(g, rotate_z(dilate(K, lam), theta))
    b2 = beta_ball(ctx, moved, moved[0], lam * r)
    assert b2 == pytest.approx(b, rel=1e-3, abs=1e-6)


def test_fit_line_reports_its_line():
    q = np.array([[0.0, 0, 0], [0.5, 0.2, 0.1], [-0.4, -0.3, 0.05], [0.2, -0.5, -0.2]])
    fit = fit_line(CTX, q)
    base = np.array([-fit.s * math.sin(fit.theta), fit.s * math.cos(fit.theta), fit.z0])
    d = dist_to_horizontal(CTX, q, base, np.array([math.cos(fit.theta), math.sin(fit.theta)]))
    assert 2 * fit.beta == pytest.approx(d.max(), rel=1e-9)
    assert fit.n_points == 4


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.2, 0.8), st.floats(1.0, 3.0))
def test_width_grows_with_concentric_enlargement(seed, r, factor):
    rng = np.random.default_rng(seed)
    K = rng.normal(size=(15, 3)) * 0.5
    small = beta_ball(CTX, K, K[0], r) * 2 * r
    big = beta_ball(CTX, K, K[0], factor * r) * 2 * factor * r
    assert small <= big * (1 + 1e-6) + 1e-9
