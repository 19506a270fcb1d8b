import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heistsp.heisenberg import (
    MetricCtx,
    HorizontalLine,
    dilate,
    dist_point_to_line,
    dist_point_to_segment,
    dist_to_horizontal,
    distance,
    horizontal_segment,
    inverse,
    koranyi_norm,
    multiply,
    project_pi,
    project_pi_tilde,
    rotate_z,
    segment_distance_sup,
)

coord = st.floats(-10, 10, allow_nan=False)
point = st.tuples(coord, coord, coord).map(np.array)
etas = st.sampled_from([0.1, 1.0, 16.0])


# group law ------------------------------------------------------------------


def test_multiply_examples():
    np.testing.assert_array_equal(multiply([1, 0, 0], [0, 1, 0]), [1, 1, 0.5])
    # z = (x y' - x' y) / 2 = (-1 * 1 - 0 * 0) / 2
    np.testing.assert_array_equal(multiply(inverse([1, 0, 0]), [0, 1, 0]), [-1, 1, -0.5])
    p = np.array([0.3, -2.0, 7.0])
    np.testing.assert_array_equal(multiply(p, inverse(p)), [0, 0, 0])


@given(point, point, point)
def test_associative(a, b, c):
    lhs = multiply(multiply(a, b), c)
    rhs = multiply(a, multiply(b, c))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


@given(point)
def test_identity_and_inverse(a):
    np.testing.assert_array_equal(multiply(a, np.zeros(3)), a)
    np.testing.assert_allclose(multiply(inverse(a), a), 0, atol=1e-12)


def test_multiply_broadcasts():
    a = np.random.default_rng(0).normal(size=(5, 1, 3))
    b = np.random.default_rng(1).normal(size=(1, 4, 3))
    assert multiply(a, b).shape == (5, 4, 3)
    with pytest.raises(ValueError):
        multiply([1, 2], [1, 2])


def test_dilate_examples():
    np.testing.assert_array_equal(dilate([1, 1, 1], 2), [2, 2, 4])
    np.testing.assert_array_equal(dilate([1, 0, 0], -1), [-1, 0, 0])
    p = np.array([0.2, 0.5, -3.0])
    np.testing.assert_array_equal(dilate(p, 1), p)
    with pytest.raises(ValueError):
        dilate([1, 0, 1], -1)


@given(point, point, st.floats(0.1, 10))
def test_dilation_is_automorphism(a, b, lam):
    np.testing.assert_allclose(dilate(multiply(a, b), lam), multiply(dilate(a, lam), dilate(b, lam)),
                               rtol=1e-12, atol=1e-9)


# norm and metric ------------------------------------------------------------


@pytest.mark.parametrize("eta", [0.1, 1.0, 16.0, 1e-21])
def test_norm_examples(eta):
    ctx = MetricCtx(eta)
    assert koranyi_norm(ctx, [3, 4, 0]) == pytest.approx(5, rel=1e-15)
    for t in (0.0, 0.5, -3.0):
        assert koranyi_norm(ctx, [1, 0, t]) == pytest.approx((1 + eta * t * t) ** 0.25, rel=1e-15)


def test_distance_examples():
    ctx = MetricCtx(1.0)
    assert koranyi_norm(ctx, [0, 0, 4]) == pytest.approx(2)
    assert distance(ctx, [0, 0, 0], [1, 0, 0]) == 1
    assert distance(ctx, [0, 0, 0], [0, 0, 1]) == 1
    with pytest.raises(ValueError):
        MetricCtx(0.0)
    assert MetricCtx(16.0).is_metric and not MetricCtx(17.0).is_metric


@given(point, point, point, etas)
def test_metric_axioms(a, b, c, eta):
    ctx = MetricCtx(eta)
    dab, dbc, dac = distance(ctx, a, b), distance(ctx, b, c), distance(ctx, a, c)
    assert dab == pytest.approx(distance(ctx, b, a), rel=1e-12, abs=1e-12)
    assert dac <= (dab + dbc) * (1 + 1e-12) + 1e-12
    assert distance(ctx, a, a) == 0


@given(point, point, point, etas)
def test_left_invariance(g, a, b, eta):
    ctx = MetricCtx(eta)
    d = distance(ctx, a, b)
    # z carries ~|g| |a| eps absolute error, which the norm turns into sqrt-size noise near 0
    floor = math.sqrt(1e-15 * (1 + np.abs(g).max()) * (1 + np.abs(a).max() + np.abs(b).max()))
    assert distance(ctx, multiply(g, a), multiply(g, b)) == pytest.approx(d, rel=1e-10, abs=floor)


@given(point, point, st.floats(0.01, 100), etas)
def test_dilation_homogeneity(a, b, lam, eta):
    ctx = MetricCtx(eta)
    # rounding lam^2 z leaves ~lam^2 |z| eps in z, i.e. sqrt-size noise for nearly equal points
    floor = lam * math.sqrt(1e-15 * (1 + np.abs(a).max() + np.abs(b).max()))
    assert distance(ctx, dilate(a, lam), dilate(b, lam)) == pytest.approx(lam * distance(ctx, a, b),
                                                                        rel=1e-10, abs=floor)


@given(point, point, st.floats(-7, 7), etas)
def test_rotation_isometry(a, b, theta, eta):
    ctx = MetricCtx(eta)
    np.testing.assert_allclose(rotate_z([1, 0, 0], math.pi / 2), [0, 1, 0], atol=1e-16)
    np.testing.assert_array_equal(rotate_z(a, 0.0), a)
    assert distance(ctx, rotate_z(a, theta), rotate_z(b, theta)) == pytest.approx(
        distance(ctx, a, b), rel=1e-10, abs=1e-9)


@given(point, point, etas)
def test_projection_is_1_lipschitz(a, b, eta):
    ctx = MetricCtx(eta)
    assert np.linalg.norm(project_pi(a) - project_pi(b)) <= distance(ctx, a, b) * (1 + 1e-12) + 1e-12


def test_projection_examples():
    np.testing.assert_array_equal(project_pi_tilde([1, 2, 3]), [1, 2, 0])
    line = HorizontalLine((0.4, -1.0, 2.0), 0.7)
    t = np.array([-3.0, 0.5, 2.0])
    pts = line.at(t)
    d = distance(MetricCtx(1.0), pts[:, None], pts[None, :])
    planar = np.linalg.norm(project_pi(pts)[:, None] - project_pi(pts)[None, :], axis=-1)
    np.testing.assert_allclose(d, planar, atol=1e-12)
    np.testing.assert_allclose(planar, np.abs(t[:, None] - t[None, :]), atol=1e-12)


# horizontal segments and distance to lines ---------------------------------


def test_segment_examples():
    seg = horizontal_segment([0, 0, 0], [1, 0, 5])
    np.testing.assert_array_equal(seg.end, [1, 0, 0])
    seg = horizontal_segment([1, 0, 0], [0, 1, 0])
    for t in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(seg.eval(t), [1 - t, t, t / 2])
    seg = horizontal_segment([0, 0, 0], [0, 1, 0])
    np.testing.assert_array_equal(seg.end, [0, 1, 0])


def test_distance_to_line_examples():
    ctx = MetricCtx(1.0)
    x_axis = HorizontalLine((0.0, 0.0, 0.0), 0.0)
    assert dist_point_to_line(ctx, [0, 0, 1], x_axis) == pytest.approx(1.0, rel=1e-14)
    assert dist_point_to_line(ctx, x_axis.at(1.7), x_axis) == pytest.approx(0.0, abs=1e-15)
    # exhaustive grid oracle over t in [-2, 3]
    p = np.array([0.5, 0.3, 0.0])
    t = np.arange(-2.0, 3.0 + 1e-12, 1e-4)
    oracle = distance(ctx, x_axis.at(t), p).min()
    assert dist_point_to_line(ctx, p, x_axis) == pytest.approx(oracle, abs=1e-6)


@given(point, st.floats(0, 2 * math.pi), etas, st.floats(0.1, 3))
def test_distance_to_segment_matches_dense_sampling(p, angle, eta, length):
    ctx = MetricCtx(eta)
    base = np.array([0.3, -0.2, 0.1])
    u = np.array([math.cos(angle), math.sin(angle)])
    exact = dist_to_horizontal(ctx, p, base, u, 0.0, length)
    t = np.linspace(0.0, length, 20001)
    pts = multiply(base, np.column_stack([t * u[0], t * u[1], np.zeros_like(t)]))
    sampled = distance(ctx, pts, p).min()
    assert exact <= sampled * (1 + 1e-12) + 1e-12
    # the sampled minimum sits within half a grid step of the true one
    assert sampled <= exact + length / 20000 + 1e-12


def test_degenerate_segment_is_its_start():
    ctx = MetricCtx(1.0)
    seg = horizontal_segment([1, 2, 3], [1, 2, 7])
    assert dist_point_to_segment(ctx, [0, 0, 0], seg) == pytest.approx(distance(ctx, [1, 2, 3], [0, 0, 0]))


def test_segment_distance_sup():
    ctx = MetricCtx(1.0)
    assert segment_distance_sup(ctx, [0, 0, 0], [1, 0, 0], [0, 0, 0], [1, 0, 0]) == pytest.approx(0, abs=1e-12)
    # a parallel segment offset by 0.1: distance to the offset line is 0.1 at every point
    s = segment_distance_sup(ctx, [0, 0.1, 0], [1, 0.1, 0], [-5, 0, 0], [6, 0, 0])
    t = np.linspace(0, 1, 2001)
    seg = horizontal_segment([0, 0.1, 0], [1, 0.1, 0])
    oracle = dist_point_to_segment(ctx, seg.eval(t), horizontal_segment([-5, 0, 0], [6, 0, 0])).max()
    assert s == pytest.approx(oracle, rel=1e-9)
