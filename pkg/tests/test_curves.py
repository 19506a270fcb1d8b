import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heistsp.curves import (
    Arc,
    Curve,
    DegenerateArcError,
    L_tau,
    arc_deviation,
    arc_diameter,
    beta_arc,
    curve_length,
    gen_circle,
    gen_oscillating,
    gen_random_walk,
    gen_segment,
    gen_square,
    gen_tent,
    gen_two_strand,
    lift_increments,
    lift_planar,
    oscillating_length,
    point_set_diameter,
    polyline_length,
)
from heistsp.heisenberg import MetricCtx, dist_to_horizontal, distance, inverse, multiply, segment_frame

CTX = MetricCtx(1.0)


def dense(arc: Arc, n: int = 10001) -> np.ndarray:
    return arc.curve(np.linspace(arc.a, arc.b, n))


# construction and lifting -------------------------------------------------


def test_lift_examples():
    np.testing.assert_array_equal(lift_increments([[0, 0], [1, 0]]), [[0, 0, 0], [1, 0, 0]])
    square = lift_increments([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]])
    # the height gained around a closed planar loop is its signed area
    np.testing.assert_allclose(square[-1], [0, 0, 1], atol=1e-15)
    back = lift_increments([[0, 0], [0.3, 0.4], [0, 0]])
    np.testing.assert_array_equal(back[-1], [0, 0, 0])


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=2, max_size=30))
def test_lift_is_horizontal_and_isometric(planar):
    planar = np.array(planar)
    pts = lift_increments(planar)
    # consecutive lifted points are co-horizontal, so d equals the planar step
    step = np.linalg.norm(np.diff(planar, axis=0), axis=1)
    d = distance(CTX, pts[:-1], pts[1:])
    np.testing.assert_allclose(d, step, rtol=1e-9, atol=1e-9)
    # signed-area oracle for the height
    x, y = planar[:, 0], planar[:, 1]
    area2 = np.concatenate([[0.0], np.cumsum(x[:-1] * y[1:] - x[1:] * y[:-1])])
    np.testing.assert_allclose(pts[:, 2], 0.5 * area2, atol=1e-9)


def test_curve_validation():
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 2.0, 1.0]), np.zeros((3, 3)), 3.0)
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 1.0]), np.zeros((3, 3)), 3.0)
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 5.0]), np.zeros((2, 3)), 3.0)


def test_open_path_is_stored_as_retrace():
    c = gen_segment(1.0)
    assert c.n_path == 2 and c.T == pytest.approx(2.0)
    np.testing.assert_allclose(c(0.5), [0.5, 0, 0])
    np.testing.assert_allclose(c(1.5), [0.5, 0, 0])
    np.testing.assert_allclose(c(2.0), [0, 0, 0])


@pytest.mark.parametrize("curve", [gen_circle(), gen_square(), gen_random_walk(), gen_two_strand(),
                                   gen_oscillating(0.6, 0.5, 4), gen_tent(0.3, subdivide=3)])
def test_generators_are_1_lipschitz(curve):
    assert curve.lipschitz_defect(CTX) <= 1e-12
    s = np.random.default_rng(0).uniform(0, curve.T, size=(200, 2))
    d = distance(CTX, curve(s[:, 0]), curve(s[:, 1]))
    gap = np.abs(s[:, 0] - s[:, 1])
    assert np.all(d <= np.minimum(gap, curve.T - gap) + 1e-9)


def test_scalar_point_matches_vectorised():
    c = gen_random_walk(50, seed=3)
    for s in np.linspace(-1, 2 * c.T, 37):
        np.testing.assert_allclose(c.point(s), c(s), atol=1e-14)


def test_resample_keeps_the_image():
    c = gen_oscillating(0.6, 0.5, 2)
    r = c.resampled(0.01)
    assert np.diff(r.t).max() <= 0.01 + 1e-12
    assert r.T == pytest.approx(c.T, rel=1e-12)
    s = np.linspace(0, c.T, 333)
    np.testing.assert_allclose(r(s), c(s), atol=1e-12)


def test_dilate_and_normalize():
    c = gen_circle(0.5)
    d, lam = c.normalized(CTX)
    assert d.vertex_diameter(CTX) == pytest.approx(1.0, rel=1e-12)
    assert curve_length(CTX, d) == pytest.approx(lam * curve_length(CTX, c), rel=1e-12)


# lengths ----------------------------------------------------------------


def test_length_examples():
    assert polyline_length(CTX, gen_segment().points, closed=True) == pytest.approx(2.0)
    assert curve_length(CTX, gen_segment()) == pytest.approx(1.0)
    assert curve_length(CTX, lift_planar([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]])) == pytest.approx(4.0)


@given(st.integers(0, 10_000))
def test_horizontal_length_is_planar_length(seed):
    c = gen_random_walk(40, 0.1, seed=seed)
    planar = c.path[:, :2]
    assert curve_length(CTX, c) == pytest.approx(np.linalg.norm(np.diff(planar, axis=0), axis=1).sum(),
                                                 rel=1e-9)


def test_oscillating_length():
    assert curve_length(CTX, gen_oscillating(0.6, 0.5, 0)) == pytest.approx(1.0)
    assert oscillating_length(0.6, 0.5, 1) == pytest.approx(1 / math.cos(0.5))
    for st_ in (1, 3, 8):
        assert curve_length(CTX, gen_oscillating(0.6, 0.5, st_)) == pytest.approx(
            oscillating_length(0.6, 0.5, st_), rel=1e-9)
    # direct product evaluation
    assert oscillating_length(0.6, 0.5, 8) == pytest.approx(1.3485951976585486, rel=1e-12)
    with pytest.warns(RuntimeWarning):
        gen_oscillating(0.4, 0.5, 2)


# arcs -------------------------------------------------------------------


def test_arc_diameter_examples():
    c = gen_segment(1.0)
    assert arc_diameter(CTX, Arc(c, 0.3, 0.3)) == 0
    assert arc_diameter(CTX, Arc(c, 0.0, 1.0)) == pytest.approx(1.0)
    assert arc_diameter(CTX, Arc(c, 0.0, 2.0)) == pytest.approx(1.0)


@pytest.mark.parametrize("a,b", [(0.0, 1.2), (0.4, 0.9), (1.1, 2.3)])
def test_arc_diameter_matches_dense_oracle(a, b):
    c = gen_oscillating(0.6, 0.5, 2)
    arc = Arc(c, a, b)
    oracle = point_set_diameter(CTX, dense(arc, 1500))
    # vertices of a polyline arc realise its diameter up to the sampling of the oracle
    assert arc_diameter(CTX, arc) == pytest.approx(oracle, rel=1e-2)
    assert arc_diameter(CTX, arc) >= oracle * (1 - 1e-9)


def test_arc_wraps_the_circle():
    c = gen_circle()
    arc = Arc(c, c.T - 0.2, c.T + 0.3)
    assert arc.a == pytest.approx(c.T - 0.2) and arc.length == pytest.approx(0.5)
    np.testing.assert_allclose(arc.local(arc.b), relative(arc.start, arc.end), atol=1e-12)
    with pytest.raises(ValueError):
        Arc(c, 0.5, 0.4)


def relative(a, b):
    return multiply(inverse(a), b)


def test_L_tau():
    c = lift_planar([[0, 0], [0.5, 0.5], [1, 0]])
    arc = Arc(c, 0.0, c.t[2])
    seg = L_tau(arc)
    np.testing.assert_array_equal(np.asarray(seg.start), arc.start)
    # co-horizontal endpoints: the segment reaches the end exactly
    flat = gen_segment(1.0)
    np.testing.assert_allclose(L_tau(Arc(flat, 0.1, 0.8)).end, flat(0.8), atol=1e-15)
    far = Curve(np.array([0.0, 1.0]), np.array([[0, 0, 0], [1, 0, 5]]), 10.0)
    np.testing.assert_allclose(L_tau(Arc(far, 0.0, 1.0)).end, [1, 0, 0])


def test_beta_arc_examples():
    flat = gen_segment(1.0, pieces=5)
    assert beta_arc(CTX, Arc(flat, 0.1, 0.9)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DegenerateArcError):
        beta_arc(CTX, Arc(flat, 0.4, 0.4))
    walk = gen_random_walk(100, seed=1)
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.uniform(0, walk.T)
        arc = Arc(walk, a, a + rng.uniform(0.01, walk.T))
        assert beta_arc(CTX, arc) <= 2.0


def test_beta_arc_tent_matches_grid_oracle():
    c = gen_tent(0.2)
    arc = Arc(c, 0.0, c.t[2])
    pts = dense(arc, 20001)
    start, u, h = segment_frame(pts[0], pts[-1])
    oracle = dist_to_horizontal(CTX, pts, start, u, 0.0, h).max() / point_set_diameter(CTX, pts[::20])
    assert beta_arc(CTX, arc) == pytest.approx(oracle, abs=1e-4)
    assert arc_deviation(CTX, arc) > 0
