import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heistsp.curves import Arc, gen_oscillating, gen_segment
from heistsp.filtration import (
    Prefiltration,
    PrefiltrationError,
    audit_filtration,
    check_prefiltration,
    children,
    chord_sums,
    complete_filtration,
    d_tau,
    deviation,
    lambda_arcs,
    lambda_prime,
    modified_four_point,
    prefiltration_from_cubes,
    synthetic_prefiltration,
    telescoping_bound,
)
from heistsp.heisenberg import MetricCtx, dist_point_to_segment, horizontal_segment
from heistsp.multires import Ball, CubeForest, build_cubes, build_nets, multiresolution, split_families

CTX = MetricCtx(1.0)


def osc(stages):
    return gen_oscillating(0.6, 0.5, stages).normalized(CTX)[0]


def synthetic(seed=1, stages=3, J=3, L=0.2, levels=3):
    pre = synthetic_prefiltration(CTX, osc(stages), J, L, levels, seed=seed)
    return pre, complete_filtration(CTX, pre, min_J=J)


# lambda arcs -------------------------------------------------------------


def single_cube(center, radius, n=0, J=10):
    forest = build_cubes(CTX, [Ball(tuple(center), radius, n, 0)], J)
    return forest.cubes[0]


def test_lambda_arcs_examples():
    c = gen_segment(4.0, pieces=40)
    # ball at the far end: out-and-back parameters form one interval around the turn
    q = single_cube([4.0, 0, 0], 1.0)
    arcs = lambda_arcs(CTX, c, q, q.ball.scaled(0.5))
    assert len(arcs) == 1
    assert arcs[0].a == pytest.approx(3.0, abs=1e-9) and arcs[0].b == pytest.approx(5.0, abs=1e-9)
    # a ball in the middle is crossed twice by the retracing loop, with the same image
    q = single_cube([2.0, 0, 0], 1.0)
    arcs = lambda_arcs(CTX, c, q, q.ball.scaled(0.5))
    assert [(round(a.a, 9), round(a.b, 9)) for a in arcs] == [(1.0, 3.0), (5.0, 7.0)]
    q = single_cube([2.0, 5.0, 0], 1.0)
    assert lambda_arcs(CTX, c, q, q.ball.scaled(0.5)) == []


def test_lambda_arcs_diameter_bracket():
    c = osc(3)
    rng = np.random.default_rng(0)
    for _ in range(5):
        center = c(rng.uniform(0, c.T))
        r = 0.1
        q = single_cube(center, 2 * r)
        for arc in lambda_arcs(CTX, c, q, q.ball.scaled(0.5)):
            d = arc.diameter(CTX)
            assert r * (1 - 1e-9) <= d <= 5 * r
            assert q.contains_point(CTX, c(np.linspace(arc.a, arc.b, 50)), tol=1e-9).all()


# prefiltrations ----------------------------------------------------------


def test_prefiltration_from_cubes_examples():
    c = gen_segment(4.0, pieces=40)
    empty = prefiltration_from_cubes(CTX, c, CubeForest([], 10))
    assert empty.is_empty()
    forest = build_cubes(CTX, [Ball((4.0, 0.0, 0.0), 2.0, 0, 0)], 10)
    pre = prefiltration_from_cubes(CTX, c, forest)
    assert list(pre.levels) == [0] and len(pre.levels[0]) == 1


def test_nested_prefiltration_on_a_long_segment():
    c = gen_segment(1.0, pieces=64)
    J = 2
    nets = build_nets(CTX, c.resampled(0.01).path, range(6, 6 + J + 1))
    balls = [b.scaled(2) for b in multiresolution(nets) if b.n in (6, 6 + J)]
    fam = split_families(CTX, balls, J)[0]
    pre = prefiltration_from_cubes(CTX, c, build_cubes(CTX, fam, J))
    assert len([k for k, v in pre.levels.items() if v]) == 2
    assert check_prefiltration(CTX, pre) == []


def test_check_prefiltration_flags_overlap():
    c = gen_segment(1.0, pieces=8)
    pre = Prefiltration(c, 10, 0.25, {0: [Arc(c, 0.0, 0.6), Arc(c, 0.5, 1.0)]})
    assert any(p.startswith("(ii)") for p in check_prefiltration(CTX, pre))


# completion -------------------------------------------------------------


def test_completion_keeps_a_compliant_partition():
    c = gen_segment(1.0, pieces=8)
    pre = Prefiltration(c, 10, 0.5, {0: [Arc(c, 0.0, 1.0), Arc(c, 1.0, 2.0)]})
    assert check_prefiltration(CTX, pre) == []
    filt = complete_filtration(CTX, pre)
    assert [(f.a, f.b) for f in filt.arcs] == [(0.0, 1.0), (1.0, 2.0)]
    assert lambda_prime(filt, 0, 0) == 0 and lambda_prime(filt, 0, 1) == 1
    assert audit_filtration(CTX, filt, pre)["problems"] == []


def test_completion_merges_a_small_gap():
    c = gen_segment(1.0, pieces=8)
    pre = Prefiltration(c, 10, 0.5, {0: [Arc(c, 2e-4, 2.0)]})
    filt = complete_filtration(CTX, pre)
    assert len(filt.levels[0]) == 1
    f = filt.arcs[lambda_prime(filt, 0, 0)]
    assert (f.a, f.b) == (2e-4, 2.0 + 2e-4)
    assert Arc(c, 2.0, 2.0 + 2e-4).diameter(CTX) < filt.delta * filt.scale(0)
    assert audit_filtration(CTX, filt, pre)["problems"] == []
    with pytest.raises(LookupError):
        lambda_prime(filt, 0, 1)


def test_completion_rejects_bad_input():
    c = gen_segment(1.0)
    pre = Prefiltration(c, 10, 0.5, {})
    with pytest.raises(PrefiltrationError):
        complete_filtration(CTX, pre)
    with pytest.raises(ValueError):
        complete_filtration(CTX, Prefiltration(c, 5, 0.5, {0: [Arc(c, 0, 1)]}))
    with pytest.raises(ValueError):
        complete_filtration(CTX, Prefiltration(c, 10, 0.5, {0: [Arc(c, 0, 1)]}), delta=1.5)


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_synthetic_three_level_instances(seed):
    pre, filt = synthetic(seed)
    assert check_prefiltration(CTX, pre) == []
    assert len(pre.levels) == 3
    assert audit_filtration(CTX, filt, pre)["problems"] == []
    for n, total in chord_sums(CTX, filt).items():
        assert total <= filt.curve.T * (1 + 1e-12)
    for i in range(len(filt.arcs)):
        assert d_tau(CTX, filt, i) <= 2 * filt.diameter(CTX, i) * (1 + 1e-12)


def test_audit_detects_a_broken_cover():
    pre, filt = synthetic()
    last = filt.levels[filt.max_level][3]
    filt.arcs[last] = dataclasses.replace(filt.arcs[last], b=filt.arcs[last].b - 1e-3)
    problems = audit_filtration(CTX, filt, pre)["problems"]
    assert any(p.startswith("(4)") or p.startswith("(3)") for p in problems)


def test_children_and_extension():
    pre, filt = synthetic()
    top = filt.levels[filt.m][0]
    assert children(filt, top, 0) == [top]
    kids = children(filt, top, 1)
    assert kids and all(filt.arcs[k].parent == top for k in kids)
    assert sum(filt.arcs[k].b - filt.arcs[k].a for k in kids) == pytest.approx(
        filt.arcs[top].b - filt.arcs[top].a, rel=1e-12)
    # distinct prefiltration arcs extend to distinct arcs
    for n, arcs in pre.levels.items():
        ext = [lambda_prime(filt, n, j) for j in range(len(arcs))]
        assert len(set(ext)) == len(ext)


# increments and the telescoping bound ---------------------------------


def test_d_tau_vanishes_on_a_straight_segment():
    c = gen_segment(1.0, pieces=8)
    pre = Prefiltration(c, 1, 0.5, {0: [Arc(c, 0.0, 1.0), Arc(c, 1.0, 2.0)],
                                    1: [Arc(c, x, x + 0.5) for x in (0.0, 0.5, 1.0, 1.5)]})
    filt = complete_filtration(CTX, pre, min_J=1)
    for i in filt.levels[0]:
        assert d_tau(CTX, filt, i) == pytest.approx(0.0, abs=1e-12)
        assert deviation(CTX, filt, i) == pytest.approx(0.0, abs=1e-12)
    assert d_tau(CTX, filt, filt.levels[1][0]) == 0.0


def test_d_tau_matches_grid_oracle():
    pre, filt = synthetic(seed=3, stages=2, J=2, L=0.3, levels=2)
    i = max(filt.levels[filt.m], key=lambda j: len(filt.arcs[j].children))
    top = horizontal_segment(filt.curve(filt.arcs[i].a), filt.curve(filt.arcs[i].b))
    best = 0.0
    for k in filt.arcs[i].children:
        seg = horizontal_segment(filt.curve(filt.arcs[k].a), filt.curve(filt.arcs[k].b))
        best = max(best, float(dist_point_to_segment(CTX, seg.eval(np.linspace(0, 1, 1000)), top).max()))
    assert d_tau(CTX, filt, i) == pytest.approx(best, abs=1e-4)
    assert d_tau(CTX, filt, i) >= best - 1e-12


def test_telescoping_and_modified_four_point_bound():
    pre, filt = synthetic(seed=5)
    dcache = {}
    for i in filt.levels[filt.m] + filt.levels[filt.m + 1]:
        t = telescoping_bound(CTX, filt, i, dcache)
        assert t["ok"], t
        assert t["lhs"] <= 2 * t["diam"]
    leaf = filt.levels[filt.max_level][0]
    assert modified_four_point(CTX, filt, leaf) is None
    r = modified_four_point(CTX, filt, filt.levels[filt.m][0])
    assert r["excess"] >= -1e-12 and r["ok"]
    assert r["lhs"] <= r["needed_constant"] * max(r["excess"], 0) * (1 + 1e-9) + 1e-15


def test_filtration_json():
    pre, filt = synthetic()
    rows = filt.to_json()
    assert len(rows) == len(filt.arcs)
    assert set(rows[0]) == {"id", "level", "a", "b", "parent", "kind"}
