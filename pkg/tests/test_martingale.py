import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heistsp.curves import gen_circle, gen_random_walk
from heistsp.heisenberg import MetricCtx
from heistsp.verify.martingale import (
    DecompositionError,
    MNode,
    build_martingale,
    j_m,
    martingale_for_curve,
    random_tree,
    select_BM,
    verify_martingale,
)

CTX = MetricCtx(1.0)


def two_child_tree():
    return [MNode(np.array([[0.0, 1.0]]), 1.0, None, [1, 2]),
            MNode(np.array([[0.0, 0.4]]), 0.5, 0),
            MNode(np.array([[0.5, 0.9]]), 0.4, 0)]


def test_two_child_split():
    t = build_martingale(two_child_tree(), T=1.0, M=1, eps0=0.5, length=1.0)
    root = t.nodes[0]
    assert root.h1_R == pytest.approx(0.2)
    assert root.s == pytest.approx(1.1)
    assert t.mass[0][1] == pytest.approx(0.5 / 1.1)
    assert t.mass[0][2] == pytest.approx(0.4 / 1.1)
    assert t.rem[0][0] == pytest.approx(0.2 / 1.1)
    # leaves keep their full diameter on themselves
    assert t.rem[1][1] == pytest.approx(0.5)
    rep = verify_martingale(t, samples=1000)
    assert rep["ok"], rep["problems"]
    assert rep["mass_conservation"] <= 1e-12


def test_leaf_only_tree():
    t = build_martingale([MNode(np.array([[0.0, 2.0]]), 1.5)], T=2.0, M=0, eps0=1.0, length=2.0)
    assert t.remainder_density(0) == pytest.approx(0.75)
    assert np.allclose(t.density([0.1, 1.9]), 0.75)
    assert verify_martingale(t)["ok"]


def test_j_m():
    assert j_m(1, 0.01) == math.floor(1 - math.log2(0.1) + 10) + 1 == 15
    assert j_m(3, 0.01) == 17
    # an integer threshold still needs a strictly larger value
    assert j_m(0, 0.1) == 11


def test_select_BM():
    betas = [0.3, 0.5, 0.25, 0.2, 0.125]
    assert select_BM(None, betas, 1) == [0, 1, 2]
    assert select_BM(None, betas, 2) == [2, 3, 4]
    assert select_BM(None, betas, 1, flat=[True, False, True, True, True]) == [0, 2]


@pytest.mark.parametrize("bad", ["overlap", "outside", "parent", "empty"])
def test_decomposition_errors(bad):
    nodes = two_child_tree()
    if bad == "overlap":
        nodes[2].intervals = np.array([[0.3, 0.9]])
    elif bad == "outside":
        nodes[2].intervals = np.array([[0.5, 1.5]])
    elif bad == "parent":
        nodes[2].parent = 1
    else:
        nodes = [MNode(np.zeros((0, 2)), 0.0)]
    with pytest.raises(DecompositionError):
        build_martingale(nodes, T=2.0, M=1, eps0=0.5, length=1.0)


def test_bad_parameters():
    with pytest.raises(ValueError):
        build_martingale(two_child_tree(), T=1.0, M=1, eps0=0.0, length=1.0)


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.sampled_from([1, 3, 5]))
def test_random_trees_conserve_mass_and_stay_under_the_density_bound(seed, M):
    curve = gen_random_walk(40, 0.05, seed=seed % 50)
    nodes = random_tree(CTX, curve, depth=4, seed=seed)
    t = martingale_for_curve(CTX, curve, nodes, M=M, eps0=0.01)
    rep = verify_martingale(t, samples=2000, seed=seed)
    assert rep["mass_conservation"] <= 1e-12
    assert rep["prop_i_min_rel"] >= -1e-12
    assert rep["support_leak"] == 0
    assert rep["max_sampled_density"] <= rep["max_density"] * (1 + 1e-12)


def test_density_bound_violation_is_reported():
    # a cube whose diameter dwarfs the arclength it contains
    curve = gen_circle(0.5, 64)
    nodes = [MNode(np.array([[0.0, 1e-6]]), 10.0)]
    t = martingale_for_curve(CTX, curve, nodes, M=0, eps0=1.0)
    rep = verify_martingale(t)
    assert not rep["ok"]
    assert any("(ii)" in p for p in rep["problems"])
