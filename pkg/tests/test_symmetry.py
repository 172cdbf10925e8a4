import math

import numpy as np
import pytest

from convexcover.bodies import cross_polytope, cube, random_polygon, simplex, unit_ball
from convexcover.geometry import AffineImage, Ellipsoid, ReflectIntersect, VPolytope
from convexcover.symmetry import (bound_centred, bound_delta_kb, centred_symmetry, delta_kb,
                                  intersection_volume_ratio, overlap_ratio)

import oracles

# dense-grid clipping oracle: max over x of |T ∩ (x - T)| / |T| for the unit triangle
TRIANGLE_DELTA = 2 / 3
TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def test_triangle_oracle_value():
    best, x = oracles.dense_grid_delta(TRIANGLE, coarse=30, refine=2)
    assert best == pytest.approx(TRIANGLE_DELTA, abs=1e-6)
    assert np.allclose(x, [2 / 3, 2 / 3], atol=1e-3)


def test_delta_triangle():
    r = delta_kb(VPolytope(TRIANGLE), seed=0)
    assert r.method == "exact"
    assert r.delta == pytest.approx(TRIANGLE_DELTA, abs=1e-6)
    assert np.allclose(r.x_star, [2 / 3, 2 / 3], atol=1e-3)


def test_delta_random_polygon_matches_oracle():
    K = random_polygon(5)
    V = K.vertices
    order = np.argsort(np.arctan2(*(V - V.mean(axis=0)).T[::-1]))
    best, _ = oracles.dense_grid_delta(V[order], coarse=30, refine=2)
    assert delta_kb(K, seed=1).delta == pytest.approx(best, abs=1e-4)


@pytest.mark.parametrize("K", [cube(2), cross_polytope(2), unit_ball(2), cube(3),
                               cross_polytope(3), unit_ball(3)])
def test_symmetric_bodies_exactly_one(K):
    assert delta_kb(K, seed=0).delta == 1.0
    assert centred_symmetry(K)[0] == 1.0


def test_tetrahedron():
    assert delta_kb(simplex(3), seed=0).delta == pytest.approx(0.5, abs=1e-6)


def test_overlap_ratio_exact_vs_mc():
    K = simplex(2)
    x = np.array([0.5, 0.7])
    exact, se0 = overlap_ratio(K, x, "exact")
    mc, se = overlap_ratio(K, x, "mc", n=40000, seed=3)
    assert se0 == 0.0
    assert abs(exact - mc) < 4 * se
    assert intersection_volume_ratio(K, x) == exact


def test_mc_mode_on_lazy_body():
    body = ReflectIntersect(Ellipsoid([0, 0], [[2.0, 0.3], [0.3, 1.0]]), np.zeros(2))
    r = delta_kb(body, budget=1500, seed=0, n=5000)
    assert r.method == "mc"
    assert r.delta == pytest.approx(1.0, abs=4 * r.stderr + 1e-3)


def test_seed_determinism():
    K = AffineImage(simplex(2), [[1.0, 0.4], [0.0, 2.0]], [0.0, 1.0])
    a = delta_kb(K, seed=4, mode="mc", n=2000, budget=600)
    b = delta_kb(K, seed=4, mode="mc", n=2000, budget=600)
    assert np.array_equal(a.x_star, b.x_star) and a.delta == b.delta


def test_centred_below_delta():
    for seed in range(3):
        K = random_polygon(seed)
        assert centred_symmetry(K)[0] <= delta_kb(K, seed=seed).delta


def test_bounds():
    assert bound_delta_kb(2, 12**-0.5) == pytest.approx(math.exp(2 * 12 / 2**15) / 4)
    assert bound_centred(2, 12**-0.5) == pytest.approx(math.exp(2 * 12 / 2**16) / 4)
    assert bound_delta_kb(3, 1e9) == pytest.approx(1 / 8)
    with pytest.raises(ValueError):
        bound_delta_kb(2, 0.0)
