import math

import numpy as np
import pytest

from convexcover.bodies import cross_polytope, cube, simplex, unit_ball
from convexcover.geometry import (AffineImage, Ball, DegenerateBodyError, Ellipsoid, GeometryError,
                                  HPolytope, Location, ReflectIntersect, UnsupportedVolumeError,
                                  VPolytope, affine_image, ball_volume, contains, exact_moments,
                                  exact_volume, gauge, inradius_about_origin, reflect_intersect,
                                  reflect_intersect_volumes, translate)

import oracles

TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def test_contains_square():
    sq = cube(2)
    assert contains(sq, [0.5, 0.5]) is Location.INSIDE
    assert contains(sq, [1.0, 0.5]) is Location.BOUNDARY
    assert contains(sq, [1.5, 0.5]) is Location.OUTSIDE
    assert contains(sq, [1.0 + 1e-12, 0.5], tol=1e-9) is Location.BOUNDARY


def test_contains_rejects_batches():
    with pytest.raises(GeometryError):
        contains(cube(2), [[0.1, 0.1], [0.2, 0.2]])


def test_gauge_of_centred_square():
    sq = translate(cube(2), [-0.5, -0.5])
    assert gauge(sq, [0.25, 0.0]) == pytest.approx(0.5)
    assert gauge(sq, [0.0, 0.0]) == 0.0
    assert gauge(sq, [1.0, 1.0]) == pytest.approx(2.0)


def test_gauge_requires_interior_origin():
    with pytest.raises(GeometryError):
        gauge(cube(2), [0.5, 0.5])


def test_gauge_agrees_with_bisection_default():
    E = Ellipsoid([0.0, 0.0], [[2.0, 0.5], [0.5, 1.0]])
    lazy = ReflectIntersect(E, np.zeros(2))
    p = np.array([[0.3, -0.8], [1.1, 0.2]])
    assert np.allclose(lazy.gauge(p), E.gauge(p), atol=1e-9)


def test_duplicate_rows_merge():
    P = HPolytope([[1, 0], [2, 0], [0, 1], [-1, 0], [0, -1]], [1, 1, 1, 0, 0])
    assert P.A.shape[0] == 4
    assert exact_volume(P) == pytest.approx(0.5)


def test_volumes_closed_forms():
    assert exact_volume(cube(3)) == pytest.approx(1.0, abs=1e-12)
    assert exact_volume(simplex(3)) == pytest.approx(1 / 6, abs=1e-12)
    assert exact_volume(cross_polytope(3)) == pytest.approx(4 / 3, abs=1e-12)
    assert exact_volume(cross_polytope(4)) == pytest.approx(2**4 / 24, abs=1e-12)
    assert exact_volume(unit_ball(3)) == pytest.approx(4 * math.pi / 3)
    assert exact_volume(VPolytope(TRIANGLE)) == pytest.approx(0.5)


def test_ellipsoid_and_affine_volume():
    E = Ellipsoid([1.0, 2.0], [[4.0, 0.0], [0.0, 1.0]])
    assert exact_volume(E) == pytest.approx(2 * math.pi)
    M = np.array([[2.0, 1.0], [0.0, 3.0]])
    assert exact_volume(affine_image(cube(2), M, [1.0, -1.0])) == pytest.approx(6.0)


def test_exact_volume_unsupported_above_four():
    with pytest.raises(UnsupportedVolumeError):
        exact_volume(cube(5))


def test_degenerate_polytope():
    flat = HPolytope([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 0, 0, 0])
    assert flat.degenerate
    assert exact_volume(flat) == 0.0


def test_infeasible_zero_row():
    with pytest.raises((GeometryError, DegenerateBodyError)):
        HPolytope([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]], [-1, 1, 1, 1, 1]).interior_point()


def test_non_finite_rejected():
    with pytest.raises(GeometryError):
        HPolytope([[1.0, np.nan]], [1.0])
    with pytest.raises(GeometryError):
        Ball([0.0, np.inf], 1.0)


def test_triangle_moments():
    vol, mean, cov = exact_moments(VPolytope(TRIANGLE))
    assert vol == pytest.approx(0.5)
    assert np.allclose(mean, [1 / 3, 1 / 3])
    assert np.allclose(cov, oracles.triangle_covariance(TRIANGLE), atol=1e-14)


def test_reflect_intersect_triangle_matches_clipping():
    rng = np.random.default_rng(3)
    K = VPolytope(TRIANGLE)
    xs = rng.uniform(0.2, 1.2, (25, 2))
    got = reflect_intersect_volumes(K, xs)
    want = [oracles.reflect_overlap_area(TRIANGLE, x) for x in xs]
    assert np.allclose(got, want, atol=1e-12)
    assert exact_volume(reflect_intersect(K, [2 / 3, 2 / 3])) == pytest.approx(1 / 3)


def test_reflect_intersect_symmetric_body_returns_itself():
    sq = cube(2)
    assert reflect_intersect(sq, [1.0, 1.0]) is sq
    B = Ball([0.5, 0.0], 1.0)
    assert reflect_intersect(B, [1.0, 0.0]) is B


def test_lens_volume_cap_formula():
    B = unit_ball(3)
    x = np.array([0.8, 0.0, 0.0])
    vol = reflect_intersect_volumes(B, x[None, :])[0]
    # cap formula: two caps of height 1 - 0.4
    h = 0.6
    cap = math.pi * h * h * (3 - h) / 3
    assert vol == pytest.approx(2 * cap, rel=1e-12)


def test_affine_image_of_ball_reflection_volume():
    M = np.array([[2.0, 0.3], [0.0, 0.5]])
    K = AffineImage(unit_ball(2), M, [0.1, 0.2])
    x = 2 * np.array([0.1, 0.2]) + M @ np.array([0.4, 0.0])
    lens = reflect_intersect_volumes(unit_ball(2), np.array([[0.4, 0.0]]))[0]
    assert reflect_intersect_volumes(K, x[None, :])[0] == pytest.approx(abs(np.linalg.det(M)) * lens)


def test_inradius():
    assert inradius_about_origin(translate(cube(2), [-0.5, -0.5])) == pytest.approx(0.5)
    assert inradius_about_origin(Ball([0, 0], 2.0)) == pytest.approx(2.0)


def test_ball_volume_formula():
    assert ball_volume(2, 2.0) == pytest.approx(4 * math.pi)
    assert ball_volume(4) == pytest.approx(math.pi**2 / 2)


def test_chord_square():
    sq = cube(2)
    lo, hi = sq.chord(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]]))
    assert lo[0] == pytest.approx(-0.5) and hi[0] == pytest.approx(0.5)


def test_vpolytope_membership_matches_hrep():
    rng = np.random.default_rng(0)
    V = rng.standard_normal((9, 3))
    P = VPolytope(V)
    X = rng.standard_normal((400, 3))
    assert np.array_equal(P.inside(X), P.as_hpolytope().inside(X, tol=1e-9))
