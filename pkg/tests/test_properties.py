"""Randomized invariants checked with hypothesis."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from convexcover.bodies import random_polytope, symmetric_lattice_free
from convexcover.covering import lattice_points
from convexcover.density import convolve_double, grid_indicator_density, logconcavity_check
from convexcover.geometry import AffineImage, Ball, Ellipsoid, HPolytope, exact_volume, translate

import oracles

SETTINGS = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])

seeds = st.integers(0, 10_000)
dims = st.sampled_from([2, 3])
coords = st.floats(-3, 3, allow_nan=False)


def _centred_body(kind: int, d: int, seed: int):
    if kind == 0:
        P = random_polytope(d, seed)
        return translate(P, -P.interior_point())
    if kind == 1:
        return Ball(np.zeros(d), 0.5 + (seed % 7) / 7)
    M = np.random.default_rng(seed).standard_normal((d, d))
    return Ellipsoid(np.zeros(d), M @ M.T + np.eye(d))


@SETTINGS
@given(st.integers(0, 2), dims, seeds, st.lists(coords, min_size=3, max_size=3),
       st.floats(0.01, 20))
def test_gauge_positive_homogeneity(kind, d, seed, p, t):
    K = _centred_body(kind, d, seed)
    p = np.array(p[:d])
    if np.linalg.norm(p) < 1e-3:
        return
    g = float(K.gauge(p))
    assert np.isclose(float(K.gauge(t * p)), t * g, rtol=1e-7)


@SETTINGS
@given(st.integers(0, 2), dims, seeds, st.lists(coords, min_size=3, max_size=3))
def test_gauge_at_most_one_iff_inside(kind, d, seed, p):
    K = _centred_body(kind, d, seed)
    p = np.array(p[:d])
    g = float(K.gauge(p))
    if abs(g - 1) < 1e-6:
        return
    assert (g < 1) == bool(K.inside(p[None])[0])


@SETTINGS
@given(dims, seeds, st.integers(0, 10_000))
def test_affine_volume_covariance(d, seed, mseed):
    K = random_polytope(d, seed)
    rng = np.random.default_rng(mseed)
    M = rng.standard_normal((d, d)) + 2 * np.eye(d)
    if abs(np.linalg.det(M)) < 0.1:
        return
    image = AffineImage(K, M, rng.standard_normal(d))
    assert np.isclose(exact_volume(image), abs(np.linalg.det(M)) * exact_volume(K), rtol=1e-9)


@SETTINGS
@given(seeds, st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_polygon_overlap_matches_clipping_oracle(seed, x):
    from convexcover.symmetry import overlap_ratio

    K = random_polytope(2, seed)
    x = np.array(x) + 2 * K.interior_point()
    ours = overlap_ratio(K, x, mode="exact")[0]
    V = _ordered(K.vertices)
    ref = oracles.reflect_overlap_area(V, x) / oracles.shoelace(V)
    assert np.isclose(ours, ref, atol=1e-10)


def _ordered(V):
    c = V.mean(axis=0)
    return V[np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))]


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_self_convolution_stays_log_concave(seed):
    """Brunn-Minkowski along segments: the grid S_1 density passes the concavity probe."""
    K = random_polytope(2, seed)
    f = convolve_double(grid_indicator_density(K, 1 / 48))
    assert logconcavity_check(f, lines=60, seed=seed).passed


@SETTINGS
@given(dims, st.integers(0, 500), st.floats(0.5, 3.0))
def test_lattice_enumeration_matches_brute_force(d, seed, scale):
    K = symmetric_lattice_free(d, seed)
    K = HPolytope(K.A, K.b * scale)
    inner, bdry = lattice_points(K)
    radius = int(np.ceil(np.abs(np.r_[K.bounding_box().lower, K.bounding_box().upper]).max())) + 1
    bi, bb = oracles.brute_lattice_points(K.A, K.b, radius)
    assert {tuple(map(int, z)) for z in inner} == bi
    assert {tuple(map(int, z)) for z in bdry} == bb


@SETTINGS
@given(dims, seeds, st.floats(0.0, 1.0))
def test_section_volume_root_concave(d, seed, t):
    """|K ∩ (x - K)|^{1/d} is concave in x: check the midpoint inequality on a random chord."""
    from convexcover.symmetry import overlap_ratio

    K = random_polytope(d, seed)
    rng = np.random.default_rng(seed)
    c = 2 * K.interior_point()
    a, b = c + 0.3 * rng.standard_normal(d), c + 0.3 * rng.standard_normal(d)
    m = t * a + (1 - t) * b
    root = [overlap_ratio(K, p, mode="exact")[0] ** (1 / d) for p in (a, b, m)]
    assert root[2] >= t * root[0] + (1 - t) * root[1] - 1e-9
