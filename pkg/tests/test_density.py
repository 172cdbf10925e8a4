import math

import numpy as np
import pytest

from convexcover.bodies import cube
from convexcover.density import (GridDensity, GridError, centroid_value_check, check_lemma22,
                                  convolve_double, dump_grid, grid_indicator_density, load_grid,
                                  logconcavity_check, make_grid, midpoint_density,
                                  midpoint_values, sk_chain, small_ball_probe)
from convexcover.geometry import Ball, VPolytope
from convexcover.isotropy import isotropic_normalize
from convexcover.sampler import sample_sk

import oracles

UNIT_TRIANGLE = VPolytope(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]) * math.sqrt(2))


def test_indicator_square_interior_is_one():
    f = grid_indicator_density(cube(2), 1 / 64)
    inner = f.values[f.values > 0.999]
    assert np.allclose(inner, 1.0)
    assert f.mass == pytest.approx(1.0, abs=1e-3)


def test_indicator_disc():
    disc = Ball([0, 0], 1 / math.sqrt(math.pi))
    f = grid_indicator_density(disc, 1 / 64)
    assert f.mass == pytest.approx(1.0, abs=1e-3)
    assert f(np.array([[0.0, 0.0]]))[0] == pytest.approx(1.0)
    assert f(np.array([[0.7, 0.0]]))[0] == 0.0


def test_grid_too_coarse():
    with pytest.raises(GridError):
        make_grid(cube(2), 0.2)


def test_midpoint_values_square():
    v = midpoint_values(cube(2), [[0.5, 0.5], [0.0, 0.0], [0.25, 0.5]])
    assert v[0] == 4.0
    assert v[1] == 0.0
    assert v[2] == pytest.approx(2.0)


def test_midpoint_triangle_centroid():
    c = np.array([[1.0, 1.0]]) * math.sqrt(2) / 3
    assert midpoint_values(UNIT_TRIANGLE, c)[0] == pytest.approx(8 / 3, abs=1e-12)


def test_midpoint_density_any_volume_has_unit_mass():
    f = midpoint_density(Ball([0, 0], 1.0), 1 / 32)
    assert f.mass == pytest.approx(1.0, abs=2e-3)


def test_convolve_uniform_interval_gives_triangle():
    f = grid_indicator_density(cube(1), 1 / 512)
    g = convolve_double(f)
    z = g.axes()[0]
    want = oracles.irwin_hall_mean_density(2, z)
    assert np.max(np.abs(g.values - want)) < 0.02
    assert g.values.max() == pytest.approx(2.0, abs=0.01)


def test_convolve_halves_variance_of_bump():
    h = 1 / 256
    x = -1 + h * np.arange(512)
    vals = np.exp(-0.5 * (x / 0.1) ** 2)
    vals /= vals.sum() * h
    f = GridDensity(np.array([x[0]]), h, vals)
    g = convolve_double(f)
    assert g.covariance()[0, 0] == pytest.approx(f.covariance()[0, 0] / 2, rel=0.02)


def test_sk_chain_irwin_hall():
    chain = sk_chain(cube(1), 4, 1 / 1024)
    for k in range(1, 5):
        z = chain[k].axes()[0]
        err = np.max(np.abs(chain[k].values - oracles.irwin_hall_mean_density(2**k, z)))
        assert err < 1e-3


def test_lemma_checks_interval():
    rows = check_lemma22(cube(1), 3, 1 / 1024)
    assert [r.k for r in rows] == [1, 2, 3]
    assert all(r.passed for r in rows)


def test_lemma_checks_triangle():
    assert all(r.passed for r in check_lemma22(UNIT_TRIANGLE, 2, 1 / 128))


def test_midpoint_identity_disc():
    disc = Ball([0, 0], 1 / math.sqrt(math.pi))
    f1 = midpoint_density(disc, 1 / 128)
    conv = convolve_double(grid_indicator_density(disc, 1 / 128))
    assert np.max(np.abs(conv.values - f1.values)) <= conv.tau()


def test_logconcavity_negative_control():
    h = 1 / 128
    x = -2 + h * np.arange(512)
    vals = np.exp(-0.5 * ((x - 0.8) / 0.2) ** 2) + np.exp(-0.5 * ((x + 0.8) / 0.2) ** 2)
    vals /= vals.sum() * h
    f = GridDensity(np.array([x[0]]), h, vals)
    assert not logconcavity_check(f, seed=0).passed


def test_logconcavity_and_centroid_on_sk():
    chain = sk_chain(UNIT_TRIANGLE, 2, 1 / 128)
    for f in chain[1:]:
        assert logconcavity_check(f, seed=1).passed
        assert centroid_value_check(f).passed


def test_density_matches_sampled_sk_histogram():
    iso = isotropic_normalize(UNIT_TRIANGLE, verify=False).body
    f = sk_chain(iso, 2, 1 / 128)[2]
    S = sample_sk(iso, 2, 200000, 5).points
    r = 0.05
    centre = np.zeros(2)
    p = np.mean(np.linalg.norm(S - centre, axis=1) <= r)
    # small-disc probability over its area approximates the density at the centre
    assert p / (math.pi * r * r) == pytest.approx(f(centre[None, :])[0], rel=0.05)


def test_small_ball_probe_markov():
    iso = isotropic_normalize(cube(2), verify=False).body
    probe = small_ball_probe(iso, 2, R=0.1, n=50000, seed=0)
    assert probe.markov_ok
    assert probe.tail_sk <= probe.markov_bound
    assert probe.ratio > 1.0


def test_small_ball_formula_fallback():
    iso = isotropic_normalize(cube(2), verify=False).body
    probe = small_ball_probe(iso, 1, R=1e-5, n=1000, seed=0)
    assert probe.p_x_from_formula
    assert probe.p_x == pytest.approx(math.pi * 1e-10)


def test_grid_round_trip(tmp_path):
    f = grid_indicator_density(UNIT_TRIANGLE, 1 / 32)
    path = tmp_path / "f.grid"
    dump_grid(f, path)
    g = load_grid(path)
    assert np.array_equal(f.values, g.values)
    assert np.array_equal(f.origin, g.origin) and f.h == g.h
