import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lscox.lattice import PointPattern, build_lattice
from lscox.simulate import poisson_pattern, preset_examples
from lscox.summaries import EnvelopeResult, PosteriorIntensitySamples, \
    centered_l, empty_space_estimate, envelope, isotropic_weights, \
    pcf_estimate, ripley_k


WINDOW = (1.0, 1.0)


def test_isotropic_weights_interior_circle_is_one():
    pts = np.array([[0.5, 0.5]])
    d = np.array([[0.2]])
    w = isotropic_weights(pts, WINDOW, d)
    assert_allclose(w, 1.0, rtol=1e-12)


def test_isotropic_weights_edge_and_corner():
    # circle centered on an edge loses half its circumference
    pts = np.array([[0.0, 0.5], [0.0, 0.0]])
    d = np.array([[0.1], [0.1]])
    w = isotropic_weights(pts, WINDOW, d)
    assert_allclose(w[0, 0], 2.0, rtol=1e-12)
    # corner circle keeps a quarter
    assert_allclose(w[1, 0], 4.0, rtol=1e-12)
    assert (w >= 1.0 - 1e-12).all()


def test_isotropic_weights_partial_overlap_value():
    # center at distance t from one edge, radius d > t:
    # outside angle 2 acos(t/d), weight 1/(1 - acos(t/d)/pi)
    t, d = 0.05, 0.1
    w = isotropic_weights(np.array([[t, 0.5]]), WINDOW, np.array([[d]]))
    expect = 1.0 / (1.0 - math.acos(t / d) / math.pi)
    assert_allclose(w[0, 0], expect, rtol=1e-12)


def test_ripley_k_poisson_pattern():
    rng = np.random.default_rng(4)
    pat = poisson_pattern(600.0, WINDOW, rng)
    r = np.linspace(0.01, 0.12, 12)
    k = ripley_k(pat, WINDOW, r)
    assert_allclose(k, np.pi * r**2, rtol=0.25)
    lcent = centered_l(pat, WINDOW, r)
    assert np.abs(lcent).max() < 0.01


def test_ripley_k_needs_two_points():
    with pytest.raises(ValueError):
        ripley_k(PointPattern(np.array([[0.5, 0.5]])), WINDOW, [0.1])


def test_ripley_k_drops_out_of_range_distances():
    rng = np.random.default_rng(5)
    pat = poisson_pattern(100.0, WINDOW, rng)
    with pytest.warns(RuntimeWarning):
        k = ripley_k(pat, WINDOW, np.array([0.1, 0.7]))
    assert k.shape == (1,)


def test_pcf_estimate_near_one_for_poisson():
    rng = np.random.default_rng(6)
    pat = poisson_pattern(800.0, WINDOW, rng)
    r = np.linspace(0.03, 0.12, 8)
    g = pcf_estimate(pat, WINDOW, r)
    assert np.abs(g - 1.0).max() < 0.25
    with pytest.raises(ValueError):
        pcf_estimate(pat, WINDOW, r, bandwidth=0.0)


def test_empty_space_estimate_poisson_reference():
    rng = np.random.default_rng(7)
    pat = poisson_pattern(500.0, WINDOW, rng)
    r = np.array([0.02, 0.04, 0.06])
    f = empty_space_estimate(pat, WINDOW, r)
    expect = 1.0 - np.exp(-500.0 * np.pi * r**2)
    assert np.abs(f - expect).max() < 0.1
    assert (np.diff(f) >= 0).all()


def test_empty_space_estimate_rejects_empty_pattern():
    with pytest.raises(ValueError, match="empty"):
        empty_space_estimate(PointPattern(np.empty((0, 2))), WINDOW,
                             np.array([0.05]))


def test_envelope_refuses_small_sims_and_bad_statistic():
    rng = np.random.default_rng(8)
    pat = poisson_pattern(100.0, WINDOW, rng)
    model = preset_examples("two-constant")
    lat = build_lattice(WINDOW, 16, 16, margin_level=0.45)
    with pytest.raises(ValueError, match="20"):
        envelope(pat, model, "L", n_sims=10, lattice=lat, rng=rng)
    with pytest.raises(ValueError):
        envelope(pat, model, "Q", n_sims=20, lattice=lat, rng=rng)
    with pytest.raises(ValueError):
        envelope(pat, model, "L", n_sims=20, lattice=lat, rng=rng, level=1.5)


def test_envelope_model_source_shapes_and_bands():
    rng = np.random.default_rng(9)
    model = preset_examples("two-constant")
    lat = build_lattice(WINDOW, 16, 16, margin_level=0.45)
    pat = poisson_pattern(150.0, WINDOW, rng)
    env = envelope(pat, model, "L", n_sims=20, lattice=lat,
                   rng=np.random.default_rng(1))
    assert isinstance(env, EnvelopeResult)
    assert env.r.shape == env.observed.shape == env.mean.shape
    assert (env.lo <= env.hi).all()
    assert 0.0 <= env.fraction_inside() <= 1.0
    assert env.n_sims == 20


def test_envelope_level_one_is_min_max():
    rng = np.random.default_rng(10)
    model = preset_examples("two-constant")
    lat = build_lattice(WINDOW, 16, 16, margin_level=0.45)
    pat = poisson_pattern(150.0, WINDOW, rng)
    r = np.linspace(0.02, 0.2, 6)
    a = envelope(pat, model, "L", n_sims=20, level=1.0, r=r, lattice=lat,
                 rng=np.random.default_rng(2))
    b = envelope(pat, model, "L", n_sims=20, level=0.5, r=r, lattice=lat,
                 rng=np.random.default_rng(2))
    # the full-level band contains the half-level band everywhere
    assert (a.lo <= b.lo + 1e-12).all()
    assert (a.hi >= b.hi - 1e-12).all()


def test_envelope_thread_count_does_not_change_results():
    rng = np.random.default_rng(11)
    model = preset_examples("two-constant")
    lat = build_lattice(WINDOW, 16, 16, margin_level=0.45)
    pat = poisson_pattern(150.0, WINDOW, rng)
    r = np.linspace(0.02, 0.2, 6)
    one = envelope(pat, model, "g", n_sims=24, r=r, lattice=lat,
                   rng=np.random.default_rng(3), threads=1)
    four = envelope(pat, model, "g", n_sims=24, r=r, lattice=lat,
                    rng=np.random.default_rng(3), threads=4)
    assert_allclose(one.mean, four.mean)
    assert_allclose(one.lo, four.lo)
    assert_allclose(one.hi, four.hi)


def test_envelope_from_posterior_snapshots():
    lat = build_lattice(WINDOW, 12, 12)
    rng = np.random.default_rng(12)
    snaps = np.log(150.0) + 0.1 * rng.standard_normal((5,) + lat.shape)
    source = PosteriorIntensitySamples(lat, snaps)
    pat = poisson_pattern(150.0, WINDOW, rng)
    env = envelope(pat, source, "F", n_sims=20,
                   rng=np.random.default_rng(4))
    assert env.statistic == "F"
    assert np.isfinite(env.mean).all()
    # a Poisson pattern at the matching rate stays mostly inside
    assert env.fraction_inside() > 0.5


def test_posterior_intensity_samples_validation():
    lat = build_lattice(WINDOW, 8, 8)
    with pytest.raises(ValueError):
        PosteriorIntensitySamples(lat, np.zeros((3, 4, 4)))
