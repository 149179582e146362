import logging

import numpy as np
import pytest
from scipy.stats import norm

from mlfilter import (DegeneracyError, LinearModel, ParticleCloud, kalman_filter,
                      log_normalizing_constant, normalizing_constant, pf_init,
                      pf_posterior_mean, pf_run, pf_step, simulate, weight_function)
from mlfilter.experiments import linear_benchmark_model
from mlfilter.particle import cloud_to_csv


def scalar_model(q=0.2, r=0.5):
    return LinearModel(F=[[0.9]], H=[[1.0]], Q=[[q]], R=[[r]], mu=[0.0], P0=[[1.0]])


def test_init_cloud_moments():
    m = linear_benchmark_model()
    cloud = pf_init(m, 20000, 0)
    assert cloud.k == 0
    assert np.allclose(cloud.weights, 1 / 20000)
    assert np.allclose(pf_posterior_mean(cloud), m.mu, atol=0.02)
    assert np.allclose(np.cov(cloud.particles.T), m.P0, atol=0.02)


def test_init_requires_two_particles():
    with pytest.raises(ValueError):
        pf_init(scalar_model(), 1, 0)


def test_cloud_weight_validation():
    with pytest.raises(ValueError):
        ParticleCloud(k=0, particles=np.zeros((3, 1)), weights=np.array([0.5, 0.5, 0.5]))
    with pytest.raises(ValueError):
        ParticleCloud(k=0, particles=np.zeros((3, 1)), weights=np.array([0.5, 0.5]))


def test_step_advances_and_resamples():
    m = scalar_model()
    cloud = pf_init(m, 500, 1)
    nxt = pf_step(m, cloud, np.array([0.4]), 2)
    assert nxt.k == 1
    assert nxt.parents.shape == cloud.particles.shape
    assert np.allclose(nxt.weights, 1 / 500)
    assert 1.0 <= nxt.ess <= 500.0


def test_step_reproducible_by_seed():
    m = scalar_model()
    cloud = pf_init(m, 200, 1)
    a = pf_step(m, cloud, np.array([0.1]), 7)
    b = pf_step(m, cloud, np.array([0.1]), 7)
    assert np.array_equal(a.particles, b.particles)


def test_systematic_resampling_supported():
    m = scalar_model()
    cloud = pf_init(m, 200, 1)
    s = pf_step(m, cloud, np.array([0.1]), 7, resampling="systematic")
    assert s.k == 1
    with pytest.raises(ValueError):
        pf_step(m, cloud, np.array([0.1]), 7, resampling="stratified")


def test_degenerate_observation_raises():
    m = scalar_model(r=1e-12)
    cloud = pf_init(m, 100, 3)
    with pytest.raises(DegeneracyError) as exc:
        pf_step(m, cloud, np.array([1e200]), 4)
    assert np.isfinite(exc.value.max_loglik) or exc.value.max_loglik == -np.inf


def test_ess_warning_logged(caplog):
    m = scalar_model(q=1e-6, r=1e-4)
    cloud = pf_init(m, 300, 5)
    with caplog.at_level(logging.WARNING, logger="mlfilter.particle"):
        pf_step(m, cloud, np.array([2.5]), 6)
    assert any("effective sample size" in r.message for r in caplog.records)


def test_posterior_mean_tracks_kalman():
    m = linear_benchmark_model()
    t = simulate(m, 40, 11)
    states = kalman_filter(m, t.observations)
    clouds = pf_run(m, t.observations, 4000, 12)
    gaps = [np.abs(pf_posterior_mean(clouds[k]) - states[k].x_post).max()
            for k in range(1, 41)]
    assert np.mean(gaps) < 0.15


def test_normalizing_constant_single_particle():
    # a one-particle cloud makes the predictive density a single Gaussian
    m = scalar_model(q=0.2)
    cloud = ParticleCloud(k=0, particles=np.array([[0.3]]), weights=np.array([1.0]))
    x = 0.5
    want = norm.logpdf(x, loc=0.9 * 0.3, scale=np.sqrt(0.2))
    assert log_normalizing_constant(m, cloud, np.array([x])) == pytest.approx(want)
    assert normalizing_constant(m, cloud, np.array([x])) == pytest.approx(np.exp(want))


def test_weight_function_is_posterior_over_parents():
    m = scalar_model(q=0.2)
    particles = np.array([[0.0], [1.0]])
    cloud = ParticleCloud(k=0, particles=particles, weights=np.array([0.5, 0.5]))
    x = np.array([0.9])  # exactly the transition mean of particle 2
    w = weight_function(m, cloud, x)
    assert w.sum() == pytest.approx(1.0)
    assert w[1] > w[0]
    logp = norm.logpdf(0.9, loc=[0.0, 0.9], scale=np.sqrt(0.2))
    want = np.exp(logp) / np.exp(logp).sum()
    assert np.allclose(w, want)


def test_weight_function_degeneracy():
    m = scalar_model(q=1e-12)
    cloud = ParticleCloud(k=0, particles=np.array([[0.0], [0.1]]),
                          weights=np.array([0.5, 0.5]))
    with pytest.raises(DegeneracyError):
        weight_function(m, cloud, np.array([1e200]))


def test_pf_run_lengths_and_csv(tmp_path):
    m = scalar_model()
    t = simulate(m, 8, 13)
    clouds = pf_run(m, t.observations, 50, 14)
    assert [c.k for c in clouds] == list(range(9))
    path = tmp_path / "clouds.csv"
    cloud_to_csv(clouds, path)
    assert len(path.read_text().strip().splitlines()) == 1 + 9 * 50
