import numpy as np
import pytest

from mlfilter import (LinearModel, ModelError, NonlinearModel, linear_prior_moments,
                      simulate, trajectory_from_csv, trajectory_to_csv)
from mlfilter.experiments import linear_benchmark_model, tanh_benchmark_model
from mlfilter.models import linear_model_from_dict, linear_model_to_dict


def scalar_model(q=0.2, r=0.5, f=0.9, h=1.0, p0=1.0, mu=0.0):
    return LinearModel(F=[[f]], H=[[h]], Q=[[q]], R=[[r]], mu=[mu], P0=[[p0]])


def test_dimensions():
    m = linear_benchmark_model()
    assert (m.p, m.q, m.m) == (3, 1, 0)


def test_shape_validation():
    with pytest.raises(ModelError):
        LinearModel(F=np.eye(2), H=[[1.0, 0.0]], Q=np.eye(3), R=[[1.0]],
                    mu=[0.0, 0.0], P0=np.eye(2))
    with pytest.raises(ModelError):
        LinearModel(F=np.eye(2), H=[[1.0, 0.0]], Q=[[1.0, 0.5], [0.4, 1.0]],
                    R=[[1.0]], mu=[0.0, 0.0], P0=np.eye(2))


def test_indefinite_covariance_rejected():
    with pytest.raises(ModelError):
        scalar_model(q=-0.1)


def test_controls_require_matrix():
    with pytest.raises(ModelError):
        LinearModel(F=np.eye(2), H=[[1.0, 0.0]], Q=np.eye(2), R=[[1.0]],
                    mu=[0.0, 0.0], P0=np.eye(2), u=[[1.0]])


def test_time_varying_stacks():
    F = np.stack([np.eye(2) * (1 + 0.1 * k) for k in range(5)])
    m = LinearModel(F=F, H=[[1.0, 0.0]], Q=np.eye(2), R=[[1.0]],
                    mu=[0.0, 0.0], P0=np.eye(2))
    assert np.allclose(m.F_at(3), np.eye(2) * 1.2)
    with pytest.raises(ModelError):
        m.F_at(6)


def test_control_term():
    m = LinearModel(F=[[1.0]], H=[[1.0]], Q=[[1.0]], R=[[1.0]], mu=[0.0],
                    P0=[[1.0]], G=[[2.0]], u=[[3.0], [4.0]])
    assert m.control(1) == pytest.approx(6.0)
    assert m.control(2) == pytest.approx(8.0)
    assert m.transition_mean(2, np.array([1.0])) == pytest.approx(9.0)


def test_simulate_reproducible():
    m = linear_benchmark_model()
    t1 = simulate(m, 20, 7)
    t2 = simulate(m, 20, 7)
    assert np.array_equal(t1.states, t2.states)
    assert np.array_equal(t1.observations, t2.observations)
    assert not np.array_equal(t1.states, simulate(m, 20, 8).states)


def test_simulate_zero_noise_is_deterministic_map():
    m = LinearModel(F=[[0.5]], H=[[1.0]], Q=[[0.0]], R=[[0.0]], mu=[2.0], P0=[[0.0]])
    t = simulate(m, 5, 0)
    assert np.allclose(t.states[:, 0], 2.0 * 0.5 ** np.arange(6))
    assert np.allclose(t.observations[:, 0], t.states[1:, 0])


def test_trajectory_csv_roundtrip(tmp_path):
    m = linear_benchmark_model()
    t = simulate(m, 15, 3)
    path = tmp_path / "traj.csv"
    trajectory_to_csv(t, path)
    back = trajectory_from_csv(path)
    assert np.array_equal(back.states, t.states)
    assert np.array_equal(back.observations, t.observations)


def test_prior_moments_scalar():
    m = scalar_model(q=0.2, f=0.5, p0=1.0)
    mean, cov = linear_prior_moments(m, 2)
    assert mean == pytest.approx(0.0)
    # var(x2) = f^2 (f^2 p0 + q) + q
    assert cov[0, 0] == pytest.approx(0.25 * (0.25 + 0.2) + 0.2)


def test_prior_moments_match_simulation():
    m = linear_benchmark_model()
    rng = np.random.default_rng(0)
    xs = np.array([simulate(m, 3, int(s)).states[3]
                   for s in rng.integers(0, 2 ** 31, 4000)])
    mean, cov = linear_prior_moments(m, 3)
    assert np.allclose(xs.mean(axis=0), mean, atol=0.1)
    assert np.allclose(np.cov(xs.T), cov, atol=0.25)


def test_linear_model_dict_roundtrip():
    m = linear_benchmark_model()
    back = linear_model_from_dict(linear_model_to_dict(m))
    assert np.array_equal(back.F, m.F)
    assert np.array_equal(back.P0, m.P0)


def test_nonlinear_transition_mean_batched():
    nm = tanh_benchmark_model()
    xs = np.linspace(-2, 2, 9).reshape(-1, 1)
    out = nm.transition_mean(5, xs)
    fk = 1 + 0.5 * np.sin(2 * np.pi * 5 / 20)
    assert np.allclose(out, fk * np.tanh(np.pi * xs))
    assert isinstance(nm, NonlinearModel)
