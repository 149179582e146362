import numpy as np
import pytest
import scipy.linalg

from mlfilter import (LinearModel, MlConfig, crlb_efficiency_report, kalman_filter,
                      omega_recursion, repeated_sampling_cov, riccati_steady_state,
                      simulate)
from mlfilter._linalg import min_eigenvalue, spd_inverse, symmetrize
from mlfilter.errorcov import EstimationError
from mlfilter.experiments import linear_benchmark_model


def scalar_model():
    return LinearModel(F=[[0.9]], H=[[1.0]], Q=[[0.2]], R=[[0.5]], mu=[0.0], P0=[[1.0]])


def random_ordered_pair(rng, p, floor=0.4):
    """SPD pair (J_z, J_xi) with floor*J_z <= J_xi < J_z for fast contraction."""
    a = rng.standard_normal((p, p))
    jz = symmetrize(a @ a.T + np.eye(p))
    b = rng.standard_normal((p, p))
    loss = symmetrize(b @ b.T)
    lam = scipy.linalg.eigh(loss, jz, eigvals_only=True).max()
    loss *= (1 - floor) / max(lam, 1e-12)
    return jz, symmetrize(jz - loss)


def test_omega_scalar_geometric_series():
    seq = omega_recursion(np.array([[2.0]]), np.array([[1.0]]), max_iter=12, tol=0.0)
    want = 1 - 0.5 ** np.arange(13)
    got = np.array([om[0, 0] for om in seq.iterates])
    assert np.allclose(got, want)
    assert seq.contraction == pytest.approx(0.5)


def test_omega_no_loss_boundary():
    jz = np.diag([2.0, 3.0])
    seq = omega_recursion(jz, jz)
    assert seq.converged_at == 1 or np.allclose(seq.iterates[1], spd_inverse(jz))
    assert np.allclose(seq.limit, spd_inverse(jz))


def test_omega_precondition_errors():
    with pytest.raises(ValueError, match="positive definite"):
        omega_recursion(np.eye(2), np.diag([1.0, -0.5]))
    with pytest.raises(ValueError, match="dominate"):
        omega_recursion(np.eye(2), 2 * np.eye(2))


def test_omega_monotone_and_inverts():
    rng = np.random.default_rng(0)
    for _ in range(25):
        jz, jxi = random_ordered_pair(rng, int(rng.integers(1, 5)))
        seq = omega_recursion(jz, jxi, max_iter=50)
        for a, b in zip(seq.iterates, seq.iterates[1:]):
            assert min_eigenvalue(b - a) >= -1e-10
        assert np.abs(seq.limit @ jxi - np.eye(jxi.shape[0])).max() < 1e-8


def test_omega_contraction_matches_spectral_radius():
    rng = np.random.default_rng(1)
    jz, jxi = random_ordered_pair(rng, 3)
    seq = omega_recursion(jz, jxi, max_iter=40, tol=0.0)
    rho = np.abs(np.linalg.eigvals(seq.A)).max()
    assert seq.contraction == pytest.approx(rho, rel=0.1)


def test_repeated_sampling_scalar_matches_riccati():
    m = scalar_model()
    t = simulate(m, 12, 0)
    states = kalman_filter(m, t.observations)
    est = repeated_sampling_cov(m, t.observations, 8, 60, 400, 42)
    # target: P_{k|k} = 1/(H^2/R + 1/P_pred)
    want = 1 / (1 / 0.5 + 1 / states[8].P_pred[0, 0])
    reps = repeated_sampling_cov(m, t.observations, 8, 60, 400, 42,
                                 keep_replicates=True).per_replicate
    infos = np.array([info[0, 0] for _, info in reps])
    se = infos.std(ddof=1) / np.sqrt(len(infos))
    assert abs(est.info_hat[0, 0] - 1 / want) < 4 * se + 1e-9
    assert est.cov_hat[0, 0] == pytest.approx(want, abs=0.1)
    assert np.allclose(est.cov_hat @ est.info_hat, np.eye(1), atol=1e-8)


def test_repeated_sampling_validation():
    m = scalar_model()
    t = simulate(m, 5, 1)
    with pytest.raises(ValueError):
        repeated_sampling_cov(m, t.observations, 3, 1, 100, 0)
    with pytest.raises(ValueError):
        repeated_sampling_cov(m, t.observations, 9, 4, 100, 0)


def test_repeated_sampling_excludes_nonconverged():
    m = scalar_model()
    t = simulate(m, 5, 2)
    cfg = MlConfig(max_iter=1, epsilon=1e-30)  # nothing can converge
    with pytest.raises(EstimationError):
        repeated_sampling_cov(m, t.observations, 3, 5, 100, 0, cfg)


def test_repeated_sampling_threads_match_sequential():
    m = scalar_model()
    t = simulate(m, 6, 3)
    seq = repeated_sampling_cov(m, t.observations, 4, 8, 150, 7, threads=1)
    par = repeated_sampling_cov(m, t.observations, 4, 8, 150, 7, threads=3)
    assert np.allclose(seq.info_hat, par.info_hat, atol=1e-12)
    assert np.allclose(seq.x_hat_bar, par.x_hat_bar)


def test_efficiency_report_unbiased_gaussian():
    rng = np.random.default_rng(4)
    cov = np.array([[1.0, 0.3], [0.3, 0.5]])
    err = rng.multivariate_normal([0.0, 0.0], cov, size=4000)
    truths = rng.standard_normal((4000, 2))
    rep = crlb_efficiency_report(truths, truths + err, cov,
                                 sigmas=np.sqrt(np.diag(cov)) * np.ones((4000, 2)))
    assert np.all(np.abs(rep.bias) < 4 * rep.bias_stderr)
    assert rep.cov_rel_gap < 0.1
    assert np.all((rep.efficiency_eigs > 0.8) & (rep.efficiency_eigs < 1.2))
    # per-component 95% bands; joint coverage of two components is 0.95^2
    assert rep.coverage == pytest.approx(0.95 ** 2, abs=0.03)


def test_efficiency_report_needs_replicates():
    with pytest.raises(ValueError):
        crlb_efficiency_report(np.zeros((1, 2)), np.zeros((1, 2)), np.eye(2))


def test_steady_state_pair_feeds_omega():
    m = linear_benchmark_model()
    p_pred = riccati_steady_state(m)
    h, r = m.H_at(1), m.R_at(1)
    jz = h.T @ np.linalg.solve(r, h) + spd_inverse(m.Q_at(1))
    jxi = h.T @ np.linalg.solve(r, h) + spd_inverse(p_pred)
    seq = omega_recursion(jz, jxi, max_iter=200, tol=1e-14)
    assert np.allclose(seq.limit, spd_inverse(jxi), atol=1e-10)
