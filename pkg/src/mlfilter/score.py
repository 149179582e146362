"""Incomplete-data score function and observed information matrices.

For a query state x_k the score is the gradient of log f(x_k, y_{1..k}) with
respect to x_k. Three routes are provided: a particle-averaged general form,
the exact closed form for linear-Gaussian models, and the closed nonlinear
form that rewrites the particle average through parent-weight derivatives.
A Monte Carlo identity suite cross-checks the expected-information relations
used by the error-covariance estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._linalg import mvn_logpdf, psd_factor, spd_inverse, symmetrize
from .kalman import KalmanState, kalman_filter
from .models import LinearModel, NonlinearModel, StateSpaceModel, linear_prior_moments
from .particle import ParticleCloud, log_normalizing_constant, weight_function


@dataclass(frozen=True)
class ScoreEval:
    """Score and information matrices of the incomplete data at a query state.

    ``complete_info`` is the conditional expectation of the complete-data
    negative Hessian, ``outer_info`` the conditional outer-product matrix and
    ``observed_info`` the observed information assembled from the other two
    (Louis-type decomposition): observed = complete - outer + score score^T.
    """

    x: np.ndarray
    score: np.ndarray
    complete_info: np.ndarray
    outer_info: np.ndarray
    observed_info: np.ndarray
    log_pred: float


def _rinv_h(model: StateSpaceModel, k: int) -> np.ndarray:
    rc = cho_factor(model.R_at(k), lower=True)
    return cho_solve(rc, model.H_at(k))


def complete_info(model: StateSpaceModel, k: int) -> np.ndarray:
    """H^T R^{-1} H + Q^{-1}: analytic and constant across particles."""
    h = model.H_at(k)
    qinv = spd_inverse(model.Q_at(k))
    return symmetrize(h.T @ _rinv_h(model, k) + qinv)


def complete_score(model: StateSpaceModel, k: int, x: np.ndarray, x_prev: np.ndarray,
                   y: np.ndarray) -> np.ndarray:
    """Gradient of the complete-data log-density in x_k; batched over x_prev rows."""
    h = model.H_at(k)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    meas = -_rinv_h(model, k).T @ (h @ np.asarray(x, dtype=float) - y)
    dev = np.asarray(x, dtype=float) - model.transition_mean(k, x_prev)
    qc = cho_factor(model.Q_at(k), lower=True)
    trans = -cho_solve(qc, np.atleast_2d(dev).T).T
    if np.ndim(x_prev) == 1:
        return meas + trans[0]
    return meas + trans


def particle_score(model: StateSpaceModel, cloud: ParticleCloud, x: np.ndarray,
                   y: np.ndarray) -> ScoreEval:
    """Parent-weighted score, outer-product matrix and observed information."""
    k = cloud.k + 1
    x = np.asarray(x, dtype=float)
    w = weight_function(model, cloud, x)
    scores = complete_score(model, k, x, cloud.particles, y)   # (N, p)
    s = w @ scores
    outer = symmetrize((scores * w[:, None]).T @ scores)
    jz = complete_info(model, k)
    jxi = symmetrize(jz - outer + np.outer(s, s))
    return ScoreEval(x=x, score=s, complete_info=jz, outer_info=outer,
                     observed_info=jxi,
                     log_pred=log_normalizing_constant(model, cloud, x))


def linear_score(model: LinearModel, state: KalmanState, x: np.ndarray,
                 y: np.ndarray) -> ScoreEval:
    """Closed-form score for the linear family at Kalman step ``state.k``.

    The observed information H^T R^{-1} H + P_pred^{-1} is constant in x and
    its inverse equals the posterior covariance P_{k|k}.
    """
    k = state.k
    x = np.asarray(x, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    h = model.H_at(k)
    rinv_h = _rinv_h(model, k)
    p_pred_inv = spd_inverse(state.P_pred)
    jxi = symmetrize(h.T @ rinv_h + p_pred_inv)
    s = -jxi @ (x - state.x_pred) + rinv_h.T @ (y - h @ state.x_pred)
    jz = complete_info(model, k)
    outer = symmetrize(jz - jxi + np.outer(s, s))
    log_pred = float(mvn_logpdf(x, state.x_pred, psd_factor(state.P_pred, "P_pred")))
    return ScoreEval(x=x, score=s, complete_info=jz, outer_info=outer,
                     observed_info=jxi, log_pred=log_pred)


def nonlinear_observed_info(model: StateSpaceModel, cloud: ParticleCloud, x: np.ndarray,
                            y: np.ndarray) -> np.ndarray:
    """Closed nonlinear form of the observed information via weight derivatives.

    Algebraically identical to particle_score(...).observed_info:
    (H^T R^{-1} H + Q^{-1}) minus the Q^{-1}-sandwiched parent-weighted
    variance of the transition residuals d_n = x_k - F_k(x_{k-1}^n, u_k).
    """
    k = cloud.k + 1
    x = np.asarray(x, dtype=float)
    w = weight_function(model, cloud, x)
    dev = x - model.transition_mean(k, cloud.particles)       # (N, p)
    qc = cho_factor(model.Q_at(k), lower=True)
    qdev = cho_solve(qc, dev.T).T                              # Q^{-1} d_n rows
    second = (qdev * w[:, None]).T @ qdev
    mean = w @ qdev
    return symmetrize(complete_info(model, k) - second + np.outer(mean, mean))


def incomplete_loglik(model: StateSpaceModel, cloud: ParticleCloud, x: np.ndarray,
                      y: np.ndarray) -> float:
    """Particle estimate of log f(x_k, y_k | y_{1..k-1}) up to a constant in x."""
    k = cloud.k + 1
    x = np.asarray(x, dtype=float)
    meas = float(mvn_logpdf(np.atleast_1d(y), model.H_at(k) @ x, model.R_chol(k)))
    return log_normalizing_constant(model, cloud, x) + meas


# ---------------------------------------------------------------------------
# Monte Carlo identity suite


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    estimate: np.ndarray
    target: np.ndarray
    stderr: np.ndarray
    max_abs_z: float = field(init=False)

    def __post_init__(self):
        # floor the stderr so exactly-reproduced components (zero sampling
        # variance up to roundoff) do not blow up the z-score
        floor = 1e-9 * (1.0 + np.abs(self.target))
        z = np.abs(self.estimate - self.target) / np.maximum(self.stderr, floor)
        object.__setattr__(self, "max_abs_z", float(np.max(z)))


def _simulate_batch(model: LinearModel, K: int, n_rep: int, rng: np.random.Generator):
    """Vectorized trajectories: states (n_rep, K+1, p), observations (n_rep, K, q)."""
    p, q = model.p, model.q
    states = np.empty((n_rep, K + 1, p))
    obs = np.empty((n_rep, K, q))
    states[:, 0] = model.mu + rng.standard_normal((n_rep, p)) @ psd_factor(model.P0, "P0").T
    for k in range(1, K + 1):
        noise = rng.standard_normal((n_rep, p)) @ model.Q_chol(k).T
        states[:, k] = model.transition_mean(k, states[:, k - 1]) + noise
        wn = rng.standard_normal((n_rep, q)) @ model.R_chol(k).T
        obs[:, k - 1] = states[:, k] @ model.H_at(k).T + wn
    return states, obs


def _batched_pred_means(model: LinearModel, obs: np.ndarray) -> np.ndarray:
    """x_pred at the final step for each replicate; gains are data-independent."""
    n_rep, K, _ = obs.shape
    cov_states = kalman_filter(model, obs[0])
    x_post = np.broadcast_to(model.mu, (n_rep, model.p)).copy()
    x_pred = x_post
    for k in range(1, K + 1):
        f = model.F_at(k)
        x_pred = x_post @ f.T + model.control(k)
        h = model.H_at(k)
        gain = cov_states[k].gain
        x_post = x_pred + (obs[:, k - 1] - x_pred @ h.T) @ gain.T
    return x_pred, cov_states[K].P_pred


def _mean_se(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = samples.shape[0]
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / np.sqrt(n)


def score_identity_suite(model: LinearModel, k: int, n_rep: int,
                         seed: int) -> list[IdentityCheck]:
    """Monte Carlo verification of three expected-information identities.

    (a) conditioning the score on x_1 recovers the prior score of x_1
        (checked at k=1, where the measurement noise is the only randomness);
    (b) E[S S^T] equals the expected observed information
        H^T R^{-1} H + P_pred^{-1};
    (c) E[(complete score)(complete score)^T] equals H^T R^{-1} H + Q^{-1}.
    """
    rng = np.random.default_rng(seed)
    checks = []

    # (a): at k=1 the predicted mean/covariance are the prior moments of x_1.
    mean1, cov1 = linear_prior_moments(model, 1)
    x1 = mean1 + psd_factor(cov1, "cov1") @ rng.standard_normal(model.p)
    h1 = model.H_at(1)
    w = rng.standard_normal((n_rep, model.q)) @ model.R_chol(1).T
    rinv_h = _rinv_h(model, 1)
    jxi1 = h1.T @ rinv_h + spd_inverse(cov1)
    # S(x_1, y_1) with y_1 = H x_1 + w, so y_1 - H mean1 = H (x_1 - mean1) + w
    innov1 = (x1 - mean1) @ h1.T + w
    scores_a = -(x1 - mean1) @ jxi1.T + innov1 @ rinv_h
    est, se = _mean_se(scores_a)
    checks.append(IdentityCheck("conditional-score-vs-prior-score", est,
                                -spd_inverse(cov1) @ (x1 - mean1), se))

    # (b): score outer product at the true state across replicates.
    states, obs = _simulate_batch(model, k, n_rep, rng)
    x_pred, P_pred = _batched_pred_means(model, obs)
    h = model.H_at(k)
    rinv_hk = _rinv_h(model, k)
    jxi = symmetrize(h.T @ rinv_hk + spd_inverse(P_pred))
    innov = obs[:, k - 1] - x_pred @ h.T
    scores_b = -(states[:, k] - x_pred) @ jxi.T + innov @ rinv_hk
    outer_b = scores_b[:, :, None] * scores_b[:, None, :]
    est, se = _mean_se(outer_b)
    checks.append(IdentityCheck("score-outer-product-vs-observed-info", est, jxi, se))

    # (c): complete-data score outer product at the true transition pair.
    dev = states[:, k] - model.transition_mean(k, states[:, k - 1])
    qc = cho_factor(model.Q_at(k), lower=True)
    meas = (obs[:, k - 1] - states[:, k] @ h.T) @ rinv_hk
    scores_c = meas - cho_solve(qc, dev.T).T
    outer_c = scores_c[:, :, None] * scores_c[:, None, :]
    est, se = _mean_se(outer_c)
    checks.append(IdentityCheck("complete-score-outer-vs-complete-info", est,
                                complete_info(model, k), se))
    return checks
