"""Exact linear-Gaussian filtering.

Predict/update recursions, Riccati covariance iteration, Kalman gain, and the
one-lag smoothing cross-covariance between x_{k-1} posterior errors and x_k
prediction errors that the closed-form linear score needs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._linalg import symmetrize
from .models import LinearModel


@dataclass(frozen=True)
class KalmanState:
    k: int
    x_pred: np.ndarray
    P_pred: np.ndarray
    x_post: np.ndarray
    P_post: np.ndarray
    gain: np.ndarray
    innovation: np.ndarray
    sigma_cross: np.ndarray | None = None  # one-lag cross-covariance at this step


def kalman_predict(model: LinearModel, k: int, x_post: np.ndarray,
                   P_post: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Time update: propagate the posterior of step k-1 to the prior of step k."""
    f = model.F_at(k)
    x_pred = f @ x_post + model.control(k)
    P_pred = symmetrize(f @ P_post @ f.T + model.Q_at(k))
    return x_pred, P_pred


def kalman_update(model: LinearModel, k: int, x_pred: np.ndarray, P_pred: np.ndarray,
                  y: np.ndarray, joseph: bool = False) -> KalmanState:
    """Measurement update; innovation covariance is inverted via Cholesky solves."""
    h = model.H_at(k)
    r = model.R_at(k)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    s = symmetrize(h @ P_pred @ h.T + r)
    factor = cho_factor(s, lower=True)
    gain = cho_solve(factor, h @ P_pred).T
    innovation = y - h @ x_pred
    x_post = x_pred + gain @ innovation
    if joseph:
        ikh = np.eye(model.p) - gain @ h
        P_post = ikh @ P_pred @ ikh.T + gain @ r @ gain.T
    else:
        P_post = (np.eye(model.p) - gain @ h) @ P_pred
    return KalmanState(k=k, x_pred=x_pred, P_pred=P_pred, x_post=x_post,
                       P_post=symmetrize(P_post), gain=gain, innovation=innovation)


def kalman_filter(model: LinearModel, observations: np.ndarray, y0: np.ndarray | None = None,
                  joseph: bool = False) -> list[KalmanState]:
    """Run the filter over y_1..y_K, returning one state per step including k=0.

    The recursion starts from the prior x_pred = mu, P_pred = P0. By default no
    measurement is applied at k=0 (observations start at k=1); pass ``y0`` to
    apply an update at k=0 as well.
    """
    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    if y0 is not None:
        state0 = kalman_update(model, 1, model.mu, model.P0, y0, joseph=joseph)
        # gain/H indices at k=0 reuse the first-step matrices of a
        # time-invariant model; time-varying H at k=0 is not supported.
        state0 = replace(state0, k=0)
    else:
        state0 = KalmanState(k=0, x_pred=model.mu, P_pred=model.P0, x_post=model.mu,
                             P_post=model.P0, gain=np.zeros((model.p, model.q)),
                             innovation=np.zeros(model.q))
    states = [state0]
    for k in range(1, observations.shape[0] + 1):
        x_pred, P_pred = kalman_predict(model, k, states[-1].x_post, states[-1].P_post)
        states.append(kalman_update(model, k, x_pred, P_pred, observations[k - 1], joseph=joseph))
    return states


def smoothing_cross_cov(model: LinearModel, states: list[KalmanState]) -> list[KalmanState]:
    """Fill the one-lag cross-covariance Sigma_{k|k-1} = P_{k-1|k-1} F_k^T.

    Equivalent to the gain-form recursion P_{k-1|k-2}(F_k - F_k K_{k-1} H_{k-1})^T
    and satisfies F_k Sigma_{k|k-1} = P_{k|k-1} - Q_k.
    """
    out = [states[0]]
    for prev, cur in zip(states, states[1:]):
        sigma = prev.P_post @ model.F_at(cur.k).T
        out.append(replace(cur, sigma_cross=sigma))
    return out


def riccati_steady_state(model: LinearModel, tol: float = 1e-12,
                         max_iter: int = 100_000) -> np.ndarray:
    """Fixed point of the predicted-covariance Riccati map for time-invariant models."""
    if model.F.ndim == 3 or model.H.ndim == 3 or model.Q.ndim == 3 or model.R.ndim == 3:
        raise ValueError("steady state requires a time-invariant model")
    f, h, q, r = model.F_at(1), model.H_at(1), model.Q_at(1), model.R_at(1)
    P = model.P0.copy()
    for _ in range(max_iter):
        s = symmetrize(h @ P @ h.T + r)
        gain = np.linalg.solve(s, h @ P).T
        P_next = symmetrize(f @ (P - gain @ h @ P) @ f.T + q)
        if np.max(np.abs(P_next - P)) < tol:
            return P_next
        P = P_next
    raise RuntimeError(f"Riccati iteration did not converge within {max_iter} iterations")


def filter_to_csv(states: list[KalmanState], path) -> None:
    """Per-step CSV: k, predicted/posterior means, posterior variances, gain entries."""
    p = states[0].x_pred.shape[0]
    q = states[0].gain.shape[1]
    header = (["k"]
              + [f"x_pred_{i + 1}" for i in range(p)]
              + [f"x_post_{i + 1}" for i in range(p)]
              + [f"P_post_{i + 1}{i + 1}" for i in range(p)]
              + [f"gain_{i + 1}{j + 1}" for i in range(p) for j in range(q)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in states:
            w.writerow([s.k] + [repr(float(v)) for v in s.x_pred] + [repr(float(v)) for v in s.x_post]
                       + [repr(float(v)) for v in np.diag(s.P_post)]
                       + [repr(float(v)) for v in s.gain.ravel()])
