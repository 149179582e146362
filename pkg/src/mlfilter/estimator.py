"""Recursive maximum-likelihood state estimation.

Given the frozen particle cloud at step k-1 and the observation y_k, iterate
x^(l+1) = x^(l) + M^{-1} S(x^(l)) where M is the observed information
(Newton), the complete-data information (EM-gradient), or the score
outer-product matrix (BHHH). Closed per-iteration updates are available for
the linear and nonlinear Gaussian families and coincide with the generic
EM-gradient step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._linalg import spd_solve
from .models import LinearModel, NonlinearModel, StateSpaceModel
from .particle import ParticleCloud, pf_posterior_mean, weight_function
from .score import ScoreEval, complete_info, incomplete_loglik, particle_score

METHODS = ("newton", "em_gradient", "bhhh", "closed_linear", "closed_nonlinear")


@dataclass(frozen=True)
class MlConfig:
    method: str = "em_gradient"
    epsilon: float = 1e-12        # threshold on the squared step norm
    max_iter: int = 100
    damping: float = 1.0
    keep_trace: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.epsilon <= 0 or self.max_iter < 1 or not 0 < self.damping <= 1:
            raise ValueError("epsilon > 0, max_iter >= 1 and damping in (0, 1] required")


@dataclass(frozen=True)
class MlResult:
    x_hat: np.ndarray
    iterations: int
    converged: bool
    final_score_norm: float
    fallback_steps: int = 0
    trace: list[np.ndarray] | None = None
    final_eval: ScoreEval | None = None


def _measurement_gain(model: StateSpaceModel, k: int) -> np.ndarray:
    """Q H^T (H Q H^T + R)^{-1}: the constant gain of the closed updates."""
    h = model.H_at(k)
    q = model.Q_at(k)
    return spd_solve(h @ q @ h.T + model.R_at(k), h @ q).T


def em_gradient_update_linear(model: LinearModel, cloud: ParticleCloud,
                              x_current: np.ndarray, y: np.ndarray) -> np.ndarray:
    """One closed EM-gradient iteration for the linear family."""
    k = cloud.k + 1
    w = weight_function(model, cloud, x_current)
    m = model.F_at(k) @ (w @ cloud.particles) + model.control(k)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return m + _measurement_gain(model, k) @ (y - model.H_at(k) @ m)


def em_gradient_update_nonlinear(model: NonlinearModel, cloud: ParticleCloud,
                                 x_current: np.ndarray, y: np.ndarray) -> np.ndarray:
    """One closed EM-gradient iteration for nonlinear transitions."""
    k = cloud.k + 1
    w = weight_function(model, cloud, x_current)
    m = w @ model.transition_mean(k, cloud.particles)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return m + _measurement_gain(model, k) @ (y - model.H_at(k) @ m)


def _closed_update(model: StateSpaceModel, cloud: ParticleCloud, x: np.ndarray,
                   y: np.ndarray) -> np.ndarray:
    if isinstance(model, LinearModel):
        return em_gradient_update_linear(model, cloud, x, y)
    return em_gradient_update_nonlinear(model, cloud, x, y)


def em_surrogate(model: StateSpaceModel, cloud: ParticleCloud, x_query: np.ndarray,
                 x_center: np.ndarray, y: np.ndarray) -> float:
    """Quadratic minorant around x_center, normalized to zero at the center.

    Its argmax over x_query is the EM-gradient update from x_center.
    """
    ev = particle_score(model, cloud, x_center, y)
    d = np.asarray(x_query, dtype=float) - np.asarray(x_center, dtype=float)
    return float(ev.score @ d - 0.5 * d @ ev.complete_info @ d)


def ml_estimate(model: StateSpaceModel, cloud: ParticleCloud, y: np.ndarray,
                cfg: MlConfig = MlConfig(), init: np.ndarray | None = None) -> MlResult:
    """Iterate from ``init`` (default: the cloud's predictive mean) to the ML state.

    A non-positive-definite Newton/BHHH matrix triggers a one-step EM-gradient
    fallback, which is counted in the result.
    """
    k = cloud.k + 1
    if init is None:
        init = model.transition_mean(k, pf_posterior_mean(cloud))
    x = np.asarray(init, dtype=float).copy()
    trace = [x.copy()] if cfg.keep_trace else None
    fallbacks = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if cfg.method in ("closed_linear", "closed_nonlinear"):
            x_next = _closed_update(model, cloud, x, y)
        else:
            ev = particle_score(model, cloud, x, y)
            matrix = {"newton": ev.observed_info, "em_gradient": ev.complete_info,
                      "bhhh": ev.outer_info}[cfg.method]
            try:
                step = cho_solve(cho_factor(matrix, lower=True), ev.score)
            except np.linalg.LinAlgError:
                fallbacks += 1
                step = cho_solve(cho_factor(ev.complete_info, lower=True), ev.score)
            x_next = x + cfg.damping * step
        if trace is not None:
            trace.append(x_next.copy())
        done = float(np.sum((x_next - x) ** 2)) < cfg.epsilon
        x = x_next
        if done:
            converged = True
            break
    final = particle_score(model, cloud, x, y)
    return MlResult(x_hat=x, iterations=it, converged=converged,
                    final_score_norm=float(np.linalg.norm(final.score)),
                    fallback_steps=fallbacks, trace=trace, final_eval=final)


def loglik_trace(model: StateSpaceModel, cloud: ParticleCloud, iterates, y) -> np.ndarray:
    """Incomplete-data log-likelihood along an iterate sequence (ascent check)."""
    return np.array([incomplete_loglik(model, cloud, x, y) for x in iterates])
