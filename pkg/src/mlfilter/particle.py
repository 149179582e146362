"""Bootstrap particle filter with multinomial resampling.

Also exposes the predictive normalizing constant and the parent weight
function w_{k-1}^n(x_k) that the score and estimator modules evaluate while
the k-1 cloud stays frozen. All densities are handled in log-space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._linalg import mvn_logpdf, psd_factor
from .models import StateSpaceModel

logger = logging.getLogger(__name__)


class DegeneracyError(RuntimeError):
    """Every particle likelihood underflowed to zero."""

    def __init__(self, message: str, max_loglik: float):
        super().__init__(f"{message} (max log-likelihood {max_loglik:.6g})")
        self.max_loglik = max_loglik


@dataclass(frozen=True)
class ParticleCloud:
    """Weighted particles approximating the filtering law at step k.

    ``parents`` keeps one generation of ancestry: row n is the k-1 particle
    that generated particle n. ``ess`` is the effective sample size of the
    likelihood weights before resampling.
    """

    k: int
    particles: np.ndarray        # (N, p)
    weights: np.ndarray          # (N,)
    parents: np.ndarray | None = None
    ess: float | None = None

    def __post_init__(self):
        if self.particles.shape[0] != self.weights.shape[0]:
            raise ValueError("particles and weights must have matching length")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")

    @property
    def N(self) -> int:
        return self.particles.shape[0]


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def pf_init(model: StateSpaceModel, N: int, seed) -> ParticleCloud:
    """Draw N particles from the initial law with uniform weights."""
    if N < 2:
        raise ValueError("N must be >= 2")
    rng = as_generator(seed)
    l0 = psd_factor(model.P0, "P0")
    particles = model.mu + rng.standard_normal((N, model.mu.shape[0])) @ l0.T
    return ParticleCloud(k=0, particles=particles, weights=np.full(N, 1.0 / N))


def _log_obs_likelihood(model: StateSpaceModel, k: int, x: np.ndarray,
                        y: np.ndarray) -> np.ndarray:
    return mvn_logpdf(np.atleast_1d(y), x @ model.H_at(k).T, model.R_chol(k))


def pf_step(model: StateSpaceModel, cloud: ParticleCloud, y: np.ndarray, seed,
            resampling: str = "multinomial") -> ParticleCloud:
    """Propagate, weight by the measurement likelihood, resample.

    Returns the cloud at step cloud.k + 1 with uniform weights.
    """
    rng = as_generator(seed)
    k = cloud.k + 1
    n, p = cloud.particles.shape
    noise = rng.standard_normal((n, p)) @ model.Q_chol(k).T
    proposed = model.transition_mean(k, cloud.particles) + noise
    loglik = _log_obs_likelihood(model, k, proposed, y)
    # weight the parent mixture when the incoming cloud is non-uniform
    logw = loglik + np.log(cloud.weights)
    total = logsumexp(logw)
    if not np.isfinite(total):
        raise DegeneracyError(f"all particle likelihoods vanished at step {k}",
                              float(np.max(loglik)))
    alpha = np.exp(logw - total)
    alpha /= alpha.sum()
    ess = 1.0 / float(np.sum(alpha ** 2))
    if ess < n / 10:
        logger.warning("step %d: effective sample size %.1f below N/10", k, ess)
    if resampling == "multinomial":
        idx = rng.choice(n, size=n, p=alpha)
    elif resampling == "systematic":
        positions = (rng.random() + np.arange(n)) / n
        idx = np.searchsorted(np.cumsum(alpha), positions)
    else:
        raise ValueError(f"unknown resampling scheme {resampling!r}")
    return ParticleCloud(k=k, particles=proposed[idx], weights=np.full(n, 1.0 / n),
                         parents=cloud.particles[idx], ess=ess)


def pf_posterior_mean(cloud: ParticleCloud) -> np.ndarray:
    return cloud.weights @ cloud.particles


def log_transition_densities(model: StateSpaceModel, cloud: ParticleCloud,
                             x: np.ndarray) -> np.ndarray:
    """log f(x_{k} | x_{k-1}^n) for each particle of the k-1 cloud."""
    k = cloud.k + 1
    means = model.transition_mean(k, cloud.particles)
    return mvn_logpdf(np.asarray(x, dtype=float), means, model.Q_chol(k))


def log_normalizing_constant(model: StateSpaceModel, cloud: ParticleCloud,
                             x: np.ndarray) -> float:
    """log of the particle predictive density f(x_k | y_{1..k-1}) at x."""
    logf = log_transition_densities(model, cloud, x)
    out = float(logsumexp(logf + np.log(cloud.weights)))
    if not np.isfinite(out):
        logger.warning("predictive density underflowed at step %d", cloud.k + 1)
    return out


def normalizing_constant(model: StateSpaceModel, cloud: ParticleCloud,
                         x: np.ndarray) -> float:
    return float(np.exp(log_normalizing_constant(model, cloud, x)))


def weight_function(model: StateSpaceModel, cloud: ParticleCloud,
                    x: np.ndarray) -> np.ndarray:
    """Posterior parent probabilities w_{k-1}^n(x_k); sums to one."""
    logw = log_transition_densities(model, cloud, x) + np.log(cloud.weights)
    total = logsumexp(logw)
    if not np.isfinite(total):
        raise DegeneracyError(f"all parent weights vanished at step {cloud.k + 1}",
                              float(np.max(logw)))
    w = np.exp(logw - total)
    return w / w.sum()


def pf_run(model: StateSpaceModel, observations: np.ndarray, N: int, seed,
           resampling: str = "multinomial") -> list[ParticleCloud]:
    """Filter the whole observation sequence; clouds[k] approximates step k."""
    rng = as_generator(seed)
    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    clouds = [pf_init(model, N, rng)]
    for k in range(1, observations.shape[0] + 1):
        clouds.append(pf_step(model, clouds[-1], observations[k - 1], rng,
                              resampling=resampling))
    return clouds


def cloud_to_csv(clouds: list[ParticleCloud], path) -> None:
    """Debug dump: one row per (k, n) with particle components and weight."""
    import csv

    p = clouds[0].particles.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "n"] + [f"x_{i + 1}" for i in range(p)] + ["weight"])
        for cloud in clouds:
            for n in range(cloud.N):
                w.writerow([cloud.k, n] + [repr(float(v)) for v in cloud.particles[n]]
                           + [repr(float(cloud.weights[n]))])
