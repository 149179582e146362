"""Covariance of state-estimation error.

Repeated-sampling estimate of the expected observed information (and its
inverse, the error covariance), the monotone fixed-point recursion for the
inverse of the observed information, and an efficiency/coverage report
against simulated truth.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._linalg import min_eigenvalue, spd_inverse, symmetrize
from .estimator import MlConfig, ml_estimate
from .models import StateSpaceModel
from .particle import pf_init, pf_posterior_mean, pf_step
from .score import particle_score


class EstimationError(RuntimeError):
    """Too many replicates failed to converge."""


@dataclass(frozen=True)
class CovEstimate:
    x_hat_bar: np.ndarray
    info_hat: np.ndarray     # averaged observed information
    cov_hat: np.ndarray      # its inverse
    n_replicates: int
    n_failed: int
    per_replicate: list | None = None


@dataclass(frozen=True)
class OmegaSequence:
    iterates: list[np.ndarray]   # starts at the zero matrix
    A: np.ndarray
    B: np.ndarray
    converged_at: int | None
    contraction: float           # measured step-ratio, compare to rho(A)

    @property
    def limit(self) -> np.ndarray:
        return self.iterates[-1]


def _one_replicate(model, observations, k, n_particles, seed, cfg, include_score_term,
                   eval_at_init):
    rng = np.random.default_rng(seed)
    cloud = pf_init(model, n_particles, rng)
    for step in range(1, k):
        cloud = pf_step(model, cloud, observations[step - 1], rng)
    y_k = observations[k - 1]
    ahead = pf_step(model, cloud, y_k, rng)
    init = pf_posterior_mean(ahead)
    result = ml_estimate(model, cloud, y_k, cfg, init=init)
    if not result.converged:
        return None
    ev = particle_score(model, cloud, init, y_k) if eval_at_init else result.final_eval
    info = ev.complete_info - ev.outer_info
    if include_score_term:
        info = info + np.outer(ev.score, ev.score)
    return result.x_hat, symmetrize(info)


def repeated_sampling_cov(model: StateSpaceModel, observations: np.ndarray, k: int,
                          n_replicates: int, n_particles: int, seed: int,
                          cfg: MlConfig = MlConfig(), include_score_term: bool = False,
                          eval_at_init: bool = True, keep_replicates: bool = False,
                          threads: int = 1) -> CovEstimate:
    """Average the per-replicate observed information over independent clouds.

    Each replicate filters the same observation path with its own RNG
    substream, converges the ML iteration at step k, and evaluates the
    observed information J_z - M_z there; the score outer-product term is
    dropped by default. By default the matrices are evaluated at the
    filter-mean initializer x^0 rather than at the converged estimate: the
    curvature at the cloud-fitted mode is biased upward (the mode adapts to
    the same particles that enter M_z) and understates the error variance,
    noticeably so at later time steps. Pass ``eval_at_init=False`` for the
    at-convergence variant.
    """
    if n_replicates < 2:
        raise ValueError("need at least 2 replicates")
    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    if not 1 <= k <= observations.shape[0]:
        raise ValueError("k outside the observation horizon")
    seeds = np.random.SeedSequence(seed).spawn(n_replicates)

    def job(ss):
        return _one_replicate(model, observations, k, n_particles, ss, cfg,
                              include_score_term, eval_at_init)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(job, seeds))
    else:
        outcomes = [job(ss) for ss in seeds]

    kept = [o for o in outcomes if o is not None]
    n_failed = n_replicates - len(kept)
    if n_failed > 0.2 * n_replicates:
        raise EstimationError(
            f"{n_failed}/{n_replicates} replicates failed to converge at step {k}")
    x_hats = np.array([o[0] for o in kept])
    infos = np.array([o[1] for o in kept])
    info_hat = symmetrize(infos.mean(axis=0))
    if min_eigenvalue(info_hat) < 1e-10:
        import logging

        logging.getLogger(__name__).warning(
            "averaged information at step %d is near-singular; clipping eigenvalues", k)
        w, v = np.linalg.eigh(info_hat)
        info_hat = symmetrize(v @ np.diag(np.clip(w, 1e-10, None)) @ v.T)
    return CovEstimate(x_hat_bar=x_hats.mean(axis=0), info_hat=info_hat,
                       cov_hat=spd_inverse(info_hat), n_replicates=len(kept),
                       n_failed=n_failed,
                       per_replicate=kept if keep_replicates else None)


def omega_recursion(complete_info: np.ndarray, observed_info: np.ndarray,
                    max_iter: int = 50, tol: float = 1e-10) -> OmegaSequence:
    """Fixed-point iteration Omega <- A Omega + B converging to observed_info^{-1}.

    Requires complete_info > observed_info > 0 in the Loewner order; each step
    is checked to be a monotone increase.
    """
    jz = np.asarray(complete_info, dtype=float)
    jxi = np.asarray(observed_info, dtype=float)
    lo = min_eigenvalue(jxi)
    if lo <= 0:
        raise ValueError(f"observed information must be positive definite "
                         f"(min eigenvalue {lo:g})")
    gap = min_eigenvalue(jz - jxi)
    if gap < -1e-10:
        raise ValueError(f"complete information must dominate the observed one "
                         f"(min eigenvalue of the difference {gap:g})")
    b = spd_inverse(jz)
    a = np.eye(jz.shape[0]) - b @ jxi
    iterates = [np.zeros_like(jz)]
    converged_at = None
    prev_step = None
    contraction = float("nan")
    for it in range(1, max_iter + 1):
        nxt = a @ iterates[-1] + b
        step = nxt - iterates[-1]
        if min_eigenvalue(step) < -1e-10:
            raise RuntimeError(f"monotonicity violated at iteration {it}")
        iterates.append(nxt)
        norm = float(np.max(np.abs(step)))
        if prev_step is not None and prev_step > 0:
            contraction = norm / prev_step
        prev_step = norm
        if norm < tol:
            converged_at = it
            break
    return OmegaSequence(iterates=iterates, A=a, B=b, converged_at=converged_at,
                         contraction=contraction)


@dataclass(frozen=True)
class EfficiencyReport:
    bias: np.ndarray
    bias_stderr: np.ndarray
    sample_cov: np.ndarray
    reference_cov: np.ndarray
    cov_rel_gap: float          # Frobenius-relative gap to the reference
    efficiency_eigs: np.ndarray  # eigenvalues of reference^{-1} sample_cov
    coverage: float | None


def crlb_efficiency_report(truths: np.ndarray, estimates: np.ndarray,
                           reference_cov: np.ndarray,
                           sigmas: np.ndarray | None = None,
                           level: float = 1.96) -> EfficiencyReport:
    """Bias, error covariance vs. a reference bound, and interval coverage.

    ``truths`` and ``estimates`` are (n, p); ``sigmas`` (n, p) are per-case
    standard errors for the coverage of estimate +/- level * sigma.
    """
    truths = np.atleast_2d(truths)
    estimates = np.atleast_2d(estimates)
    if truths.shape[0] < 2:
        raise ValueError("need at least 2 cases")
    err = estimates - truths
    n = err.shape[0]
    bias = err.mean(axis=0)
    stderr = err.std(axis=0, ddof=1) / np.sqrt(n)
    sample_cov = symmetrize(err.T @ err / n)
    ref = np.asarray(reference_cov, dtype=float)
    gap = float(np.linalg.norm(sample_cov - ref) / np.linalg.norm(ref))
    eigs = np.linalg.eigvals(np.linalg.solve(ref, sample_cov)).real
    coverage = None
    if sigmas is not None:
        inside = np.abs(err) <= level * np.atleast_2d(sigmas)
        coverage = float(np.mean(np.all(inside, axis=1)))
    return EfficiencyReport(bias=bias, bias_stderr=stderr, sample_cov=sample_cov,
                            reference_cov=ref, cov_rel_gap=gap,
                            efficiency_eigs=np.sort(eigs), coverage=coverage)
