"""Shared dense-matrix helpers: symmetric solves, PSD factors, Gaussian densities."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

LOG_2PI = float(np.log(2.0 * np.pi))


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """A matrix required to be (semi)definite is not."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def psd_factor(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Lower-triangular-ish factor L with L @ L.T = a.

    Uses Cholesky when `a` is positive definite; falls back to an
    eigendecomposition square root for singular PSD matrices (zero noise
    limits are allowed for simulation). Raises for indefinite input.
    """
    a = np.asarray(a, dtype=float)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(symmetrize(a))
    tol = 1e-10 * max(1.0, float(np.max(np.abs(w))))
    if np.min(w) < -tol:
        raise NotPositiveDefiniteError(
            f"{name} is not positive semidefinite (min eigenvalue {np.min(w):g})"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for symmetric positive definite `a` via Cholesky."""
    return cho_solve(cho_factor(symmetrize(a), lower=True), b)


def spd_inverse(a: np.ndarray) -> np.ndarray:
    return symmetrize(spd_solve(a, np.eye(a.shape[0])))


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Log-density of N(mean, L L^T) at x.

    `x` and `mean` broadcast against each other over leading axes; the last
    axis is the vector dimension. Returns an array of the broadcast shape.
    """
    x = np.asarray(x, dtype=float)
    d = chol.shape[0]
    dev = np.atleast_2d(x - mean)
    z = solve_triangular(chol, dev.T, lower=True).T
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    # extreme deviations overflow z*z to inf; the density is then -inf, which
    # the callers treat as a degenerate weight
    with np.errstate(over="ignore"):
        out = -0.5 * (d * LOG_2PI + logdet + np.sum(z * z, axis=-1))
    if x.ndim == 1 and np.ndim(mean) <= 1:
        return out[0]
    return out.reshape(np.broadcast(x, np.asarray(mean)).shape[:-1])


def min_eigenvalue(a: np.ndarray) -> float:
    return float(np.min(np.linalg.eigvalsh(symmetrize(a))))


def loewner_leq(a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> bool:
    """a <= b in the Loewner order, up to `tol` on the smallest eigenvalue."""
    return min_eigenvalue(b - a) >= -tol
