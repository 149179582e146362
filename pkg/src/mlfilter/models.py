"""State-space model families, trajectory simulation and closed-form prior moments.

Two families are supported: a (possibly time-varying) linear-Gaussian system

    x_k = F_k x_{k-1} + G_k u_k + v_k,    v_k ~ N(0, Q_k)
    y_k = H_k x_k + w_k,                  w_k ~ N(0, R_k)

and a nonlinear-transition variant x_k = F_k(x_{k-1}, u_k) + v_k with the same
linear-Gaussian measurement. System matrices may be given either as a single
matrix (constant in k) or stacked along a leading time axis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._linalg import NotPositiveDefiniteError, psd_factor, symmetrize


class ModelError(ValueError):
    """Invalid model definition (shape mismatch or bad covariance)."""


def _as_matrix_seq(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim not in (2, 3):
        raise ModelError(f"{name} must be a matrix or a stack of matrices, got ndim={a.ndim}")
    return a


def _at(a: np.ndarray, k: int) -> np.ndarray:
    """Matrix for step k >= 1; constant matrices broadcast across k."""
    if a.ndim == 2:
        return a
    if not 1 <= k <= a.shape[0]:
        raise ModelError(f"step {k} outside the stored horizon of {a.shape[0]} matrices")
    return a[k - 1]


def _check_cov(a: np.ndarray, dim: int, name: str) -> None:
    mats = a[None] if a.ndim == 2 else a
    for i, m in enumerate(mats):
        if m.shape != (dim, dim):
            raise ModelError(f"{name} has shape {m.shape}, expected ({dim}, {dim})")
        if not np.allclose(m, m.T, atol=1e-10):
            raise ModelError(f"{name}[{i}] is not symmetric")
        try:
            psd_factor(m, name)
        except NotPositiveDefiniteError as exc:
            raise ModelError(str(exc)) from exc


@dataclass(frozen=True)
class LinearModel:
    """Time-varying linear-Gaussian system matrices and initial-state moments."""

    F: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    mu: np.ndarray
    P0: np.ndarray
    G: np.ndarray | None = None
    u: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("F", "H", "Q", "R"):
            object.__setattr__(self, name, _as_matrix_seq(getattr(self, name), name))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(-1))
        object.__setattr__(self, "P0", np.asarray(self.P0, dtype=float))
        if self.G is not None:
            object.__setattr__(self, "G", _as_matrix_seq(self.G, "G"))
        if self.u is not None:
            object.__setattr__(self, "u", np.atleast_2d(np.asarray(self.u, dtype=float)))
        p, q = self.p, self.q
        if self.F.shape[-2:] != (p, p):
            raise ModelError(f"F must be {p}x{p}")
        if self.H.shape[-2:] != (q, p):
            raise ModelError(f"H must be {q}x{p}")
        _check_cov(self.Q, p, "Q")
        _check_cov(self.R, q, "R")
        _check_cov(self.P0[None] if self.P0.ndim == 2 else self.P0, p, "P0")
        if self.G is not None and self.G.shape[-2] != p:
            raise ModelError("G rows must match the state dimension")
        if self.u is not None and self.G is None:
            raise ModelError("controls u given without a control matrix G")

    @property
    def p(self) -> int:
        return self.mu.shape[0]

    @property
    def q(self) -> int:
        return self.H.shape[-2]

    @property
    def m(self) -> int:
        return 0 if self.G is None else self.G.shape[-1]

    def F_at(self, k: int) -> np.ndarray:
        return _at(self.F, k)

    def H_at(self, k: int) -> np.ndarray:
        return _at(self.H, k)

    def Q_at(self, k: int) -> np.ndarray:
        return _at(self.Q, k)

    def R_at(self, k: int) -> np.ndarray:
        return _at(self.R, k)

    def control(self, k: int) -> np.ndarray:
        """Control term G_k u_k as a state-space vector; zero when absent."""
        if self.G is None:
            return np.zeros(self.p)
        u = np.zeros(self.m) if self.u is None else self.u[k - 1]
        return _at(self.G, k) @ u

    def transition_mean(self, k: int, x_prev: np.ndarray) -> np.ndarray:
        """Conditional mean of x_k given x_{k-1}; batched over leading axes."""
        return np.asarray(x_prev, dtype=float) @ self.F_at(k).T + self.control(k)

    def _factor(self, name: str, k: int) -> np.ndarray:
        a = getattr(self, name)
        key = (name,) if a.ndim == 2 else (name, k)
        if key not in self._cache:
            self._cache[key] = psd_factor(_at(a, k), name)
        return self._cache[key]

    def Q_chol(self, k: int) -> np.ndarray:
        return self._factor("Q", k)

    def R_chol(self, k: int) -> np.ndarray:
        return self._factor("R", k)


@dataclass(frozen=True)
class NonlinearModel:
    """Nonlinear transition map with Gaussian process noise and linear measurement."""

    p: int
    transition: Callable[[int, np.ndarray, np.ndarray | None], np.ndarray]
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    mu: np.ndarray
    P0: np.ndarray
    u: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("H", "Q", "R"):
            object.__setattr__(self, name, _as_matrix_seq(getattr(self, name), name))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(-1))
        object.__setattr__(self, "P0", np.asarray(self.P0, dtype=float))
        if self.u is not None:
            object.__setattr__(self, "u", np.atleast_2d(np.asarray(self.u, dtype=float)))
        _check_cov(self.Q, self.p, "Q")
        _check_cov(self.R, self.q, "R")
        _check_cov(self.P0[None], self.p, "P0")

    @property
    def q(self) -> int:
        return self.H.shape[-2]

    def H_at(self, k: int) -> np.ndarray:
        return _at(self.H, k)

    def Q_at(self, k: int) -> np.ndarray:
        return _at(self.Q, k)

    def R_at(self, k: int) -> np.ndarray:
        return _at(self.R, k)

    def control(self, k: int) -> np.ndarray | None:
        return None if self.u is None else self.u[k - 1]

    def transition_mean(self, k: int, x_prev: np.ndarray) -> np.ndarray:
        return np.asarray(self.transition(k, np.asarray(x_prev, dtype=float), self.control(k)))

    def _factor(self, name: str, k: int) -> np.ndarray:
        a = getattr(self, name)
        key = (name,) if a.ndim == 2 else (name, k)
        if key not in self._cache:
            self._cache[key] = psd_factor(_at(a, k), name)
        return self._cache[key]

    def Q_chol(self, k: int) -> np.ndarray:
        return self._factor("Q", k)

    def R_chol(self, k: int) -> np.ndarray:
        return self._factor("R", k)


StateSpaceModel = LinearModel | NonlinearModel


@dataclass(frozen=True)
class Trajectory:
    """Simulated states x_0..x_K and observations y_1..y_K."""

    states: np.ndarray       # (K+1, p)
    observations: np.ndarray  # (K, q)
    seed: int

    def __post_init__(self):
        if self.states.shape[0] != self.observations.shape[0] + 1:
            raise ValueError("expected K+1 states for K observations")

    @property
    def K(self) -> int:
        return self.observations.shape[0]


def simulate(model: StateSpaceModel, K: int, seed: int) -> Trajectory:
    """Draw one trajectory of length K; bit-for-bit reproducible from the seed."""
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    p, q = model.mu.shape[0], model.q
    states = np.empty((K + 1, p))
    obs = np.empty((K, q))
    l0 = psd_factor(model.P0, "P0")
    states[0] = model.mu + l0 @ rng.standard_normal(p)
    for k in range(1, K + 1):
        states[k] = model.transition_mean(k, states[k - 1]) + model.Q_chol(k) @ rng.standard_normal(p)
        obs[k - 1] = model.H_at(k) @ states[k] + model.R_chol(k) @ rng.standard_normal(q)
    return Trajectory(states=states, observations=obs, seed=seed)


def linear_prior_moments(model: LinearModel, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Unconditional mean and covariance of x_k by iterating the transition maps."""
    if k < 0:
        raise ValueError("k must be >= 0")
    mean = model.mu.copy()
    cov = model.P0.copy()
    for n in range(1, k + 1):
        f = model.F_at(n)
        mean = f @ mean + model.control(n)
        cov = symmetrize(f @ cov @ f.T + model.Q_at(n))
    return mean, cov


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write columns k, x_1..x_p, y_1..y_q; the k=0 row has empty observations."""
    p = traj.states.shape[1]
    q = traj.observations.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"x_{i + 1}" for i in range(p)] + [f"y_{j + 1}" for j in range(q)])
        w.writerow([0] + [repr(float(v)) for v in traj.states[0]] + [""] * q)
        for k in range(1, traj.K + 1):
            w.writerow([k] + [repr(float(v)) for v in traj.states[k]]
                       + [repr(float(v)) for v in traj.observations[k - 1]])


def trajectory_from_csv(path, seed: int = -1) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    p = sum(1 for h in header if h.startswith("x_"))
    q = sum(1 for h in header if h.startswith("y_"))
    body = rows[1:]
    states = np.array([[float(v) for v in r[1:1 + p]] for r in body])
    obs = np.array([[float(v) for v in r[1 + p:1 + p + q]] for r in body[1:]])
    return Trajectory(states=states, observations=obs, seed=seed)


def linear_model_to_dict(model: LinearModel) -> dict:
    d = {
        "kind": "linear",
        "dims": {"p": model.p, "q": model.q, "m": model.m},
        "F": model.F.tolist(),
        "H": model.H.tolist(),
        "Q": model.Q.tolist(),
        "R": model.R.tolist(),
        "mu": model.mu.tolist(),
        "P0": model.P0.tolist(),
    }
    if model.G is not None:
        d["G"] = model.G.tolist()
    if model.u is not None:
        d["u"] = model.u.tolist()
    return d


def linear_model_from_dict(d: dict) -> LinearModel:
    return LinearModel(
        F=np.asarray(d["F"]), H=np.asarray(d["H"]), Q=np.asarray(d["Q"]),
        R=np.asarray(d["R"]), mu=np.asarray(d["mu"]), P0=np.asarray(d["P0"]),
        G=np.asarray(d["G"]) if "G" in d else None,
        u=np.asarray(d["u"]) if "u" in d else None,
    )
