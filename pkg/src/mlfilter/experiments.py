"""Benchmark experiments: the 3-state linear system and the scalar tanh model.

Each runner simulates a trajectory, filters it with the Kalman filter (linear
case) and the particle filter, converges the recursive ML estimator at every
step, and estimates the error covariance three ways: repeated sampling,
the fixed-point recursion for the inverse observed information, and (linear
case) the exact posterior covariance. Outputs are CSV series, JSON matrices,
a manifest, and rendered figures.
"""

from __future__ import annotations

import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._linalg import symmetrize
from .errorcov import crlb_efficiency_report, omega_recursion
from .estimator import MlConfig, ml_estimate
from .kalman import kalman_filter
from .models import (LinearModel, NonlinearModel, StateSpaceModel, linear_model_from_dict,
                     linear_model_to_dict, simulate, trajectory_to_csv)
from .particle import pf_init, pf_posterior_mean, pf_run, pf_step
from .score import complete_info, particle_score


def linear_benchmark_model() -> LinearModel:
    """Partially observed 3-state system: y_k sums the last two components."""
    return LinearModel(
        F=np.array([[0.66, -1.31, -1.11],
                    [0.07, 0.73, -0.06],
                    [0.0, 0.08, 0.80]]),
        H=np.array([[0.0, 1.0, 1.0]]),
        Q=np.diag([0.2, 0.3, 0.5]),
        R=np.array([[0.1]]),
        mu=np.zeros(3),
        P0=0.3 * np.eye(3),
    )


def tanh_transition(k: int, x: np.ndarray, u=None) -> np.ndarray:
    """Seasonal saturating growth: f_k tanh(pi x) with f_k = 1 + 0.5 sin(2 pi k / 20)."""
    fk = 1.0 + 0.5 * np.sin(2.0 * np.pi * k / 20.0)
    return fk * np.tanh(np.pi * x)


def tanh_benchmark_model() -> NonlinearModel:
    """Scalar nonlinear benchmark with half-observed state and unit noise."""
    return NonlinearModel(
        p=1,
        transition=tanh_transition,
        H=np.array([[0.5]]),
        Q=np.array([[0.2]]),
        R=np.array([[1.0]]),
        mu=np.zeros(1),
        P0=np.eye(1),
    )


def model_to_dict(model: StateSpaceModel) -> dict:
    if isinstance(model, LinearModel):
        return linear_model_to_dict(model)
    if model.transition is tanh_transition:
        return {"kind": "tanh", "H": model.H.tolist(), "Q": model.Q.tolist(),
                "R": model.R.tolist(), "mu": model.mu.tolist(), "P0": model.P0.tolist()}
    raise ValueError("only linear models and the tanh benchmark are serializable")


def model_from_dict(d: dict) -> StateSpaceModel:
    kind = d.get("kind")
    if kind == "linear":
        return linear_model_from_dict(d)
    if kind == "tanh":
        return NonlinearModel(p=1, transition=tanh_transition, H=np.asarray(d["H"]),
                              Q=np.asarray(d["Q"]), R=np.asarray(d["R"]),
                              mu=np.asarray(d["mu"]), P0=np.asarray(d["P0"]))
    raise ValueError(f"unknown model kind {kind!r}")


def load_model(path) -> StateSpaceModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(model: StateSpaceModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "linear-ss"      # linear-ss | nonlinear-tanh | custom
    model_path: str | None = None      # required for "custom"
    K: int = 100
    N: int = 2000
    M: int = 250
    seed: int = 20260824
    outdir: str = "out"
    threads: int = 1
    method: str = "em_gradient"
    epsilon: float = 1e-12
    max_iter: int = 100
    render_figures: bool = True
    matrix_steps: tuple[int, ...] | None = None   # default: {6, 83} clipped to 1..K

    def __post_init__(self):
        if self.experiment not in ("linear-ss", "nonlinear-tanh", "custom"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.K < 1 or self.N < 2 or self.M < 2:
            raise ValueError("K >= 1, N >= 2 and M >= 2 required")
        if self.experiment == "custom" and not self.model_path:
            raise ValueError("custom experiment requires a model file")
        if self.matrix_steps is None:
            object.__setattr__(self, "matrix_steps",
                               tuple(k for k in (6, 83) if k <= self.K))
        if any(not 1 <= k <= self.K for k in self.matrix_steps):
            raise ValueError("matrix_steps must lie in 1..K")

    def ml_config(self, method: str | None = None) -> MlConfig:
        return MlConfig(method=method or self.method, epsilon=self.epsilon,
                        max_iter=self.max_iter)

    def build_model(self) -> StateSpaceModel:
        if self.experiment == "linear-ss":
            return linear_benchmark_model()
        if self.experiment == "nonlinear-tanh":
            return tanh_benchmark_model()
        return load_model(self.model_path)


def _replicate_sweep(model: StateSpaceModel, observations: np.ndarray, N: int,
                     seed_seq, cfg: MlConfig, eval_at_init: bool = True):
    """One replicate: filter the whole path, ML-estimate at every step.

    Returns (x_hats (K, p), infos (K, p, p), converged (K,)) where the
    information matrix drops the score term (zero at convergence). With
    ``eval_at_init`` the information is evaluated at the initializer x^0,
    which is wider than the curvature at the mode when the predictive
    density is multimodal.
    """
    rng = np.random.default_rng(seed_seq)
    K = observations.shape[0]
    p = model.mu.shape[0]
    x_hats = np.empty((K, p))
    infos = np.empty((K, p, p))
    ok = np.ones(K, dtype=bool)
    cloud = pf_init(model, N, rng)
    for k in range(1, K + 1):
        y = observations[k - 1]
        ahead = pf_step(model, cloud, y, rng)
        init = pf_posterior_mean(ahead)
        result = ml_estimate(model, cloud, y, cfg, init=init)
        x_hats[k - 1] = result.x_hat
        ev = particle_score(model, cloud, init, y) if eval_at_init else result.final_eval
        infos[k - 1] = symmetrize(ev.complete_info - ev.outer_info)
        ok[k - 1] = result.converged
        cloud = ahead
    return x_hats, infos, ok


def replicated_ml_sweep(model: StateSpaceModel, observations: np.ndarray, N: int,
                        M: int, seed: int, cfg: MlConfig, threads: int = 1,
                        eval_at_init: bool = True):
    """M independent particle-filter + ML sweeps over the same observation path.

    Returns stacked per-replicate estimates (M, K, p), information matrices
    (M, K, p, p) and convergence flags (M, K).
    """
    seeds = np.random.SeedSequence(seed).spawn(M)

    def job(ss):
        return _replicate_sweep(model, observations, N, ss, cfg, eval_at_init)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, seeds))
    else:
        parts = [job(ss) for ss in seeds]
    x_hats = np.stack([p[0] for p in parts])
    infos = np.stack([p[1] for p in parts])
    ok = np.stack([p[2] for p in parts])
    return x_hats, infos, ok


def _clipped_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse with eigenvalues floored at 1e-10 (information can lose
    definiteness when evaluated away from the mode)."""
    w, v = np.linalg.eigh(symmetrize(a))
    return symmetrize((v / np.clip(w, 1e-10, None)) @ v.T)


def _average_info_series(model: StateSpaceModel, infos: np.ndarray, ok: np.ndarray):
    """Per-step averaged information, its inverse, and the 50-step recursion limit."""
    M, K = ok.shape
    p = infos.shape[-1]
    p_hat = np.empty((K, p, p))
    omega = np.empty((K, p, p))
    for k in range(1, K + 1):
        kept = infos[ok[:, k - 1], k - 1]
        info_bar = symmetrize(kept.mean(axis=0))
        p_hat[k - 1] = _clipped_inverse(info_bar)
        jz = complete_info(model, k)
        try:
            omega[k - 1] = omega_recursion(jz, info_bar, max_iter=50).limit
        except (ValueError, RuntimeError):
            # info_bar can exceed jz by sampling noise; fall back to the inverse
            omega[k - 1] = p_hat[k - 1]
    return p_hat, omega


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _manifest(cfg: ExperimentConfig, model: StateSpaceModel, files: dict) -> dict:
    import scipy

    from . import __version__

    return {
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in asdict(cfg).items()},
        "model": model_to_dict(model),
        "files": files,
        "versions": {"mlfilter": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": sys.version.split()[0]},
    }


def coverage_study(model: StateSpaceModel, K: int, M: int, N: int, seed: int,
                   cfg: MlConfig, eval_at_init: bool = True):
    """Interval coverage over M independent trajectories.

    Each replicate simulates its own trajectory, filters it, and reports the
    per-step ML estimate with an information-based standard error. Returns
    (truths, estimates, sigmas), each of shape (M, K, p).
    """
    p = model.mu.shape[0]
    truths = np.empty((M, K, p))
    estimates = np.empty((M, K, p))
    sigmas = np.empty((M, K, p))
    for m_i, ss in enumerate(np.random.SeedSequence(seed).spawn(M)):
        rng = np.random.default_rng(ss)
        traj = simulate(model, K, int(rng.integers(2 ** 31)))
        x_hats, infos, ok = _replicate_sweep(model, traj.observations, N, rng, cfg,
                                             eval_at_init)
        truths[m_i] = traj.states[1:]
        estimates[m_i] = x_hats
        sigmas[m_i] = np.sqrt(np.stack(
            [np.diag(_clipped_inverse(infos[k])) for k in range(K)]))
    return truths, estimates, sigmas


@dataclass(frozen=True)
class ExperimentArtifacts:
    outdir: Path
    files: dict = field(default_factory=dict)

    def path(self, key: str) -> Path:
        return self.outdir / self.files[key]


def run_linear_experiment(cfg: ExperimentConfig) -> ExperimentArtifacts:
    """Trajectory + Kalman/PF/ML estimate series, variance series and matrices."""
    model = cfg.build_model()
    if not isinstance(model, LinearModel):
        raise ValueError("run_linear_experiment needs a linear model")
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    p = model.p

    traj = simulate(model, cfg.K, cfg.seed)
    states = kalman_filter(model, traj.observations)
    clouds = pf_run(model, traj.observations, cfg.N, np.random.default_rng(cfg.seed + 1))
    ml_cfg = cfg.ml_config()
    ml_hat = np.empty((cfg.K, p))
    for k in range(1, cfg.K + 1):
        ml_hat[k - 1] = ml_estimate(model, clouds[k - 1], traj.observations[k - 1],
                                    ml_cfg).x_hat

    files = {"trajectory": "trajectory.csv", "estimates": "estimates.csv",
             "variances": "variances.csv", "matrices": "matrices.json",
             "manifest": "manifest.json"}
    trajectory_to_csv(traj, out / files["trajectory"])

    pf_mean = np.array([pf_posterior_mean(clouds[k]) for k in range(1, cfg.K + 1)])
    kalman_hat = np.array([s.x_post for s in states[1:]])
    header = (["k"] + [f"true_{i+1}" for i in range(p)]
              + [f"kalman_{i+1}" for i in range(p)]
              + [f"pf_{i+1}" for i in range(p)]
              + [f"ml_{i+1}" for i in range(p)])
    rows = [[k] + [repr(float(v)) for v in np.concatenate(
        [traj.states[k], kalman_hat[k - 1], pf_mean[k - 1], ml_hat[k - 1]])]
        for k in range(1, cfg.K + 1)]
    _write_csv(out / files["estimates"], header, rows)

    x_hats, infos, ok = replicated_ml_sweep(model, traj.observations, cfg.N, cfg.M,
                                            cfg.seed + 2, ml_cfg, cfg.threads)
    p_hat, omega = _average_info_series(model, infos, ok)
    p_post = np.array([s.P_post for s in states[1:]])
    header = (["k"] + [f"p_hat_{i+1}{i+1}" for i in range(p)]
              + [f"omega_{i+1}{i+1}" for i in range(p)]
              + [f"p_post_{i+1}{i+1}" for i in range(p)])
    rows = [[k] + [repr(float(v)) for v in np.concatenate(
        [np.diag(p_hat[k - 1]), np.diag(omega[k - 1]), np.diag(p_post[k - 1])])]
        for k in range(1, cfg.K + 1)]
    _write_csv(out / files["variances"], header, rows)

    matrices = {str(k): {"p_hat": p_hat[k - 1].tolist(),
                         "omega": omega[k - 1].tolist(),
                         "p_post": p_post[k - 1].tolist()}
                for k in cfg.matrix_steps}
    with open(out / files["matrices"], "w") as fh:
        json.dump(matrices, fh, indent=2)

    if cfg.render_figures:
        from .plotting import plot_linear_estimates, plot_variance_series

        files["fig_estimates"] = "estimates.png"
        plot_linear_estimates(traj, kalman_hat, pf_mean, ml_hat,
                              out / files["fig_estimates"])
        files["fig_variances"] = "variances.png"
        plot_variance_series(np.diagonal(p_hat, axis1=1, axis2=2),
                             np.diagonal(omega, axis1=1, axis2=2),
                             np.diagonal(p_post, axis1=1, axis2=2),
                             out / files["fig_variances"])

    with open(out / files["manifest"], "w") as fh:
        json.dump(_manifest(cfg, model, files), fh, indent=2)
    return ExperimentArtifacts(outdir=out, files=files)


def run_nonlinear_experiment(cfg: ExperimentConfig) -> ExperimentArtifacts:
    """PF/ML estimates with a 95% band from the estimated error variance."""
    model = cfg.build_model()
    if not isinstance(model, NonlinearModel):
        raise ValueError("run_nonlinear_experiment needs a nonlinear model")
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)

    traj = simulate(model, cfg.K, cfg.seed)
    clouds = pf_run(model, traj.observations, cfg.N, np.random.default_rng(cfg.seed + 1))
    ml_cfg = cfg.ml_config()
    ml_hat = np.array([ml_estimate(model, clouds[k - 1], traj.observations[k - 1],
                                   ml_cfg).x_hat for k in range(1, cfg.K + 1)])
    pf_mean = np.array([pf_posterior_mean(clouds[k]) for k in range(1, cfg.K + 1)])

    x_hats, infos, ok = replicated_ml_sweep(model, traj.observations, cfg.N, cfg.M,
                                            cfg.seed + 2, ml_cfg, cfg.threads,
                                            eval_at_init=True)
    p_hat, omega = _average_info_series(model, infos, ok)
    sigma = np.sqrt(np.diagonal(p_hat, axis1=1, axis2=2))       # (K, 1)
    sample_var = x_hats.var(axis=0, ddof=1)                     # (K, 1)
    truth = traj.states[1:]
    report = crlb_efficiency_report(
        np.broadcast_to(truth, x_hats.shape[0:1] + truth.shape).reshape(-1, model.p),
        x_hats.reshape(-1, model.p),
        p_hat.mean(axis=0),
        sigmas=np.broadcast_to(sigma, x_hats.shape[0:1] + sigma.shape).reshape(-1, model.p))

    files = {"trajectory": "trajectory.csv", "estimates": "estimates.csv",
             "manifest": "manifest.json"}
    trajectory_to_csv(traj, out / files["trajectory"])
    header = ["k", "true", "pf", "ml", "sigma_hat", "lower95", "upper95",
              "sample_var", "omega_var"]
    rows = [[k] + [repr(float(v)) for v in
                   (truth[k - 1, 0], pf_mean[k - 1, 0], ml_hat[k - 1, 0],
                    sigma[k - 1, 0],
                    ml_hat[k - 1, 0] - 1.96 * sigma[k - 1, 0],
                    ml_hat[k - 1, 0] + 1.96 * sigma[k - 1, 0],
                    sample_var[k - 1, 0], omega[k - 1, 0, 0])]
            for k in range(1, cfg.K + 1)]
    _write_csv(out / files["estimates"], header, rows)

    if cfg.render_figures:
        from .plotting import plot_nonlinear_estimates

        files["fig_estimates"] = "estimates.png"
        plot_nonlinear_estimates(truth[:, 0], pf_mean[:, 0], ml_hat[:, 0],
                                 sigma[:, 0], out / files["fig_estimates"])

    manifest = _manifest(cfg, model, files)
    manifest["coverage"] = report.coverage
    with open(out / files["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2)
    return ExperimentArtifacts(outdir=out, files=files)
