"""Figure rendering for the experiment runners (headless matplotlib backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_linear_estimates(traj, kalman_hat, pf_mean, ml_hat, path) -> None:
    """One panel per state component: truth vs. the three estimators."""
    p = kalman_hat.shape[1]
    k = np.arange(1, kalman_hat.shape[0] + 1)
    fig, axes = plt.subplots(p, 1, figsize=(9, 2.6 * p), sharex=True)
    axes = np.atleast_1d(axes)
    for i, ax in enumerate(axes):
        ax.plot(k, traj.states[1:, i], "o-", ms=2.5, lw=0.8, color="0.6", label="true")
        ax.plot(k, kalman_hat[:, i], "--", label="Kalman")
        ax.plot(k, pf_mean[:, i], "-.", label="PF mean")
        ax.plot(k, ml_hat[:, i], "-", lw=1.0, label="ML")
        ax.set_ylabel(f"$x_{{k,{i + 1}}}$")
    axes[0].legend(loc="upper right", ncol=4, fontsize=8)
    axes[-1].set_xlabel("time step $k$")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_variance_series(p_hat_diag, omega_diag, p_post_diag, path) -> None:
    """Estimated error variances per component against the exact posterior variance."""
    p = p_hat_diag.shape[1]
    k = np.arange(1, p_hat_diag.shape[0] + 1)
    fig, axes = plt.subplots(p, 1, figsize=(9, 2.6 * p), sharex=True)
    axes = np.atleast_1d(axes)
    for i, ax in enumerate(axes):
        ax.plot(k, p_hat_diag[:, i], "-", label=r"$\widehat{P}_k$")
        ax.plot(k, omega_diag[:, i], ":", label=r"$\Omega_k$")
        ax.plot(k, p_post_diag[:, i], "--", label=r"$P_{k|k}$")
        ax.set_ylabel(f"var$(\\hat{{x}}_{{k,{i + 1}}})$")
    axes[0].legend(loc="upper right", ncol=3, fontsize=8)
    axes[-1].set_xlabel("time step $k$")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_nonlinear_estimates(truth, pf_mean, ml_hat, sigma_hat, path) -> None:
    """Scalar estimates with the 95% band around the ML series."""
    k = np.arange(1, truth.shape[0] + 1)
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.fill_between(k, ml_hat - 1.96 * sigma_hat, ml_hat + 1.96 * sigma_hat,
                    color="0.85", label=r"$\hat{x}_k \pm 1.96\,\hat{\sigma}_k$")
    ax.plot(k, truth, "o-", ms=2.5, lw=0.8, color="0.4", label="true")
    ax.plot(k, pf_mean, "-.", label="PF mean")
    ax.plot(k, ml_hat, "-", label="ML")
    ax.set_xlabel("time step $k$")
    ax.set_ylabel("$x_k$")
    ax.legend(loc="upper right", ncol=4, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
