"""Figure rendering for run and study outputs.

Every function saves a PNG next to the delimited output it illustrates and
returns the path. Rendering is headless (Agg backend).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_run_figures",
    "render_campaign_figure",
    "render_convergence_figure",
    "render_comparison_figure",
]

_DPI = 150


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_run_figures(out_dir: Path, result) -> list[Path]:
    """Parameter trajectories (mean with one-std band) and flux fit."""
    t = np.asarray(result.t_min)
    mean = np.array([d.param_mean for d in result.diagnostics])
    std = np.array([d.param_std for d in result.diagnostics])

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    labels = [r"$R$ (m$^2$K/W)", r"$\rho C$ (J/m$^2$K)"]
    for j, ax in enumerate(axes):
        ax.plot(t, mean[:, j], color="C0", lw=1.2, label="ensemble mean")
        ax.fill_between(t, mean[:, j] - std[:, j], mean[:, j] + std[:, j],
                        color="C0", alpha=0.25, label=r"$\pm$ 1 std")
        ax.set_xlabel("time (min)")
        ax.set_ylabel(labels[j])
        ax.legend(fontsize=8)
    params_path = _save(fig, out_dir / "parameters.png")

    paths = [params_path]
    if result.diagnostics[0].flux_mean is not None:
        flux = np.array([d.flux_mean for d in result.diagnostics])
        meas = np.array([[r.F_int, r.F_ext] for r in result.records[1:]])
        fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
        for j, (ax, name) in enumerate(zip(axes, ["internal", "external"])):
            ax.plot(t, meas[:, j], ".", ms=1.5, color="0.6", label="measured")
            ax.plot(t, flux[:, j], color="C3", lw=1.0, label="estimated")
            ax.set_xlabel("time (min)")
            ax.set_ylabel(f"{name} flux (W/m$^2$)")
            ax.legend(fontsize=8)
        paths.append(_save(fig, out_dir / "fluxes.png"))
    return paths


def render_campaign_figure(out_path: Path, records, truth=None) -> Path:
    """Overview of a measurement campaign: temperatures and fluxes vs time."""
    t = np.array([r.t_min for r in records])
    temps = np.array([[r.T_int, r.T_ext] for r in records])
    flux = np.array([[r.F_int, r.F_ext] for r in records])

    fig, axes = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    axes[0].plot(t, temps[:, 0], ".", ms=1.5, label=r"$T_{int}$")
    axes[0].plot(t, temps[:, 1], ".", ms=1.5, label=r"$T_{ext}$")
    axes[1].plot(t, flux[:, 0], ".", ms=1.5, label=r"$F_{int}$")
    axes[1].plot(t, flux[:, 1], ".", ms=1.5, label=r"$F_{ext}$")
    if truth is not None:
        axes[0].plot(truth.t_min, truth.boundary, "k-", lw=0.6)
        axes[1].plot(truth.t_min, truth.fluxes, "k-", lw=0.6)
    axes[0].set_ylabel("temperature (°C)")
    axes[1].set_ylabel("flux (W/m$^2$)")
    axes[1].set_xlabel("time (min)")
    for ax in axes:
        ax.legend(fontsize=8, ncol=2)
    return _save(fig, out_path)


def render_convergence_figure(out_dir: Path, study) -> Path:
    """Mean absolute error at the evaluation time versus ensemble size."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for method, color in (("enmkf", "C0"), ("enkf", "C1")):
        rows = sorted((r for r in study.aggregate if r["method"] == method), key=lambda r: r["M"])
        M = [r["M"] for r in rows]
        axes[0].loglog(M, [r["R_mae"] for r in rows], "o-", color=color, label=method)
        axes[1].loglog(M, [r["rhoC_mae"] for r in rows], "o-", color=color, label=method)
    axes[0].set_ylabel(f"|R error| at t={study.t_eval}")
    axes[1].set_ylabel(f"|rhoC error| at t={study.t_eval}")
    for ax in axes:
        ax.set_xlabel("ensemble size M")
        ax.legend(fontsize=8)
    return _save(fig, out_dir / "convergence.png")


def render_comparison_figure(out_dir: Path, report) -> Path:
    """Parameter ensemble std trajectories, first paired seed of each method."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    t = np.asarray(report.t_min)
    for method, color in (("enmkf", "C0"), ("enkf", "C1")):
        if not report.std_history.get(method):
            continue
        std = report.std_history[method][0]
        axes[0].semilogy(t, std[:, 0], color=color, lw=1.0, label=method)
        axes[1].semilogy(t, std[:, 1], color=color, lw=1.0, label=method)
    axes[0].set_ylabel("R ensemble std")
    axes[1].set_ylabel("rhoC ensemble std")
    for ax in axes:
        ax.set_xlabel("time (min)")
        ax.legend(fontsize=8)
    return _save(fig, out_dir / "comparison.png")
