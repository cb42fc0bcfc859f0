"""PNG figures for the CLI outputs.

Figures are drawn on a bare Agg canvas (no pyplot state) and saved without
a Software/date stamp so that reruns give identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = ["RC", "plot_decomposition", "plot_trajectory", "plot_scan", "plot_photocurrent", "plot_squeezing"]

TWO_PI = 2 * np.pi

RC = {
    "figsize": (6.0, 4.0),
    "dpi": 100,
    "labelsize": 11,
    "ticksize": 9,
    "legendsize": 9,
    "linewidth": 1.4,
}


def _new(nrows: int = 1, sharex: bool = False) -> tuple[Figure, list]:
    h = RC["figsize"][1] * (1 if nrows == 1 else 0.7 * nrows)
    fig = Figure(figsize=(RC["figsize"][0], h), dpi=RC["dpi"])
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, 1, sharex=sharex, squeeze=False)[:, 0]
    for ax in axes:
        ax.tick_params(labelsize=RC["ticksize"], direction="in", top=True, right=True)
    return fig, list(axes)


def _label(ax, xlabel: Optional[str], ylabel: Optional[str]) -> None:
    if xlabel:
        ax.set_xlabel(xlabel, fontsize=RC["labelsize"])
    if ylabel:
        ax.set_ylabel(ylabel, fontsize=RC["labelsize"])


def _save(fig: Figure, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def plot_decomposition(path: Path, fprimes: Sequence[str], alphas: np.ndarray, title: str = "") -> Path:
    """Grouped bars of alpha^(j)/alpha_0 for each excited level (rows of ``alphas``)."""
    fig, (ax,) = _new()
    alphas = np.asarray(alphas, dtype=float)
    x = np.arange(len(fprimes))
    width = 0.26
    for j in range(3):
        ax.bar(x + (j - 1) * width, alphas[:, j], width, label=rf"$\alpha^{{({j})}}/\alpha_0$")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xticks(x, [f"f'={fp}" for fp in fprimes])
    _label(ax, None, "coefficient")
    ax.legend(fontsize=RC["legendsize"], frameon=False)
    if title:
        ax.set_title(title, fontsize=RC["labelsize"])
    return _save(fig, path)


def plot_trajectory(path: Path, parameter: np.ndarray, sy: np.ndarray, sz: np.ndarray,
                    xlabel: str, measure: str) -> Path:
    fig, (ax,) = _new()
    lw = RC["linewidth"]
    ax.plot(parameter, sy, lw=lw if measure == "sy" else 0.8 * lw, label=r"$s_y/s_0$")
    ax.plot(parameter, sz, lw=lw if measure == "sz" else 0.8 * lw, ls="--", label=r"$s_z/s_0$")
    ax.axhline(0.0, color="k", lw=0.5)
    _label(ax, xlabel, "normalized Stokes component")
    ax.legend(fontsize=RC["legendsize"], frameon=False)
    return _save(fig, path)


def plot_scan(path: Path, detuning: np.ndarray, vector: np.ndarray, tensor: np.ndarray, log: bool) -> Path:
    """Peak signals against detuning (given in rad/s, drawn in MHz)."""
    fig, (ax,) = _new()
    mhz = np.asarray(detuning) / TWO_PI / 1e6
    lw = RC["linewidth"]
    if log:
        ax.loglog(np.abs(mhz), np.abs(vector), "o-", ms=3, lw=lw, label="vector (|sy| peak)")
        ax.loglog(np.abs(mhz), np.abs(tensor), "s--", ms=3, lw=lw, label="tensor (|sz| peak)")
        _label(ax, "|detuning| (MHz)", "|peak signal|")
    else:
        ax.plot(mhz, vector, "o-", ms=3, lw=lw, label="vector (sy peak)")
        ax.plot(mhz, tensor, "s--", ms=3, lw=lw, label="tensor (sz peak)")
        ax.axhline(0.0, color="k", lw=0.5)
        _label(ax, "detuning (MHz)", "peak signal")
    ax.legend(fontsize=RC["legendsize"], frameon=False)
    return _save(fig, path)


def plot_photocurrent(path: Path, t: np.ndarray, y: np.ndarray, estimate: np.ndarray,
                      variance: np.ndarray, fz_true: float) -> Path:
    fig, (ax0, ax1, ax2) = _new(3, sharex=True)
    ms = np.asarray(t) * 1e3
    ax0.plot(ms, y, lw=0.4, color="0.4")
    _label(ax0, None, "y")
    ax1.plot(ms, estimate, lw=RC["linewidth"])
    ax1.axhline(fz_true, color="k", lw=0.6, ls=":")
    _label(ax1, None, r"$\hat{x}$ ($\hbar$)")
    ax2.plot(ms, variance, lw=RC["linewidth"])
    _label(ax2, "t (ms)", r"$v$ ($\hbar^2$)")
    return _save(fig, path)


def plot_squeezing(path: Path, tau: np.ndarray, w: np.ndarray, snr2: np.ndarray) -> Path:
    fig, (ax,) = _new()
    ms = np.asarray(tau) * 1e3
    ax.plot(ms, w, "o-", ms=3, lw=RC["linewidth"], label="W")
    ax.plot(ms, snr2, "s--", ms=3, lw=RC["linewidth"], label=r"SNR$^2$")
    _label(ax, r"$\tau$ (ms)", None)
    ax.legend(fontsize=RC["legendsize"], frameon=False)
    return _save(fig, path)
