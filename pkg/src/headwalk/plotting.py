"""Figures for the CLI report path, rendered to image files.

matplotlib is imported lazily with a non-interactive backend so the library
itself never needs a display.
"""
from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


_LABELS = {"a": "rigid neck (A)", "b": "head stabilised (B)"}


def plot_traces(traces: dict, path) -> None:
    """Power, swing-leg rate and swing-leg angle over one cycle per model."""
    plt = _pyplot()
    fig, axes = plt.subplots(3, 1, figsize=(7, 8), sharex=True)
    for key, tr in traces.items():
        lab = _LABELS.get(key, key)
        axes[0].plot(tr.pct_cycle, tr.power, label=lab)
        axes[1].plot(tr.pct_cycle, tr.swing_rate, label=lab)
        axes[2].plot(tr.pct_cycle, tr.swing_angle, label=lab)
    axes[0].set_ylabel("power (W)")
    axes[1].set_ylabel("swing rate (rad/s)")
    axes[2].set_ylabel("swing angle (rad)")
    axes[2].set_xlabel("cycle (%)")
    axes[0].legend()
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_bode(responses: dict, path, title: str = "") -> None:
    """Magnitude and phase of frequency responses keyed by model."""
    plt = _pyplot()
    fig, (ax_m, ax_p) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for key, fr in responses.items():
        ax_m.semilogx(fr.omega, fr.magnitude_db, label=_LABELS.get(key, key))
        ax_p.semilogx(fr.omega, fr.phase_deg, label=_LABELS.get(key, key))
    ax_m.set_ylabel("magnitude (dB)")
    ax_p.set_ylabel("phase (deg)")
    ax_p.set_xlabel("omega (rad/s)")
    ax_m.set_title(title)
    ax_m.legend()
    for ax in (ax_m, ax_p):
        ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_impulse(responses: dict, path) -> None:
    """Cart power after the velocity step, keyed by model."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, r in responses.items():
        ax.plot(r.t, r.power, label=f"{_LABELS.get(key, key)}: {r.integral:.2f} J")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("cart power (W)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_mfpt_curve(reports, path, label: str = "") -> None:
    """MFPT against slope deviation on a log scale; lower bounds marked."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    s = np.array([r.sigma for r in reports])
    m = np.array([r.mfpt for r in reports])
    bound = np.array([r.unbounded for r in reports])
    ax.semilogy(s, m, "o-", label=label or None)
    if bound.any():
        ax.semilogy(s[bound], m[bound], "^", color="k", label="lower bound")
    ax.set_xlabel("slope std (rad)")
    ax.set_ylabel("MFPT (steps)")
    if label or bound.any():
        ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(summary: dict, path) -> None:
    """Viability cell counts per impulse group."""
    plt = _pyplot()
    cells = ("neither", "both", "b_only", "a_only")
    groups = ("all", "low", "high")
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.25
    x = np.arange(len(cells))
    for k, g in enumerate(groups):
        ax.bar(x + (k - 1) * width, [summary[g][c] for c in cells], width, label=g)
    ax.set_xticks(x)
    ax.set_xticklabels(cells)
    ax.set_ylabel("samples")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
