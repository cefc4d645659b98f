"""Matplotlib figures for run reports, written as PNG files."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _event_lines(ax, traj):
    for t, kind, _ in traj.events:
        if t > 0:
            ax.axvline(t * 1e3, color="0.6", lw=0.8, ls="--")


def plot_waveforms(traj, path, title=None):
    fig, axes = plt.subplots(4, 1, figsize=(8, 9), sharex=True)
    t = traj.t * 1e3
    axes[0].plot(t, traj["i_dc"], lw=0.6, label="i_dc")
    axes[0].plot(t, traj["i_dc_ref"], lw=0.8, label="i_dc ref")
    axes[0].set_ylabel("A")
    axes[1].plot(t, traj["i_ac"], lw=0.6, label="i_ac")
    axes[1].plot(t, traj["i_ac_ref"], lw=0.8, label="i_ac ref")
    axes[1].set_ylabel("A")
    axes[2].plot(t, traj["v_sigma"], lw=0.6, label="v_sigma")
    axes[2].plot(t, traj["v_sigma_ref"], lw=0.8, label="v_sigma ref")
    axes[2].plot(t, traj["v_delta"], lw=0.6, label="v_delta")
    axes[2].set_ylabel("V")
    axes[3].plot(t, traj["d_dc_final"], lw=0.6, label="d_dc")
    axes[3].plot(t, traj["d_ac"], lw=0.6, label="d_ac")
    axes[3].plot(t, traj["d_dc_comp"], lw=0.6, label="d_dc comp")
    axes[3].set_xlabel("t [ms]")
    for ax in axes:
        _event_lines(ax, traj)
        ax.legend(loc="upper right", fontsize=7)
        ax.grid(alpha=0.3)
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_cells(traj, path):
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True, sharey=True)
    t = traj.t * 1e3
    for ax, arm in zip(axes.ravel(), ("ap", "an", "bp", "bn")):
        v = traj.arm_cells(arm)
        for j in range(v.shape[1]):
            ax.plot(t, v[:, j], lw=0.5)
        ax.set_title(f"arm {arm}")
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("t [ms]")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_comparison(traj_s, traj_a, path):
    names = ("i_dc", "i_ac", "v_sigma", "v_delta")
    fig, axes = plt.subplots(len(names), 1, figsize=(8, 9), sharex=True)
    for ax, name in zip(axes, names):
        ax.plot(traj_s.t * 1e3, traj_s[name], lw=0.5, label="switched")
        ax.plot(traj_a.t * 1e3, traj_a[name], lw=0.9, label="averaged")
        ax.set_ylabel(name)
        ax.legend(loc="upper right", fontsize=7)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("t [ms]")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_bode(arr, path):
    """Rows of (f, model dB, model deg, probe dB, probe deg)."""
    arr = np.asarray(arr)
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    a1.semilogx(arr[:, 0], arr[:, 1], label="model")
    a1.semilogx(arr[:, 0], arr[:, 3], "o", ms=4, label="probe")
    a1.set_ylabel("|G_vi| [dB V/A]")
    a2.semilogx(arr[:, 0], arr[:, 2])
    a2.semilogx(arr[:, 0], arr[:, 4], "o", ms=4)
    a2.set_ylabel("phase [deg]")
    a2.set_xlabel("f [Hz]")
    a1.legend()
    for ax in (a1, a2):
        ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_spectrum(t, x, f_ac, path, max_harmonic=10):
    x = np.asarray(x, dtype=float)
    dt = t[1] - t[0]
    spec = np.abs(np.fft.rfft(x)) / len(x) * 2
    spec[0] /= 2
    f = np.fft.rfftfreq(len(x), dt)
    m = f <= max_harmonic * f_ac
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.stem(f[m] / f_ac, spec[m])
    ax.set_xlabel("harmonic of f_ac")
    ax.set_ylabel("amplitude")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_run(result, out):
    """Figures for a finished run; returns the written file names."""
    files = []
    traj = result.trajectory
    if traj is None:
        return files
    plot_waveforms(traj, out / "waveforms.png", result.scenario.preset)
    files.append("waveforms.png")
    if traj.cells is not None:
        plot_cells(traj, out / "cells.png")
        files.append("cells.png")
    if "switched" in result.extra and "averaged" in result.extra:
        plot_comparison(result.extra["switched"], result.extra["averaged"], out / "comparison.png")
        files.append("comparison.png")
    return files
