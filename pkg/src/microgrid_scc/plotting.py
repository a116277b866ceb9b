"""PNG figures for runs, controller comparisons and sweeps (Agg backend)."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .model import GridParams  # noqa: E402
from .simulation import Trace  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 0.9,
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.stem}.tmp.png")
    fig.savefig(tmp, format="png", bbox_inches="tight")
    plt.close(fig)
    os.replace(tmp, path)
    return path


def _ms(t):
    return np.asarray(t) * 1e3


def plot_trace(trace: Trace, params: GridParams, path: str | Path, target: float | None = None, title: str = "") -> Path:
    """Converter voltages, bus voltage, line currents and inputs against time."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(4, 1, figsize=(7.0, 8.0), sharex=True)
        t = _ms(trace.t)
        X = trace.x
        for j in range(params.n):
            ax[0].plot(t, X[:, 2 * j], label=f"v{j + 1}")
            ax[2].plot(t, X[:, 2 * j + 1], label=f"it{j + 1}")
            ax[3].plot(t, trace.u[:, j], label=f"u{j + 1}")
        for bound in (params.v_safe_lo.min(), params.v_safe_hi.max()):
            ax[0].axhline(bound, color="k", ls="--", lw=0.7)
        ax[1].plot(t, X[:, -1], color="C3", label="vL")
        if target is not None:
            ax[1].axhline(target, color="k", ls=":", lw=0.8, label="target")
        ax[0].set_ylabel("converter [V]")
        ax[1].set_ylabel("bus [V]")
        ax[2].set_ylabel("line current [A]")
        ax[3].set_ylabel("input [A]")
        ax[3].set_xlabel("time [ms]")
        for a in ax:
            a.legend(loc="upper right", ncol=3)
        if title:
            ax[0].set_title(title)
        return _save(fig, path)


def plot_comparison(
    traces: Mapping[str, Trace], params: GridParams, path: str | Path, target: float | None = None
) -> Path:
    """Bus voltage and worst barrier margin for several controllers."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(2, 1, figsize=(7.0, 5.0), sharex=True)
        for name, tr in traces.items():
            ax[0].plot(_ms(tr.t), tr.x[:, -1], label=name)
            ax[1].plot(_ms(tr.t), tr.min_b, label=name)
        if target is not None:
            ax[0].axhline(target, color="k", ls=":", lw=0.8)
        ax[1].axhline(0.0, color="k", ls="--", lw=0.7)
        ax[0].set_ylabel("bus voltage [V]")
        ax[1].set_ylabel("min barrier b [V^2]")
        ax[1].set_xlabel("time [ms]")
        ax[0].legend()
        return _save(fig, path)


def plot_sweep(records: Sequence[dict], path: str | Path) -> Path:
    """Initial bus voltage against initial voltage spread, coloured by outcome."""
    with plt.rc_context(STYLE):
        names = sorted({r["controller"] for r in records})
        fig, ax = plt.subplots(1, len(names), figsize=(3.6 * len(names), 3.4), squeeze=False)
        for a, name in zip(ax[0], names):
            rows = [r for r in records if r["controller"] == name]
            for label, pick, color in (
                ("converged", lambda r: r["converged"], "C2"),
                ("unsafe", lambda r: r["safety_violated"], "C3"),
                ("other", lambda r: not r["converged"] and not r["safety_violated"], "C7"),
            ):
                sel = [r for r in rows if pick(r)]
                a.scatter([r["vL0"] for r in sel], [r["v0_max"] - r["v0_min"] for r in sel], s=14, c=color, label=label)
            a.set_title(name)
            a.set_xlabel("initial bus voltage [V]")
            a.set_ylabel("initial converter spread [V]")
            a.legend()
        return _save(fig, path)
