"""Figures written next to the CSV output of ``run`` and ``sweep``."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
}


def _positive(values):
    # zeros would drag a log axis down to the 1e-300 floor; leave gaps instead
    return [v if v > 0 else float("nan") for v in values]


def plot_series(series, path, title: str = "") -> Path:
    """Four panels: sup norms, masses, energy, and the time step."""
    path = Path(path)
    t = [r.t for r in series]
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(2, 2, figsize=(8, 5.5), sharex=True)
        ax = axes[0, 0]
        ax.semilogy(t, _positive([r.sup_n for r in series]), label=r"$\|n\|_\infty$")
        ax.semilogy(t, _positive([r.sup_c for r in series]), label=r"$\|c\|_\infty$")
        ax.semilogy(t, _positive([r.sup_grad_c for r in series]), label=r"$\max|\nabla_h c|$")
        if any(r.sup_u > 0 for r in series):
            ax.semilogy(t, _positive([r.sup_u for r in series]), label=r"$\|u\|_\infty$")
        ax.set_title("sup norms")
        ax.legend(fontsize=7)

        ax = axes[0, 1]
        ax.plot(t, [r.mass_n for r in series], label=r"$\sum n\,h^N$")
        ax.plot(t, [r.mass_c for r in series], label=r"$\sum c\,h^N$")
        ax.set_title("mass")
        ax.legend(fontsize=7)

        ax = axes[1, 0]
        ax.plot(t, [r.energy for r in series])
        ax.set_title("energy")
        ax.set_xlabel("t")

        ax = axes[1, 1]
        ax.semilogy(t[1:], [r.dt for r in series[1:]] or [1.0])
        ax.set_title("time step")
        ax.set_xlabel("t")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_sweep(rows, path) -> Path:
    """Final ``sup_n`` against ``m`` with the three-dimensional critical exponent marked."""
    path = Path(path)
    ok = [r for r in rows if r.get("final_sup_n") is not None]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot([r["m"] for r in ok], [r["final_sup_n"] for r in ok], "o-")
        for r in ok:
            ax.annotate(r["verdict"], (r["m"], r["final_sup_n"]), fontsize=7,
                        textcoords="offset points", xytext=(3, 4))
        ax.axvline(4 / 3, color="0.5", ls="--", lw=0.8)
        ax.set_xlabel("m")
        ax.set_ylabel(r"final $\|n\|_\infty$")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
