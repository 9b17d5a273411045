"""Trajectory plots (SVG) from epoch records."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .lattice import PARITIES  # noqa: E402

PLOT_KINDS = ("mi", "alpha", "ber")

_FIELDS = {"mi": "mi_true", "alpha": "alpha", "ber": "ber"}
_LABELS = {"mi": "mutual information (bits)", "alpha": "scale factor",
           "ber": "raw bit error rate"}


def emit_plot(records, kind: str, path: str, title: str | None = None,
              target_mi: float = 1.945, margin_mi: float = 0.02) -> None:
    """Render one trajectory kind ('mi', 'alpha' or 'ber') to an SVG file."""
    if not records:
        raise ValueError("no records to plot")
    if kind not in PLOT_KINDS:
        raise ValueError(f"kind must be one of {PLOT_KINDS}")
    cycles = [rec.cycle for rec in records]
    fig, ax = plt.subplots(figsize=(7.0, 4.4))
    for parity, marker in zip(PARITIES, ("o", "s")):
        ys = np.array([getattr(rec.parities[parity], _FIELDS[kind])
                       for rec in records], dtype=float)
        if kind == "ber":
            ys = np.maximum(ys, 1e-12)  # keep the log axis defined
        ax.plot(cycles, ys, marker=marker, markersize=3, label=parity)
    if kind == "mi":
        ax.axhline(target_mi, color="crimson", lw=0.8, ls="--",
                   label=f"target {target_mi:g}")
        ax.axhline(target_mi + margin_mi, color="gray", lw=0.8, ls=":",
                   label=f"setpoint {target_mi + margin_mi:g}")
    if kind == "ber":
        ax.set_yscale("log")
        ax.axhline(1e-2, color="crimson", lw=0.8, ls="--", label="1e-2")
    ax.set_xlabel("P/E cycles")
    ax.set_ylabel(_LABELS[kind])
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
