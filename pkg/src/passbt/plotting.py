"""Figure rendering for sweep and training outputs.

Every report path that writes a CSV can also drop a PNG next to it.  The
CSV stays the machine-readable contract; figures are for eyeballing the
curve shapes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_AXIS_LABELS = {
    "antenna_count": "Number of activated antennas",
    "power_dbm": "Transmission power (dBm)",
    "layer_index": "Training layer",
    "phase_offset": "Arrival-phase offset (rad)",
    "frequency": "Carrier frequency (Hz)",
}


def figure_path_for(csv_path) -> str:
    base = str(csv_path)
    if base.lower().endswith(".csv"):
        base = base[:-4]
    return base + ".png"


def plot_sweep(header, rows, out_path, title=None) -> str:
    """Line plot of rate versus the swept value, one line per scheme."""
    if not rows:
        raise ValueError("nothing to plot")
    variable = rows[0][0]
    by_scheme: dict = {}
    for row in rows:
        by_scheme.setdefault(row[2], []).append((float(row[1]), float(row[3])))

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for scheme, points in by_scheme.items():
        points.sort()
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        ax.plot(xs, ys, marker="o", markersize=3.5, linewidth=1.2, label=scheme)
    ax.set_xlabel(_AXIS_LABELS.get(variable, variable))
    ax.set_ylabel("Achievable rate (bits/s/Hz)")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)


def plot_trace(trace, noise_power, out_path, title=None) -> str:
    """Running-optimum rate versus training layer for one run."""
    import math

    layers = [row.layer for row in trace]
    rates = [math.log2(1.0 + row.best_metric**2 / noise_power) for row in trace]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(layers, rates, marker="s", markersize=4, linewidth=1.2, color="tab:blue")
    ax.set_xlabel("Training layer")
    ax.set_ylabel("Achievable rate (bits/s/Hz)")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)
