"""Figure rendering for scenario results.

Each scenario kind gets one PNG laid out from the same rows that go into
the CSV, written next to it.  Figures are built on matplotlib's Figure
class directly (no pyplot state, no display backend required).
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .errors import ParameterError
from .scenario import SCHEMAS

_COLORS = ("tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple",
           "tab:brown", "tab:pink", "tab:gray")


def _columns(kind: str, header, rows):
    if tuple(header) != SCHEMAS[kind]:
        raise ParameterError(f"header does not match the {kind} schema")
    cols = {name: [row[i] for row in rows] for i, name in enumerate(header)}
    return cols


def _semilogy_positive(ax, x, y, **kwargs):
    """Line plot on a log y axis with nonpositive values masked out."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0.0
    ax.semilogy(x[keep], y[keep], **kwargs)


def _plot_relay_ber(fig, cols):
    directions = sorted(set(cols["direction"]))
    axes = fig.subplots(1, len(directions), sharey=True)
    if len(directions) == 1:
        axes = (axes,)
    relay_counts = sorted(set(cols["n_relays"]))
    for ax, direction in zip(axes, directions):
        for color, n_relays in zip(_COLORS, relay_counts):
            sel = [i for i, (d, n) in
                   enumerate(zip(cols["direction"], cols["n_relays"]))
                   if d == direction and n == n_relays]
            power = [cols["power_dbm"][i] for i in sel]
            _semilogy_positive(ax, power,
                               [cols["ber_analytic"][i] for i in sel],
                               color=color, label=f"N = {n_relays}")
            mc = np.array([cols["ber_mc"][i] for i in sel], dtype=float)
            err = np.array([cols["mc_stderr"][i] for i in sel], dtype=float)
            keep = mc > 0.0
            ax.errorbar(np.asarray(power)[keep], mc[keep],
                        yerr=3.0 * err[keep], color=color, marker="o",
                        markersize=3, linestyle="none", capsize=2)
        ax.set_xlabel("average transmit power (dBm)")
        ax.set_title(direction)
        ax.set_ylim(1e-12, 1.0)
        ax.grid(True, which="both", linestyle="--", alpha=0.5)
        ax.legend()
    axes[0].set_ylabel("bit error rate")


def _plot_localization(fig, cols):
    ax_err, ax_scatter = fig.subplots(1, 2)
    counts = sorted(set(cols["n_anchors"]))
    err = np.array(cols["err_m"], dtype=float)
    n_anchors = np.array(cols["n_anchors"], dtype=float)
    means, medians, lo, hi = [], [], [], []
    for n in counts:
        sample = err[n_anchors == n]
        means.append(float(np.mean(sample)))
        medians.append(float(np.median(sample)))
        lo.append(float(np.percentile(sample, 10)))
        hi.append(float(np.percentile(sample, 90)))
    ax_err.fill_between(counts, lo, hi, alpha=0.2, label="10-90%")
    ax_err.plot(counts, means, "o-", label="mean")
    ax_err.plot(counts, medians, "s--", label="median")
    ax_err.set_xlabel("number of anchors")
    ax_err.set_ylabel("position error (m)")
    ax_err.set_xticks(counts)
    ax_err.grid(True, linestyle="--", alpha=0.5)
    ax_err.legend()

    best = counts[-1]
    sel = n_anchors == best
    dx = np.array(cols["est_x"], dtype=float)[sel] \
        - np.array(cols["true_x"], dtype=float)[sel]
    dy = np.array(cols["est_y"], dtype=float)[sel] \
        - np.array(cols["true_y"], dtype=float)[sel]
    ax_scatter.scatter(dx, dy, s=4, alpha=0.4)
    ax_scatter.axhline(0.0, color="k", linewidth=0.5)
    ax_scatter.axvline(0.0, color="k", linewidth=0.5)
    ax_scatter.set_xlabel("x error (m)")
    ax_scatter.set_ylabel("y error (m)")
    ax_scatter.set_title(f"{best} anchors")
    ax_scatter.set_aspect("equal")
    ax_scatter.grid(True, linestyle="--", alpha=0.5)


def _plot_mimo_ber(fig, cols):
    ax = fig.subplots()
    sigmas = sorted(set(cols["sigma_x_sq"]))
    tx_counts = sorted(set(cols["n_tx"]))
    styles = ("-", "--", ":", "-.")
    for style, sigma in zip(styles, sigmas):
        for color, n_tx in zip(_COLORS, tx_counts):
            sel = [i for i, (s, n) in
                   enumerate(zip(cols["sigma_x_sq"], cols["n_tx"]))
                   if s == sigma and n == n_tx]
            _semilogy_positive(ax, [cols["power_dbm"][i] for i in sel],
                               [cols["ber"][i] for i in sel],
                               color=color, linestyle=style,
                               label=f"{n_tx}x1, sigma^2 = {sigma:g}")
    ax.set_xlabel("average transmit power per laser (dBm)")
    ax.set_ylabel("bit error rate")
    ax.set_ylim(1e-12, 1.0)
    ax.grid(True, which="both", linestyle="--", alpha=0.5)
    ax.legend()


def _plot_power_control(fig, cols):
    ax = fig.subplots()
    ring_counts = sorted(set(cols["n_rings"]))
    for color, n_rings in zip(_COLORS, ring_counts):
        sel = [i for i, n in enumerate(cols["n_rings"]) if n == n_rings]
        targets = [cols["target_ber"][i] for i in sel]
        power = [cols["avg_power_per_bit_dbm"][i] for i in sel]
        order = np.argsort(targets)
        ax.semilogx(np.asarray(targets)[order], np.asarray(power)[order],
                    "o-", color=color, label=f"NR = {n_rings}")
    ax.invert_xaxis()
    ax.set_xlabel("target bit error rate")
    ax.set_ylabel("average power per bit (dBm)")
    ax.grid(True, which="both", linestyle="--", alpha=0.5)
    ax.legend()


_PLOTTERS = {
    "relay-ber": (_plot_relay_ber, (9.6, 4.2)),
    "localization": (_plot_localization, (9.6, 4.2)),
    "mimo-ber": (_plot_mimo_ber, (6.4, 4.8)),
    "power-control": (_plot_power_control, (6.4, 4.8)),
}


def render_figure(kind: str, header, rows, out_path, dpi: int = 150) -> str:
    """Render the figure for one scenario result next to its CSV.

    out_path is the CSV path; the figure lands at the same location with
    a .png suffix.  Returns the path written.
    """
    if kind not in _PLOTTERS:
        raise ParameterError(f"unknown scenario kind: {kind!r}")
    if not rows:
        raise ParameterError("no rows to plot")
    plotter, figsize = _PLOTTERS[kind]
    cols = _columns(kind, header, rows)
    fig = Figure(figsize=figsize)
    plotter(fig, cols)
    fig.tight_layout()
    png = Path(out_path).with_suffix(".png")
    fig.savefig(png, dpi=dpi)
    return str(png)
