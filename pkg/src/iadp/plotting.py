"""Deterministic SVG plots of a run trace."""
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import TraceParseError  # noqa: E402

KINDS = ("errors", "weights", "xi", "taskspace")

RC = {
    "svg.hashsalt": "iadp",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "path.simplify": False,
}


def _joints(cols):
    n = 0
    while f"e_{n + 1}1" in cols:
        n += 1
    return n


def _require(cols, names):
    missing = [c for c in names if c not in cols]
    if missing:
        raise TraceParseError(f"trace lacks columns needed for this plot: {missing}")


def _figure(nrows):
    fig, axes = plt.subplots(nrows, 1, figsize=(6.0, 2.2 * nrows), squeeze=False)
    return fig, [a[0] for a in axes]


def plot_errors(cols, n):
    _require(cols, ["t"] + [f"e_{i}1" for i in range(1, n + 1)])
    fig, axes = _figure(max(n, 1))
    for i, ax in enumerate(axes, start=1):
        if i <= n:
            ax.plot(cols["t"], cols[f"e_{i}1"], lw=0.8)
        ax.set_ylabel(f"e_{i}1 [rad]")
    axes[-1].set_xlabel("t [s]")
    return fig


def plot_weights(cols, n):
    need = ["t"] + [f"What_{i}_{m}" for i in range(1, n + 1) for m in range(1, 5)]
    _require(cols, need)
    fig, axes = _figure(max(n, 1))
    for i, ax in enumerate(axes, start=1):
        if i <= n:
            for m in range(1, 5):
                ax.plot(cols["t"], cols[f"What_{i}_{m}"], lw=0.8, label=f"W{m}")
            ax.legend(loc="upper right", fontsize=7)
        ax.set_ylabel(f"W_hat joint {i}")
    axes[-1].set_xlabel("t [s]")
    return fig


def plot_xi(cols, n):
    _require(cols, ["t"] + [f"xi_{i}" for i in range(1, n + 1)])
    fig, axes = _figure(max(n, 1))
    for i, ax in enumerate(axes, start=1):
        if i <= n:
            ax.plot(cols["t"], cols[f"xi_{i}"], lw=0.8)
        ax.set_ylabel(f"xi_{i}")
    axes[-1].set_xlabel("t [s]")
    return fig


def plot_taskspace(cols, n):
    _require(cols, ["ee_x", "ee_y", "ref_x", "ref_y"])
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.plot(cols["ref_x"], cols["ref_y"], "--", lw=0.8, label="commanded")
    ax.plot(cols["ee_x"], cols["ee_y"], lw=0.8, label="achieved")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper right", fontsize=7)
    return fig


PLOTTERS = {"errors": plot_errors, "weights": plot_weights, "xi": plot_xi, "taskspace": plot_taskspace}


def render(cols, kind, path):
    """Write one SVG; identical traces give byte-identical files."""
    if kind not in PLOTTERS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {', '.join(KINDS)}")
    n = _joints(cols)
    with plt.rc_context(RC):
        fig = PLOTTERS[kind](cols, n)
        fig.tight_layout()
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
