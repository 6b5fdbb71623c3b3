"""Plotting frontend for hsbem CSV outputs.

Consumes only the documented CSV schemas: convergence tables with columns
level,h,dt,error and observation-point signals with columns t,value.  Output
figures carry no timestamps or environment-dependent metadata, so repeated
runs on the same inputs are byte-identical.
"""

import csv
import os

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_convergence_csv(path):
    """Rows of a convergence table with columns level,h,dt,error."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty convergence table")
    missing = [c for c in ("level", "h", "dt", "error")
               if c not in rows[0]]
    if missing:
        raise ValueError(f"{path}: missing columns {missing} "
                         "(expected level,h,dt,error)")
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 rows to plot a rate")
    h = np.array([float(r["h"]) for r in rows])
    err = np.array([float(r["error"]) for r in rows])
    if np.any(h <= 0) or np.any(err <= 0):
        raise ValueError(f"{path}: h and error must be positive")
    return h, err


def read_signal_csv(path):
    """One observation-point signal with columns t,value."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "value"]:
        raise ValueError(f"{path}: expected header t,value")
    if len(rows) < 2:
        raise ValueError(f"{path}: signal has no samples")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]


def _save(fig, out_path):
    fig.savefig(out_path, dpi=120, metadata={"Software": "hsbem-plots"})
    plt.close(fig)


def plot_convergence(csv_path, out_path):
    """Log-log error-vs-h plot with the least-squares slope in the legend.

    Returns the fitted slope.
    """
    h, err = read_convergence_csv(csv_path)
    slope = float(np.polyfit(np.log(h), np.log(err), 1)[0])
    fig, ax = plt.subplots(figsize=(5.0, 3.75))
    ax.loglog(h, err, "o-", label=f"error, slope {slope:.2f}")
    ref = err[0] * (h / h[0]) ** slope
    ax.loglog(h, ref, "k--", linewidth=0.8, label="fit")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.grid(True, which="both", linewidth=0.3)
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)
    return slope


def plot_signals(csv_paths, out_path):
    """Overlay signals sharing one time grid, with a difference inset.

    All files must carry identical t columns.  With more than one signal the
    inset shows each signal minus the first, and the maximum absolute
    difference against the first signal is printed per file.
    """
    if not csv_paths:
        raise ValueError("need at least one signal file")
    signals = []
    for p in csv_paths:
        t, v = read_signal_csv(p)
        signals.append((p, t, v))
    t0 = signals[0][1]
    for p, t, _ in signals[1:]:
        if len(t) != len(t0) or not np.array_equal(t, t0):
            raise ValueError(f"{p}: time grid differs from "
                             f"{signals[0][0]}")
    fig, ax = plt.subplots(figsize=(6.0, 3.75))
    for p, t, v in signals:
        ax.plot(t, v, label=os.path.basename(p))
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.legend(loc="upper right", fontsize=8)
    if len(signals) > 1:
        inset = ax.inset_axes([0.12, 0.12, 0.35, 0.3])
        base = signals[0][2]
        for p, t, v in signals[1:]:
            d = v - base
            inset.plot(t, d, linewidth=0.8)
            print(f"max difference {os.path.basename(p)} vs "
                  f"{os.path.basename(signals[0][0])}: "
                  f"{np.max(np.abs(d)):.6e}")
        inset.set_title("difference", fontsize=7)
        inset.tick_params(labelsize=6)
    fig.tight_layout()
    _save(fig, out_path)
