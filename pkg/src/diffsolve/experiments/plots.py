"""Vector charts from persisted run directories."""

import glob
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .records import read_metrics_csv


def _seed_rows(run_path):
    """Map seed -> metrics rows for every seed directory under a run."""
    out = {}
    for path in sorted(glob.glob(os.path.join(run_path, "seed*", "metrics.csv"))):
        seed = os.path.basename(os.path.dirname(path))
        out[seed] = read_metrics_csv(path)
    if not out:
        raise FileNotFoundError(f"no seed*/metrics.csv found under {run_path}")
    return out


def plot_run(run_path, out_dir):
    """Write validation, budget and cumulative-cost charts as SVG.

    Returns the list of files written.
    """
    by_seed = _seed_rows(run_path)
    os.makedirs(out_dir, exist_ok=True)
    label = os.path.basename(os.path.normpath(run_path))
    written = []

    def chart(name, column, ylabel, logy=False, step=False):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for seed, rows in by_seed.items():
            xs = [r[0] for r in rows]
            ys = [r[column] for r in rows]
            if step:
                ax.step(xs, ys, where="post", label=seed)
            else:
                ax.plot(xs, ys, label=seed)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("interval")
        ax.set_ylabel(ylabel)
        ax.set_title(label)
        if len(by_seed) > 1:
            ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{label}_{name}.svg")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    chart("validation", 2, "validation metric", logy=True)
    chart("budget", 3, "inner iterations K", step=True)
    chart("cost", 5, "cumulative inner iterations")
    return written
