"""Charts for run logs and ablation summaries, written as SVG plus CSV.

Every chart writes the numbers it displays to a CSV file next to the SVG, so
downstream checks can compare data without parsing graphics.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .trainer import RunLog


def plot_loss_curves(log: RunLog, out_dir) -> list:
    """Loss components per epoch; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    epochs = [e["epoch"] for e in log.epochs]
    series = {k: [e[k] for e in log.epochs] for k in ("loss", "cls", "ref", "con")}
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in series.items():
        ax.plot(epochs, values, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    svg = os.path.join(out_dir, "loss_curves.svg")
    fig.savefig(svg)
    plt.close(fig)
    csv = os.path.join(out_dir, "loss_curves.csv")
    with open(csv, "w") as fh:
        fh.write("epoch,loss,cls,ref,con\n")
        for i, epoch in enumerate(epochs):
            fh.write(
                f"{epoch},{series['loss'][i]},{series['cls'][i]},"
                f"{series['ref'][i]},{series['con'][i]}\n"
            )
    return [svg, csv]


def _read_ablation_csv(path) -> list:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "cell,seed,subset,thresh,accuracy":
        raise ValueError(f"{path}: missing ablation header")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        cell, seed, subset, thresh, accuracy = line.split(",")
        rows.append(
            {
                "cell": cell,
                "seed": int(seed),
                "subset": subset,
                "thresh": thresh,
                "accuracy": accuracy,
            }
        )
    return rows


def plot_ablation(path, out_dir, subset="overall", thresh="0.5") -> list:
    """Bar or line chart of an ablation CSV for one subset and threshold.

    Cells named like ``beta=0.5`` plot as a line over the numeric value; other
    sweeps plot as bars in first-seen cell order.  Accuracy strings from the
    input CSV are carried into the output CSV unchanged.
    """
    os.makedirs(out_dir, exist_ok=True)
    rows = [
        r
        for r in _read_ablation_csv(path)
        if r["subset"] == subset and r["thresh"] == thresh
    ]
    if not rows:
        raise ValueError(f"{path}: no rows for subset={subset} thresh={thresh}")
    cells = []
    for r in rows:
        if r["cell"] not in cells:
            cells.append(r["cell"])
    means = []
    for cell in cells:
        accs = [float(r["accuracy"]) for r in rows if r["cell"] == cell]
        means.append(sum(accs) / len(accs))
    numeric = all("=" in c for c in cells)
    fig, ax = plt.subplots(figsize=(6, 4))
    if numeric:
        try:
            xs = [float(c.split("=", 1)[1]) for c in cells]
        except ValueError:
            numeric = False
    if numeric:
        ax.plot(xs, means, marker="o")
        ax.set_xlabel(cells[0].split("=", 1)[0])
    else:
        ax.bar(range(len(cells)), means)
        ax.set_xticks(range(len(cells)))
        ax.set_xticklabels(cells, rotation=20, ha="right")
    ax.set_ylabel(f"accuracy @{thresh} ({subset})")
    fig.tight_layout()
    svg = os.path.join(out_dir, "ablation.svg")
    fig.savefig(svg)
    plt.close(fig)
    csv = os.path.join(out_dir, "ablation_chart.csv")
    with open(csv, "w") as fh:
        fh.write("cell,seed,subset,thresh,accuracy\n")
        for r in rows:
            fh.write(
                f"{r['cell']},{r['seed']},{r['subset']},{r['thresh']},{r['accuracy']}\n"
            )
    return [svg, csv]
