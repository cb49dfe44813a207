"""Grounding accuracy at IoU thresholds with subset breakdown.

Accuracy at a threshold counts predictions whose box IoU against the ground
truth strictly exceeds the threshold.  Results are reported for the unique
and multiple subsets and overall, at 0.25 and 0.5, and can be written as CSV.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenegen import Box3D, iou

THRESHOLDS = (0.25, 0.5)
SUBSETS = ("unique", "multiple", "overall")


@dataclass
class EvalRecord:
    predicted: Box3D
    ground_truth: Box3D
    subset_tag: str


@dataclass
class BreakdownRow:
    subset: str
    thresh: float
    accuracy: float
    n: int


@dataclass
class BreakdownTable:
    rows: list[BreakdownRow]

    def get(self, subset: str, thresh: float) -> BreakdownRow:
        for row in self.rows:
            if row.subset == subset and row.thresh == thresh:
                return row
        raise KeyError(f"no row for ({subset}, {thresh})")


def acc_at_iou(records: list[EvalRecord], threshold: float) -> float:
    """Percentage of records with IoU strictly above the threshold."""
    if not records:
        raise ValueError("no evaluation records")
    hits = sum(1 for r in records if iou(r.predicted, r.ground_truth) > threshold)
    return 100.0 * hits / len(records)


def breakdown(records: list[EvalRecord]) -> BreakdownTable:
    """Accuracy per subset and threshold; empty subsets are omitted."""
    if not records:
        raise ValueError("no evaluation records")
    for r in records:
        if r.subset_tag not in ("unique", "multiple"):
            raise ValueError(f"unknown subset tag {r.subset_tag!r}")
    rows = []
    for subset in SUBSETS:
        sel = [r for r in records if subset == "overall" or r.subset_tag == subset]
        if not sel:
            continue
        for thresh in THRESHOLDS:
            rows.append(
                BreakdownRow(
                    subset=subset,
                    thresh=thresh,
                    accuracy=acc_at_iou(sel, thresh),
                    n=len(sel),
                )
            )
    return BreakdownTable(rows=rows)


def match_rate(predicted_idx, label_idx) -> float:
    """Fraction of samples whose selected proposal index equals the label.

    This is the selection-level metric for pipelines where proposals are
    ground-truth boxes, in which case box-IoU accuracy saturates.
    """
    predicted_idx = np.asarray(predicted_idx)
    label_idx = np.asarray(label_idx)
    if predicted_idx.shape != label_idx.shape or predicted_idx.size == 0:
        raise ValueError("index arrays must be non-empty and congruent")
    return float(np.mean(predicted_idx == label_idx))


def write_breakdown_csv(table: BreakdownTable, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_breakdown_csv(table))


def format_breakdown_csv(table: BreakdownTable) -> str:
    lines = ["subset,thresh,accuracy,n"]
    for row in table.rows:
        lines.append(f"{row.subset},{row.thresh},{row.accuracy},{row.n}")
    return "\n".join(lines) + "\n"


def read_breakdown_csv(path) -> BreakdownTable:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "subset,thresh,accuracy,n":
        raise ValueError(f"{path}: missing breakdown header")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields")
        rows.append(
            BreakdownRow(
                subset=parts[0],
                thresh=float(parts[1]),
                accuracy=float(parts[2]),
                n=int(parts[3]),
            )
        )
    return BreakdownTable(rows=rows)
