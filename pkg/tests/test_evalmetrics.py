"""Accuracy at IoU thresholds, subset breakdown, CSV round trip."""

import numpy as np
import pytest

from speechground.evalmetrics import (
    SUBSETS,
    THRESHOLDS,
    BreakdownRow,
    BreakdownTable,
    EvalRecord,
    acc_at_iou,
    breakdown,
    format_breakdown_csv,
    match_rate,
    read_breakdown_csv,
    write_breakdown_csv,
)
from speechground.scenegen import Box3D, iou

GT = Box3D(center=(0.5, 0.5, 0.5), size=(1, 1, 1))


def _pred_with_iou(target_iou):
    # shifting a unit cube by s along x gives IoU (1-s)/(1+s)
    s = (1.0 - target_iou) / (1.0 + target_iou)
    box = Box3D(center=(0.5 + s, 0.5, 0.5), size=(1, 1, 1))
    assert iou(box, GT) == pytest.approx(target_iou, abs=1e-12)
    return box


def _rec(target_iou, tag="unique"):
    return EvalRecord(predicted=_pred_with_iou(target_iou), ground_truth=GT, subset_tag=tag)


def test_acc_is_a_percentage():
    records = [_rec(0.6), _rec(0.3), _rec(0.1)]
    assert acc_at_iou(records, 0.25) == pytest.approx(200.0 / 3.0, abs=1e-9)
    assert acc_at_iou(records, 0.5) == pytest.approx(100.0 / 3.0, abs=1e-9)


def test_acc_threshold_is_strict():
    records = [_rec(0.25)]
    assert acc_at_iou(records, 0.25) == 0.0
    records = [_rec(0.2500001)]
    assert acc_at_iou(records, 0.25) == 100.0


def test_acc_empty_records():
    with pytest.raises(ValueError):
        acc_at_iou([], 0.25)
    with pytest.raises(ValueError):
        breakdown([])


def test_breakdown_rows_and_subsets():
    records = [_rec(0.6, "unique"), _rec(0.6, "multiple"), _rec(0.1, "multiple")]
    table = breakdown(records)
    assert {(r.subset, r.thresh) for r in table.rows} == {
        (s, t) for s in SUBSETS for t in THRESHOLDS
    }
    assert table.get("unique", 0.5).accuracy == 100.0
    assert table.get("unique", 0.5).n == 1
    assert table.get("multiple", 0.5).accuracy == pytest.approx(50.0)
    assert table.get("overall", 0.5).n == 3
    with pytest.raises(KeyError):
        table.get("unique", 0.75)


def test_breakdown_overall_between_subset_accuracies():
    rng = np.random.default_rng(0)
    records = []
    for _ in range(60):
        tag = "unique" if rng.random() < 0.5 else "multiple"
        records.append(_rec(float(rng.uniform(0.05, 0.95)), tag))
    table = breakdown(records)
    for t in THRESHOLDS:
        u = table.get("unique", t).accuracy
        m = table.get("multiple", t).accuracy
        o = table.get("overall", t).accuracy
        assert min(u, m) - 1e-9 <= o <= max(u, m) + 1e-9


def test_breakdown_omits_absent_subset():
    table = breakdown([_rec(0.6, "unique")])
    assert {r.subset for r in table.rows} == {"unique", "overall"}
    with pytest.raises(ValueError):
        breakdown([_rec(0.6, "other")])


def test_match_rate():
    assert match_rate([1, 2, 3], [1, 2, 4]) == pytest.approx(2.0 / 3.0)
    with pytest.raises(ValueError):
        match_rate([], [])
    with pytest.raises(ValueError):
        match_rate([1, 2], [1])


def test_csv_round_trip(tmp_path):
    table = breakdown([_rec(0.6, "unique"), _rec(0.4, "multiple"), _rec(0.05, "multiple")])
    path = tmp_path / "metrics.csv"
    write_breakdown_csv(table, path)
    text = path.read_text()
    assert text.splitlines()[0] == "subset,thresh,accuracy,n"
    back = read_breakdown_csv(path)
    assert back == table
    assert format_breakdown_csv(back) == text


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "metrics.csv"
    path.write_text("nope\n")
    with pytest.raises(ValueError):
        read_breakdown_csv(path)
    path.write_text("subset,thresh,accuracy,n\nunique,0.5,bad\n")
    with pytest.raises(ValueError):
        read_breakdown_csv(path)


def test_breakdown_table_equality_roundtrip():
    row = BreakdownRow(subset="overall", thresh=0.25, accuracy=66.66666666666667, n=3)
    table = BreakdownTable(rows=[row])
    assert table.get("overall", 0.25) is row
