import csv
import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from vidsyn.evaluation import (AnnotationSet, EvalError, GtBox, detections_from_json, evaluate, match_frame,
                               report, tubes_as_annotations)
from vidsyn.regions import BBox
from vidsyn.tracker import ObjectFrame, Tube


def ann(nps):
    return AnnotationSet({f: [GtBox(k, BBox(10 * k, 0, 5, 5)) for k in range(n)] for f, n in enumerate(nps)})


def test_match_frame_examples():
    g = [BBox(0, 0, 10, 10), BBox(50, 50, 10, 10)]
    assert match_frame([], g) == (0, 0)
    assert match_frame([BBox(0, 0, 10, 10)], g) == (1, 0)
    assert match_frame([BBox(0, 0, 10, 10), BBox(1, 0, 10, 10)], g) == (1, 1)   # duplicate
    assert match_frame([BBox(5, 0, 10, 10)], g) == (0, 1)                       # IoU 1/3
    assert match_frame([BBox(5, 0, 10, 10)], g, iou_threshold=0.3) == (1, 0)
    assert match_frame([BBox(200, 200, 4, 4)], []) == (0, 1)


def test_match_prefers_higher_iou():
    # detection A overlaps both gts; greedy-by-IoU leaves B to pair with the second gt
    gts = [BBox(0, 0, 10, 10), BBox(2, 0, 10, 10)]
    dets = [BBox(1, 0, 10, 10), BBox(2, 0, 10, 10)]
    assert match_frame(dets, gts) == (2, 0)


boxes = st.builds(BBox, st.integers(0, 30), st.integers(0, 30), st.integers(1, 15), st.integers(1, 15))


@given(st.lists(boxes, max_size=5), st.lists(boxes, max_size=5))
def test_match_frame_counts_are_consistent(dets, gts):
    tp, fp = match_frame(dets, gts)
    assert tp + fp == len(dets) and tp <= len(gts)
    tp2, _ = match_frame(gts, dets)
    assert tp2 == tp  # IoU is symmetric, so the matching size is too


def test_report_worked_examples():
    # precision 36/40 = 0.9, recall 36/45 = 0.8
    r = report([(9, 1)] * 4 + [(0, 0)], ann([9, 9, 9, 9, 9]))
    assert r.final_precision == pytest.approx(0.9) and r.final_recall == pytest.approx(0.8)
    assert r.average_precision == pytest.approx(0.72)
    # ten frames of two objects, 18 hits and 2 misfires
    r2 = report([(2, 0)] * 9 + [(0, 2)], ann([2] * 10))
    assert r2.final_precision == pytest.approx(0.9) and r2.final_recall == pytest.approx(0.9)
    assert r2.average_precision == pytest.approx(0.81)


def test_ap_is_precision_times_recall():
    r = report([(4, 1), (0, 0), (4, 0)], ann([5, 0, 5]))
    assert r.average_precision == float(Fraction(8, 9)) * float(Fraction(8, 10))


def test_precision_before_any_detection_is_one():
    r = report([(0, 0), (1, 0)], ann([1, 1]))
    assert r.precision == [1.0, 1.0] and r.recall == [0.0, 0.5]


def test_errors():
    with pytest.raises(EvalError):
        report([(0, 0)], ann([0]))          # no objects: recall undefined
    with pytest.raises(EvalError):
        report([], AnnotationSet({}))
    with pytest.raises(EvalError):
        report([(0, 0)], ann([1, 1]))       # misaligned
    with pytest.raises(EvalError):
        report([(2, 0)], ann([1]))          # more TP than objects
    with pytest.raises(EvalError):
        AnnotationSet.from_json([{"frame": -1, "boxes": []}])
    with pytest.raises(EvalError):
        AnnotationSet.from_json([{"boxes": []}])


tables = st.integers(1, 12).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 4), min_size=n, max_size=n),
    st.lists(st.integers(0, 4), min_size=n, max_size=n),
    st.lists(st.integers(0, 3), min_size=n, max_size=n)))


@given(tables)
def test_report_matches_fraction_oracle(t):
    nps, tps_raw, fps = t
    tps = [min(a, b) for a, b in zip(tps_raw, nps)]
    if sum(nps) == 0:
        return
    r = report(list(zip(tps, fps)), ann(nps))
    total = sum(nps)
    for i in range(len(nps)):
        det = sum(tps[:i + 1]) + sum(fps[:i + 1])
        p = Fraction(sum(tps[:i + 1]), det) if det else Fraction(1)
        q = Fraction(sum(tps[:i + 1]), total)
        assert r.precision[i] == pytest.approx(float(p), abs=1e-12)
        assert r.recall[i] == pytest.approx(float(q), abs=1e-12)
    # recall never decreases
    assert all(a <= b for a, b in zip(r.recall, r.recall[1:]))
    assert r.average_precision == r.final_precision * r.final_recall


def test_self_evaluation_is_perfect():
    a = AnnotationSet({0: [GtBox(1, BBox(1, 1, 5, 5))], 1: [], 2: [GtBox(1, BBox(3, 1, 5, 5)), GtBox(2, BBox(20, 20, 4, 4))]})
    dets = {f: [g.bbox for g in gs] for f, gs in a.frames.items()}
    assert evaluate(dets, a).average_precision == 1.0


def test_tubes_as_annotations():
    tube = Tube(3, [ObjectFrame(1, 0, BBox(0, 0, 2, 2)), ObjectFrame(2, 0, BBox(1, 0, 2, 2))])
    a = tubes_as_annotations([tube], 4)
    assert a.n_frames == 4 and a.total == 2 and a.frames[1][0].gt_id == 3


def test_json_and_csv_outputs(tmp_path):
    a = ann([1, 2])
    a.save(tmp_path / "a.json")
    back = AnnotationSet.load(tmp_path / "a.json")
    assert back == a
    assert detections_from_json(json.loads((tmp_path / "a.json").read_text()))[1] == [g.bbox for g in a.frames[1]]
    r = report([(1, 0), (1, 1)], a)
    r.write(tmp_path / "r.json", tmp_path / "r.csv")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["tp"] == 2 and doc["average_precision"] == r.average_precision
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["i", "precision", "recall"] and len(rows) == 3
    assert float(rows[2][1]) == r.precision[1]
