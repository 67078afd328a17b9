"""Tracking-quality scoring: per-frame TP/FP, cumulative precision/recall, scalar AP.

AP here is final precision times final recall, not the area under the PR curve.
The full curve is emitted as well so conventional AP can be computed downstream.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .regions import BBox


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class GtBox:
    gt_id: int
    bbox: BBox


@dataclass
class AnnotationSet:
    """Ground truth keyed by frame index; every key is an annotated frame."""

    frames: dict[int, list[GtBox]] = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def np_count(self, frame: int) -> int:
        return len(self.frames.get(frame, []))

    @property
    def total(self) -> int:
        return sum(len(v) for v in self.frames.values())

    def to_json(self) -> list[dict]:
        return [{"frame": f, "boxes": [{"id": g.gt_id, "x": g.bbox.x, "y": g.bbox.y,
                                        "w": g.bbox.w, "h": g.bbox.h} for g in boxes]}
                for f, boxes in sorted(self.frames.items())]

    @classmethod
    def from_json(cls, doc) -> "AnnotationSet":
        if isinstance(doc, dict):
            doc = doc.get("frames", [])
        frames: dict[int, list[GtBox]] = {}
        try:
            for entry in doc:
                f = int(entry["frame"])
                if f < 0:
                    raise EvalError(f"negative frame index {f}")
                frames[f] = [GtBox(int(b.get("id", -1)), BBox(int(b["x"]), int(b["y"]), int(b["w"]), int(b["h"])))
                             for b in entry.get("boxes", [])]
        except (KeyError, TypeError, ValueError) as e:
            raise EvalError(f"malformed annotation entry: {e}") from None
        return cls(frames)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "AnnotationSet":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise EvalError(f"cannot read annotations {path}: {e}") from None


def match_frame(detections: Sequence[BBox], gts: Sequence[BBox], iou_threshold: float = 0.5) -> tuple[int, int]:
    """Greedy matching by descending IoU; returns (TP, FP).

    Every detection left unmatched is a false positive, which covers both
    spurious detections and duplicate detections of an already-matched object.
    """
    pairs = []
    for di, d in enumerate(detections):
        for gi, g in enumerate(gts):
            iou = d.iou(g)
            if iou >= iou_threshold and iou > 0:
                pairs.append((-iou, di, gi))
    pairs.sort()
    used_d, used_g = set(), set()
    for _, di, gi in pairs:
        if di in used_d or gi in used_g:
            continue
        used_d.add(di)
        used_g.add(gi)
    tp = len(used_d)
    return tp, len(detections) - tp


@dataclass
class EvalReport:
    frames: list[int]
    tp: list[int]
    fp: list[int]
    np_: list[int]
    precision: list[float]
    recall: list[float]
    average_precision: float

    @property
    def final_precision(self) -> float:
        return self.precision[-1]

    @property
    def final_recall(self) -> float:
        return self.recall[-1]

    @property
    def curve(self) -> list[tuple[float, float]]:
        return list(zip(self.recall, self.precision))

    def to_json(self) -> dict:
        return {
            "frames": len(self.frames),
            "tp": sum(self.tp), "fp": sum(self.fp), "np": sum(self.np_),
            "precision": self.final_precision,
            "recall": self.final_recall,
            "average_precision": self.average_precision,
            "per_frame": [{"frame": f, "tp": t, "fp": p, "np": n}
                          for f, t, p, n in zip(self.frames, self.tp, self.fp, self.np_)],
        }

    def write(self, json_path, csv_path=None) -> None:
        Path(json_path).write_text(json.dumps(self.to_json(), indent=1))
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["i", "precision", "recall"])
                for i, (p, r) in enumerate(zip(self.precision, self.recall), start=1):
                    w.writerow([i, repr(p), repr(r)])


def report(per_frame: Sequence[tuple[int, int]], annotations: AnnotationSet) -> EvalReport:
    """Cumulative precision/recall over annotated frames in ascending order.

    ``per_frame`` is aligned with ``sorted(annotations.frames)``. Precision is
    reported as 1.0 until the first detection appears.
    """
    frames = sorted(annotations.frames)
    if not frames:
        raise EvalError("no evaluated frames")
    if len(per_frame) != len(frames):
        raise EvalError(f"{len(per_frame)} results for {len(frames)} annotated frames")
    total_np = annotations.total
    if total_np == 0:
        raise EvalError("annotations contain no objects; recall is undefined")
    tp_cum = det_cum = 0
    precision, recall, tps, fps, nps = [], [], [], [], []
    for f, (tp, fp) in zip(frames, per_frame):
        np_n = annotations.np_count(f)
        if tp > np_n:
            raise EvalError(f"frame {f}: TP {tp} exceeds annotated count {np_n}")
        tp_cum += tp
        det_cum += tp + fp
        precision.append(tp_cum / det_cum if det_cum else 1.0)
        recall.append(tp_cum / total_np)
        tps.append(tp)
        fps.append(fp)
        nps.append(np_n)
    return EvalReport(frames, tps, fps, nps, precision, recall, precision[-1] * recall[-1])


def evaluate(detections_by_frame: Mapping[int, Sequence[BBox]], annotations: AnnotationSet,
             iou_threshold: float = 0.5) -> EvalReport:
    results = [match_frame(list(detections_by_frame.get(f, [])), [g.bbox for g in annotations.frames[f]],
                           iou_threshold)
               for f in sorted(annotations.frames)]
    return report(results, annotations)


def tube_boxes(tubes: Iterable) -> dict[int, list[BBox]]:
    """Per-frame boxes claimed by a set of tubes."""
    out: dict[int, list[BBox]] = {}
    for tube in tubes:
        for of in tube.frames:
            out.setdefault(of.original_frame_index, []).append(of.bbox)
    return out


def tubes_as_annotations(tubes: Iterable, n_frames: int) -> AnnotationSet:
    frames: dict[int, list[GtBox]] = {f: [] for f in range(n_frames)}
    for tube in tubes:
        for of in tube.frames:
            frames.setdefault(of.original_frame_index, []).append(GtBox(tube.object_id, of.bbox))
    return AnnotationSet(frames)


def detections_from_json(doc) -> dict[int, list[BBox]]:
    """Parse detections in the annotation layout (``[{frame, boxes: [...]}, ...]``)."""
    ann = AnnotationSet.from_json(doc)
    return {f: [g.bbox for g in boxes] for f, boxes in ann.frames.items()}
