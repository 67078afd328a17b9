"""Detection-to-tube tracking with weighted center prediction.

Prediction: with ``i`` the index of the newest center C[i],

* ``i <= 10``: D = sum_{n<i} (C[n+1]-C[n])(n+1) / sum_{n<i} (n+1)
* ``i > 10``:  D = sum_{n=1..10} (C[i]-C[i-n])(10-n) / 45

and P = C[i] + D. The second form is kept exactly as written even though it
overshoots a constant velocity ``d`` (it yields 11/3 d).

A candidate becomes confirmed once it has been matched in N = round(fps / 2)
consecutive frames; only confirmed tracks turn into tubes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import TrackConfig
from .regions import BBox, Detection
from .video_io import Frame

WINDOW = 10


class TrackerError(Exception):
    pass


class TrackState(enum.Enum):
    CANDIDATE = "candidate"
    CONFIRMED = "confirmed"
    CLOSED = "closed"


@dataclass
class ObjectFrame:
    original_frame_index: int
    original_timestamp_ms: int
    bbox: BBox
    image_patch: Optional[np.ndarray] = field(default=None, repr=False)
    mask_patch: Optional[np.ndarray] = field(default=None, repr=False)
    predicted: bool = False


@dataclass
class Tube:
    object_id: int
    frames: list[ObjectFrame]

    @property
    def start_timestamp_ms(self) -> int:
        return self.frames[0].original_timestamp_ms

    @property
    def start_frame(self) -> int:
        return self.frames[0].original_frame_index

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class Track:
    serial: int
    state: TrackState = TrackState.CANDIDATE
    object_id: Optional[int] = None
    centers: list[tuple[float, float]] = field(default_factory=list)
    entries: list[ObjectFrame] = field(default_factory=list)
    coast_count: int = 0

    @property
    def last_bbox(self) -> BBox:
        return self.entries[-1].bbox

    @property
    def real_count(self) -> int:
        return sum(1 for e in self.entries if not e.predicted)

    @property
    def last_frame(self) -> int:
        return self.entries[-1].original_frame_index

    def sort_key(self) -> tuple[int, int]:
        # confirmed tracks (by id) win ties over candidates (by creation order)
        if self.object_id is not None:
            return (0, self.object_id)
        return (1, self.serial)


def _weighted_displacement(centers: Sequence[tuple[float, float]]) -> np.ndarray:
    c = np.asarray(centers, dtype=np.float64)
    i = len(c) - 1
    diffs = c[1:] - c[:-1]
    weights = np.arange(1, i + 1, dtype=np.float64)
    return (diffs * weights[:, None]).sum(axis=0) / weights.sum()


def displacement(centers: Sequence[tuple[float, float]]) -> np.ndarray:
    """D[i] for the center history C[0..i] (zero for a single center)."""
    c = np.asarray(centers, dtype=np.float64)
    if c.ndim != 2 or len(c) == 0:
        raise TrackerError("need at least one center")
    i = len(c) - 1
    if i == 0:
        return np.zeros(2)
    if i <= WINDOW:
        return _weighted_displacement(c)
    n = np.arange(1, WINDOW + 1)
    terms = (c[i] - c[i - n]) * (WINDOW - n)[:, None]
    return terms.sum(axis=0) / 45.0


def predict_center(track_or_centers) -> tuple[float, float]:
    centers = track_or_centers.centers if isinstance(track_or_centers, Track) else track_or_centers
    c = np.asarray(centers, dtype=np.float64)
    p = c[-1] + displacement(c)
    return float(p[0]), float(p[1])


def per_frame_velocity(centers: Sequence[tuple[float, float]]) -> np.ndarray:
    """Recency-weighted mean step over the last WINDOW steps (used only while coasting)."""
    c = np.asarray(centers, dtype=np.float64)[-(WINDOW + 1):]
    if len(c) < 2:
        return np.zeros(2)
    return _weighted_displacement(c)


def confirmation_threshold(fps: float) -> int:
    if not fps > 0:
        raise TrackerError(f"fps must be positive, got {fps}")
    return max(1, int(math.floor(fps * 0.5 + 0.5)))


def track_prediction(track: Track) -> tuple[float, float]:
    """Expected center in the frame after the track's last entry.

    A track that has coasted k frames extends its last real prediction by k
    per-frame steps rather than feeding predictions back into the history.
    """
    px, py = predict_center(track.centers)
    if track.coast_count:
        v = per_frame_velocity(track.centers)
        px += track.coast_count * v[0]
        py += track.coast_count * v[1]
    return px, py


def gate_radius(track: Track, gate_min_px: float) -> float:
    return max(track.last_bbox.diagonal, gate_min_px)


@dataclass
class Assignment:
    matches: list[tuple[int, int]]  # (track position, detection position)
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def associate(tracks: Sequence[Track], detections: Sequence[Detection],
              gate_min_px: float = 20.0, predictions=None) -> Assignment:
    """Greedy one-to-one matching by ascending predicted-center distance within the gate."""
    if len({d.frame_index for d in detections}) > 1:
        raise TrackerError("detections span more than one frame")
    if predictions is None:
        predictions = [track_prediction(t) for t in tracks]
    pairs = []
    for ti, t in enumerate(tracks):
        px, py = predictions[ti]
        gate = gate_radius(t, gate_min_px)
        for di, d in enumerate(detections):
            cx, cy = d.center
            dist = math.hypot(cx - px, cy - py)
            if dist <= gate:
                pairs.append((dist, t.sort_key(), di, ti))
    pairs.sort()
    used_t, used_d, matches = set(), set(), []
    for _, _, di, ti in pairs:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        matches.append((ti, di))
    matches.sort()
    return Assignment(matches,
                      [i for i in range(len(tracks)) if i not in used_t],
                      [i for i in range(len(detections)) if i not in used_d])


class Tracker:
    """Sequential multi-object tracker producing finalized tubes."""

    def __init__(self, fps: float, config: Optional[TrackConfig] = None, frame_size=None):
        self.config = config or TrackConfig()
        self.config.validate()
        self.n_confirm = confirmation_threshold(fps)
        cl = self.config.coast_limit
        self.coast_limit = self.n_confirm if cl == "auto" else int(cl)
        self.tracks: list[Track] = []
        self.next_id = 1
        self.next_serial = 0
        self.last_index: Optional[int] = None
        self.frame_size = frame_size  # (width, height)

    def step(self, detections: Sequence[Detection], frame: Frame) -> list[Tube]:
        return step_tracks(self, detections, frame)

    def flush(self) -> list[Tube]:
        """Close every live track (end of stream)."""
        tubes = []
        for t in self.tracks:
            tube = _close(t)
            if tube is not None:
                tubes.append(tube)
        self.tracks = []
        tubes.sort(key=lambda tb: tb.object_id)
        return tubes


def _entry(det: Detection, frame: Frame) -> ObjectFrame:
    return ObjectFrame(frame.index, frame.timestamp_ms, det.bbox, det.image_patch, det.mask_patch)


def _close(track: Track) -> Optional[Tube]:
    was_confirmed = track.state is TrackState.CONFIRMED
    track.state = TrackState.CLOSED
    if not was_confirmed:
        return None
    entries = list(track.entries)
    while entries and entries[-1].predicted:
        entries.pop()
    return Tube(track.object_id, entries)


def step_tracks(state: Tracker, detections: Sequence[Detection], frame: Frame) -> list[Tube]:
    """Advance all tracks by one frame; returns tubes finalized at this frame (by object_id)."""
    if state.last_index is not None and frame.index <= state.last_index:
        raise TrackerError(f"frame {frame.index} is not after frame {state.last_index}")
    state.last_index = frame.index
    width, height = frame.width, frame.height

    live = state.tracks
    preds = [track_prediction(t) for t in live]
    assign = associate(live, detections, state.config.gate_min_px, preds)

    for ti, di in assign.matches:
        t, d = live[ti], detections[di]
        t.entries.append(_entry(d, frame))
        if t.coast_count:
            # bridge the coasted gap so the history keeps one center per frame
            c0, c1 = np.asarray(t.centers[-1]), np.asarray(d.center)
            k = t.coast_count + 1
            t.centers.extend(tuple(map(float, c0 + (c1 - c0) * j / k)) for j in range(1, k))
        t.centers.append(d.center)
        t.coast_count = 0

    finished: list[Tube] = []
    keep: list[Track] = []
    matched_t = {ti for ti, _ in assign.matches}
    for ti, t in enumerate(live):
        if ti in matched_t:
            keep.append(t)
            continue
        if t.state is TrackState.CANDIDATE or t.coast_count >= state.coast_limit:
            tube = _close(t)
            if tube is not None:
                finished.append(tube)
            continue
        px, py = preds[ti]
        last = t.last_bbox
        bbox = BBox.from_center(px, py, last.w, last.h, width, height)
        patch = frame.pixels[bbox.y:bbox.y + bbox.h, bbox.x:bbox.x + bbox.w].copy()
        mask = np.ones((bbox.h, bbox.w), np.uint8)
        t.entries.append(ObjectFrame(frame.index, frame.timestamp_ms, bbox, patch, mask, predicted=True))
        t.coast_count += 1
        keep.append(t)

    for di in assign.unmatched_detections:
        d = detections[di]
        t = Track(state.next_serial, centers=[d.center], entries=[_entry(d, frame)])
        state.next_serial += 1
        keep.append(t)

    # promote in creation order so ids follow confirmation time, then track age
    for t in sorted(keep, key=lambda t: t.serial):
        if t.state is TrackState.CANDIDATE and len(t.entries) >= state.n_confirm:
            t.state = TrackState.CONFIRMED
            t.object_id = state.next_id
            state.next_id += 1
    state.tracks = keep
    finished.sort(key=lambda tb: tb.object_id)
    return finished
