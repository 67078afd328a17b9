"""Online, collision-free FIFO tube rearrangement and synopsis rendering.

Tubes enter a fixed-size cluster in object_id order. Each synopsis frame
offers every cluster tube's next unplaced object frame in ascending object_id
order and accepts it unless its box overlaps (positive area) a box already
accepted for that frame. Finished tubes leave the cluster and the next pending
tubes take their place. Placed boxes keep their original position.
"""
from __future__ import annotations

import collections
import json
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

import cv2
import numpy as np

from .bgmodel import BackgroundModel
from .config import Config
from .regions import BBox, clean_mask, extract_regions
from .tracker import ObjectFrame, Tracker, Tube
from .video_io import Frame, FrameSource, StreamMeta, write_sequence


class SynopsisError(Exception):
    pass


def format_clock(ms: int) -> str:
    s = ms // 1000
    return f"{s // 3600:02d}:{(s // 60) % 60:02d}:{s % 60:02d}"


@dataclass
class Placement:
    object_id: int
    source: ObjectFrame = field(repr=False)
    synopsis_frame_index: int

    @property
    def bbox(self) -> BBox:
        return self.source.bbox

    @property
    def label_text(self) -> str:
        return format_clock(self.source.original_timestamp_ms)

    def to_json(self) -> dict:
        return {"object_id": self.object_id,
                "orig_frame": self.source.original_frame_index,
                "t_orig_ms": self.source.original_timestamp_ms,
                "bbox": self.bbox.as_list()}


def collides(a, b) -> bool:
    """True iff the two boxes (or placements) overlap with positive area."""
    a = a.bbox if isinstance(a, Placement) else a
    b = b.bbox if isinstance(b, Placement) else b
    return a.intersection_area(b) > 0


@dataclass
class _Slot:
    tube: Tube
    cursor: int = 0


class SchedulerState:
    def __init__(self, cluster_size: int):
        if cluster_size < 1:
            raise SynopsisError("cluster_size must be >= 1")
        self.cluster_size = cluster_size
        self.cluster: list[_Slot] = []
        self.pending: collections.deque[Tube] = collections.deque()
        self.synopsis_frame_index = 0
        self._last_id = 0

    def push(self, tube: Tube) -> None:
        if tube.object_id <= self._last_id:
            raise SynopsisError(f"tube {tube.object_id} arrived after tube {self._last_id}")
        if not tube.frames:
            raise SynopsisError(f"tube {tube.object_id} is empty")
        self._last_id = tube.object_id
        self.pending.append(tube)

    def refill(self) -> None:
        while len(self.cluster) < self.cluster_size and self.pending:
            self.cluster.append(_Slot(self.pending.popleft()))

    @property
    def can_fill(self) -> bool:
        return len(self.cluster) + len(self.pending) >= self.cluster_size

    @property
    def idle(self) -> bool:
        return not self.cluster and not self.pending

    def cursors(self) -> dict[int, int]:
        return {s.tube.object_id: s.cursor for s in self.cluster}


def scheduler_step(state: SchedulerState) -> list[Placement]:
    """Build one synopsis frame; returns its placements (empty when nothing is left)."""
    state.refill()
    if not state.cluster:
        return []
    k = state.synopsis_frame_index
    accepted: list[Placement] = []
    for slot in state.cluster:  # ascending object_id by construction
        of = slot.tube.frames[slot.cursor]
        if any(of.bbox.intersection_area(p.bbox) > 0 for p in accepted):
            continue
        accepted.append(Placement(slot.tube.object_id, of, k))
        slot.cursor += 1
    state.cluster = [s for s in state.cluster if s.cursor < len(s.tube.frames)]
    state.refill()
    state.synopsis_frame_index += 1
    return accepted


def schedule(tubes: Iterable[Tube], cluster_size: int) -> list[list[Placement]]:
    """Offline convenience: place a complete, id-ordered tube set."""
    state = SchedulerState(cluster_size)
    for t in sorted(tubes, key=lambda t: t.object_id):
        state.push(t)
    out = []
    while True:
        placed = scheduler_step(state)
        if not placed:
            return out
        out.append(placed)


def frame_reduction(tsv: int, tov: int) -> float:
    if tov <= 0:
        raise SynopsisError("original video has no frames")
    if tsv < 0:
        raise SynopsisError("negative synopsis length")
    return tsv / tov


def _label_origin(bbox: BBox, text: str, width: int, height: int) -> tuple[int, int]:
    (tw, th), base = cv2.getTextSize(text, cv2.FONT_HERSHEY_PLAIN, 0.7, 1)
    x = min(max(bbox.x, 0), max(width - tw, 0))
    y = bbox.y - 2
    if y - th < 0:
        y = min(bbox.y + bbox.h + th + 2, height - 1)
    return x, y


def render_synopsis_frame(placements: Iterable[Placement], background: Frame,
                          labels: bool = True, index: int = 0, timestamp_ms: int = 0) -> Frame:
    """Paste each placement's patch through its mask at the original box, then draw time labels."""
    out = np.array(background.pixels, copy=True)
    H, W = out.shape[:2]
    placements = list(placements)
    for p in placements:
        b = p.bbox
        if not b.inside(W, H):
            raise SynopsisError(f"box {b} outside {W}x{H} background")
        src = p.source
        if src.image_patch is None:
            continue
        patch = src.image_patch
        if patch.shape[2] != out.shape[2]:
            raise SynopsisError("patch and background channel counts differ")
        mask = np.ones((b.h, b.w), bool) if src.mask_patch is None else src.mask_patch.astype(bool)
        region = out[b.y:b.y + b.h, b.x:b.x + b.w]
        region[mask] = patch[mask]
    if labels:
        color = (255,) * out.shape[2]
        for p in placements:
            org = _label_origin(p.bbox, p.label_text, W, H)
            cv2.putText(out, p.label_text, org, cv2.FONT_HERSHEY_PLAIN, 0.7, color, 1, cv2.LINE_8)
    return Frame(index, timestamp_ms, out)


# --- end-to-end pipeline ------------------------------------------------------

class TubeProducer:
    """Background subtraction -> regions -> tracking, releasing tubes in object_id order."""

    def __init__(self, source: FrameSource, config: Config):
        self.source = source
        self.config = config
        self.model = BackgroundModel(config.bg)
        self.tracker = Tracker(source.meta.fps, config.track)
        self.snapshots: dict[int, Frame] = {}
        self.frames_seen = 0
        self.shape = None
        self._held: dict[int, Tube] = {}
        self._next_id = 1

    def _release(self, tubes: Iterable[Tube]) -> list[Tube]:
        for t in tubes:
            self._held[t.object_id] = t
        out = []
        while self._next_id in self._held:
            out.append(self._held.pop(self._next_id))
            self._next_id += 1
        return out

    def __iter__(self) -> Iterator[list[Tube]]:
        interval = self.config.synopsis.bg_snapshot_interval
        rcfg = self.config.regions
        for frame in self.source:
            if self.shape is None:
                self.shape = frame.pixels.shape
            labels = self.model.apply(frame)
            if frame.index % interval == 0:
                self.snapshots[frame.index // interval] = self.model.snapshot(frame.index, frame.timestamp_ms)
            mask = clean_mask(labels.foreground(), rcfg)
            dets = extract_regions(mask, frame, rcfg)
            self.frames_seen += 1
            yield self._release(self.tracker.step(dets, frame))
        yield self._release(self.tracker.flush())
        if self._held:
            raise SynopsisError(f"tube ids {sorted(self._held)} never became contiguous")


@dataclass
class SynopsisManifest:
    frames: list[list[Placement]]
    tov: int
    cluster_size: int
    background_ids: list[int]
    build_seconds: float = 0.0

    @property
    def tsv(self) -> int:
        return len(self.frames)

    @property
    def fr(self) -> float:
        return frame_reduction(self.tsv, self.tov) if self.tov else 0.0

    @property
    def fps_build(self) -> float:
        return self.tov / self.build_seconds if self.build_seconds > 0 else float("inf")

    def placements(self) -> Iterator[Placement]:
        for f in self.frames:
            yield from f

    def to_json(self) -> dict:
        # wall-clock figures stay out so identical runs give identical files
        return {
            "summary": {"tov": self.tov, "tsv": self.tsv, "fr": self.fr, "cs": self.cluster_size},
            "frames": [{"index": i, "background": bg, "placements": [p.to_json() for p in f]}
                       for i, (f, bg) in enumerate(zip(self.frames, self.background_ids))],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"), sort_keys=True)

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())


@dataclass
class SynopsisResult:
    frames: list[Frame]
    manifest: SynopsisManifest
    tubes: list[Tube]
    meta: StreamMeta


def _run_scheduler(state: SchedulerState, get_tubes: Callable[[bool], Optional[list[Tube]]],
                   emit: Callable[[list[Placement]], None]) -> None:
    """Drive the scheduler; ``get_tubes(block)`` returns a batch, [] if none ready, None at end."""
    done = False
    while True:
        while not done:
            batch = get_tubes(not state.can_fill)
            if batch is None:
                done = True
                break
            for t in batch:
                state.push(t)
            if state.can_fill and not batch:
                break
        if done and state.idle:
            return
        # only step with a full cluster (or at end of input) so timing cannot change the result
        if not state.can_fill and not done:
            continue
        placed = scheduler_step(state)
        if placed:
            emit(placed)


def run_synopsis(source: FrameSource, config: Optional[Config] = None, *,
                 sink=None, keep_frames: bool = True) -> SynopsisResult:
    """Full pipeline; tube generation and rearrangement overlap when ``synopsis.concurrent``."""
    cfg = (config or Config()).validate()
    scfg = cfg.synopsis
    t0 = time.perf_counter()
    producer = TubeProducer(source, cfg)
    state = SchedulerState(scfg.cluster_size)
    placed_frames: list[list[Placement]] = []
    all_tubes: list[Tube] = []

    if scfg.concurrent:
        q: queue.Queue = queue.Queue()
        err: list[BaseException] = []

        def work():
            try:
                for batch in producer:
                    if batch:
                        q.put(batch)
            except BaseException as e:  # surfaced in the consumer thread
                err.append(e)
            finally:
                q.put(None)

        th = threading.Thread(target=work, name="tube-producer", daemon=True)
        th.start()

        def get_tubes(block):
            try:
                batch = q.get(block=block)
            except queue.Empty:
                return []
            if batch is not None:
                all_tubes.extend(batch)
            return batch

        _run_scheduler(state, get_tubes, placed_frames.append)
        th.join()
        if err:
            raise err[0]
    else:
        for batch in producer:
            all_tubes.extend(batch)
            for t in batch:
                state.push(t)
        while True:
            placed = scheduler_step(state)
            if not placed:
                break
            placed_frames.append(placed)

    interval = scfg.bg_snapshot_interval
    bg_ids = [min(p.source.original_frame_index for p in f) // interval for f in placed_frames]

    def render(i):
        f, bg = placed_frames[i], producer.snapshots[bg_ids[i]]
        return render_synopsis_frame(f, bg, scfg.labels, i,
                                     int(np.floor(i * 1000.0 / source.meta.fps + 0.5)))

    idx = range(len(placed_frames))
    if scfg.render_workers > 1:
        pool = ThreadPoolExecutor(scfg.render_workers)
        rendered: Iterable[Frame] = pool.map(render, idx)
    else:
        pool = None
        rendered = map(render, idx)
    H, W = producer.shape[:2] if producer.shape else (source.meta.height, source.meta.width)
    out_meta = StreamMeta(source.meta.fps, len(placed_frames), f"{source.meta.source_id}:synopsis", W, H)
    frames: list[Frame] = []
    try:
        if sink is not None:
            def tee():
                for fr in rendered:
                    if keep_frames:
                        frames.append(fr)
                    yield fr
            write_sequence(sink, tee(), out_meta)
        elif keep_frames:
            frames = list(rendered)
    finally:
        if pool is not None:
            pool.shutdown()
    elapsed = time.perf_counter() - t0
    manifest = SynopsisManifest(placed_frames, producer.frames_seen, scfg.cluster_size, bg_ids, elapsed)
    return SynopsisResult(frames, manifest, all_tubes, out_meta)
