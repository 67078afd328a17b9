"""Deterministic synthetic scenes with exact ground truth.

Scenes are a (possibly panning) background plus textured rectangular agents on
straight constant-velocity paths. Edits (delete / duplicate / insert) are
applied after rendering so the edit log describes real tampering.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .evaluation import AnnotationSet, GtBox
from .regions import BBox
from .video_io import Frame, MemorySource, StreamMeta, timestamp_ms


class ScriptError(ValueError):
    pass


@dataclass
class Background:
    kind: str = "textured"          # "constant" | "textured"
    value: int = 100                # constant gray level / textured mean
    contrast: int = 40              # textured: half-range around value
    noise: float = 2.0              # per-pixel Gaussian sigma
    pan: tuple[int, int] = (0, 0)   # integer px/frame viewport motion
    scale: int = 5                  # textured: coarse grid cell size


@dataclass
class Agent:
    size: tuple[int, int]
    start: tuple[float, float]
    velocity: tuple[float, float]
    start_frame: int = 0
    end_frame: Optional[int] = None  # exclusive; None = until the end
    color: Optional[tuple[int, int, int]] = None
    texture: int = 30                # half-range of per-agent texture; 0 = plain fill


@dataclass
class Edit:
    kind: str                       # "delete" | "duplicate" | "insert"
    start: int = 0                  # delete/duplicate: source range [start, stop)
    stop: int = 0
    at: int = 0                     # duplicate/insert: insertion position in the current sequence
    count: int = 0                  # insert: number of frames
    fill: int = 0                   # insert: constant gray level


@dataclass
class SceneScript:
    frames: int
    fps: float = 18.0
    width: int = 320
    height: int = 240
    channels: int = 3
    background: Background = field(default_factory=Background)
    agents: list[Agent] = field(default_factory=list)
    edits: list[Edit] = field(default_factory=list)
    seed: int = 0
    noise_seed: Optional[int] = None  # sensor-noise stream; None = seed

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "SceneScript":
        try:
            doc = dict(doc)
            bg = Background(**doc.pop("background", {}))
            bg.pan = tuple(bg.pan)
            agents = [Agent(**a) for a in doc.pop("agents", [])]
            for a in agents:
                a.size, a.start, a.velocity = tuple(a.size), tuple(a.start), tuple(a.velocity)
                if a.color is not None:
                    a.color = tuple(a.color)
            edits = [Edit(**e) for e in doc.pop("edits", [])]
            return cls(background=bg, agents=agents, edits=edits, **doc)
        except TypeError as e:
            raise ScriptError(f"bad scene script: {e}") from None

    @classmethod
    def load(cls, path) -> "SceneScript":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class EditRecord:
    kind: str
    detail: dict
    output_range: tuple[int, int]   # affected indices in the edited sequence, [a, b)


@dataclass
class GeneratedScene:
    source: MemorySource
    annotations: AnnotationSet
    gt_tubes: dict[int, list[tuple[int, BBox]]]
    edit_log: list[EditRecord]
    original_index: list[Optional[int]]  # edited position -> rendered frame (None = inserted)


def agent_box(agent: Agent, f: int) -> Optional[BBox]:
    end = agent.end_frame
    if f < agent.start_frame or (end is not None and f >= end):
        return None
    t = f - agent.start_frame
    x = int(np.floor(agent.start[0] + agent.velocity[0] * t + 0.5))
    y = int(np.floor(agent.start[1] + agent.velocity[1] * t + 0.5))
    return BBox(x, y, int(agent.size[0]), int(agent.size[1]))


def validate(script: SceneScript) -> None:
    if script.frames < 0:
        raise ScriptError("frame count must be >= 0")
    if script.fps <= 0:
        raise ScriptError("fps must be positive")
    if script.width < 1 or script.height < 1:
        raise ScriptError("frame size must be positive")
    if script.channels not in (1, 3):
        raise ScriptError("channels must be 1 or 3")
    if script.background.kind not in ("constant", "textured"):
        raise ScriptError(f"unknown background kind {script.background.kind!r}")
    for k, a in enumerate(script.agents):
        if a.size[0] < 1 or a.size[1] < 1:
            raise ScriptError(f"agent {k}: size must be positive")
        end = script.frames if a.end_frame is None else min(a.end_frame, script.frames)
        for f in range(max(a.start_frame, 0), end):
            if not agent_box(a, f).inside(script.width, script.height):
                raise ScriptError(f"agent {k} leaves the frame at frame {f}")
    n = script.frames
    for e in script.edits:
        if e.kind == "delete":
            if not 0 <= e.start < e.stop <= n:
                raise ScriptError(f"invalid delete range [{e.start}, {e.stop}) for {n} frames")
            n -= e.stop - e.start
        elif e.kind == "duplicate":
            if not (0 <= e.start < e.stop <= n and 0 <= e.at <= n):
                raise ScriptError(f"invalid duplicate edit {e}")
            n += e.stop - e.start
        elif e.kind == "insert":
            if not (0 <= e.at <= n and e.count >= 1):
                raise ScriptError(f"invalid insert edit {e}")
            n += e.count
        else:
            raise ScriptError(f"unknown edit kind {e.kind!r}")


def _texture(rng: np.random.Generator, h: int, w: int, channels: int, mean: float, half: float, scale: int):
    # one shared luminance pattern plus a weaker per-channel tint keeps luma contrast high
    # interpolating a 3x3 tiling and keeping the center makes the result wrap seamlessly
    gh, gw = max(2, -(-h // scale)), max(2, -(-w // scale))
    coarse = rng.uniform(-1, 1, (gh, gw)).astype(np.float32)
    tint = rng.uniform(-0.25, 0.25, (gh, gw, channels)).astype(np.float32)
    coarse = coarse[:, :, None] + (tint if channels > 1 else 0.0)
    big = cv2.resize(np.tile(coarse, (3, 3, 1)), (3 * gw * scale, 3 * gh * scale),
                     interpolation=cv2.INTER_CUBIC)
    if big.ndim == 2:
        big = big[:, :, None]
    fine = big[gh * scale:2 * gh * scale, gw * scale:2 * gw * scale]
    return mean + half * np.clip(fine, -1, 1)


def _agent_color(rng: np.random.Generator) -> tuple[int, int, int]:
    c = rng.integers(20, 60, 3)
    c[rng.integers(0, 3)] = rng.integers(200, 240)
    return tuple(int(v) for v in c)


def generate(script: SceneScript) -> GeneratedScene:
    validate(script)
    W, H, C = script.width, script.height, script.channels
    rng = np.random.default_rng(script.seed)
    bg_spec = script.background
    pan = tuple(int(v) for v in bg_spec.pan)
    if bg_spec.kind == "constant":
        tile = np.full((H, W, C), float(bg_spec.value), np.float32)
    else:
        th, tw = (H, W) if pan == (0, 0) else (max(2 * H, 256), max(2 * W, 512))
        tile = _texture(rng, th, tw, C, bg_spec.value, bg_spec.contrast, bg_spec.scale)
        if pan == (0, 0):
            tile = tile[:H, :W]

    sprites = []
    for a in script.agents:
        color = a.color if a.color is not None else _agent_color(rng)
        base = np.array(color[:C] if C == 3 else [np.mean(color)], np.float32)
        sw, sh = a.size
        if a.texture:
            tex = base + rng.uniform(-a.texture, a.texture, (sh, sw, C)).astype(np.float32)
        else:
            tex = np.broadcast_to(base, (sh, sw, C)).astype(np.float32)
        sprites.append(tex)

    frames, annos = [], []
    ys, xs = np.arange(H), np.arange(W)
    for f in range(script.frames):
        if pan == (0, 0):
            img = tile.copy()
        else:
            th, tw = tile.shape[:2]
            img = tile[np.ix_((ys + pan[1] * f) % th, (xs + pan[0] * f) % tw)]
        boxes = []
        for k, (a, tex) in enumerate(zip(script.agents, sprites)):
            b = agent_box(a, f)
            if b is None:
                continue
            img[b.y:b.y + b.h, b.x:b.x + b.w] = tex
            boxes.append(GtBox(k + 1, b))
        if bg_spec.noise > 0:
            nseed = script.seed if script.noise_seed is None else script.noise_seed
            img = img + np.random.default_rng([nseed, f]).normal(0, bg_spec.noise, img.shape)
        frames.append(np.floor(img + 0.5).clip(0, 255).astype(np.uint8))
        annos.append(boxes)

    origin: list[Optional[int]] = list(range(script.frames))
    log: list[EditRecord] = []
    for e in script.edits:
        if e.kind == "delete":
            del frames[e.start:e.stop], annos[e.start:e.stop], origin[e.start:e.stop]
            log.append(EditRecord("delete", {"start": e.start, "stop": e.stop}, (e.start, e.start)))
        elif e.kind == "duplicate":
            n = e.stop - e.start
            frames[e.at:e.at] = [fr.copy() for fr in frames[e.start:e.stop]]
            annos[e.at:e.at] = [list(a) for a in annos[e.start:e.stop]]
            origin[e.at:e.at] = origin[e.start:e.stop]
            log.append(EditRecord("duplicate", {"start": e.start, "stop": e.stop, "at": e.at},
                                  (e.at, e.at + n)))
        else:
            blank = np.full((H, W, C), e.fill, np.uint8)
            frames[e.at:e.at] = [blank.copy() for _ in range(e.count)]
            annos[e.at:e.at] = [[] for _ in range(e.count)]
            origin[e.at:e.at] = [None] * e.count
            log.append(EditRecord("insert", {"at": e.at, "count": e.count, "fill": e.fill},
                                  (e.at, e.at + e.count)))

    fobjs = [Frame(i, timestamp_ms(i, script.fps), px) for i, px in enumerate(frames)]
    meta = StreamMeta(script.fps, len(fobjs), f"synth-{script.seed}", W, H)
    annotations = AnnotationSet({i: boxes for i, boxes in enumerate(annos)})
    gt: dict[int, list[tuple[int, BBox]]] = {}
    for i, boxes in enumerate(annos):
        for g in boxes:
            gt.setdefault(g.gt_id, []).append((i, g.bbox))
    return GeneratedScene(MemorySource(fobjs, meta), annotations, gt, log, origin)


def lane_script(n_agents: int, frames: int, tube_len: int = 50, *, width: int = 320, height: int = 240,
                size: int = 16, speed: float = 5.0, fps: float = 18.0, seed: int = 0,
                spread: bool = True, **bg) -> SceneScript:
    """Agents in disjoint horizontal lanes, each visible for ``tube_len`` frames.

    With ``spread`` the appearances are spaced evenly over the video; otherwise
    they all start after a short warm-up.
    """
    lane = height // max(n_agents, 1)
    if lane < size + 6:
        raise ScriptError("too many lanes for the frame height")
    travel = speed * (tube_len - 1)
    if travel + size > width:
        raise ScriptError("tube too long for the frame width")
    agents = []
    for k in range(n_agents):
        if spread:
            start_f = 20 + int(k * (frames - tube_len - 20) / max(n_agents, 1))
        else:
            start_f = 20
        y = k * lane + (lane - size) // 2
        x0 = (width - travel - size) / 2.0
        agents.append(Agent((size, size), (x0, y), (speed, 0.0), start_f, start_f + tube_len))
    return SceneScript(frames, fps, width, height, 3, Background(**bg), agents, [], seed)


def random_script(rng: np.random.Generator, frames: int = 120, width: int = 160, height: int = 120,
                  n_agents: Optional[int] = None, fps: float = 18.0) -> SceneScript:
    """Random agents with straight paths that stay inside the frame."""
    n = int(rng.integers(1, 7)) if n_agents is None else n_agents
    agents = []
    for _ in range(n):
        w, h = (int(v) for v in rng.integers(10, 28, 2))
        life = int(rng.integers(12, max(13, frames - 20)))
        start_f = int(rng.integers(10, max(11, frames - life)))
        vx, vy = (float(v) for v in rng.uniform(-4, 4, 2))
        # pick a start so the whole path stays inside
        x_lo = max(0.0, -vx * (life - 1))
        x_hi = min(width - w, width - w - vx * (life - 1))
        y_lo = max(0.0, -vy * (life - 1))
        y_hi = min(height - h, height - h - vy * (life - 1))
        if x_hi - 1 <= x_lo or y_hi - 1 <= y_lo:
            vx, vy = 0.5 * vx, 0.5 * vy
            x_lo, x_hi = max(0.0, -vx * (life - 1)), min(width - w, width - w - vx * (life - 1))
            y_lo, y_hi = max(0.0, -vy * (life - 1)), min(height - h, height - h - vy * (life - 1))
        if x_hi - 1 <= x_lo or y_hi - 1 <= y_lo:
            continue
        x0 = float(rng.uniform(x_lo + 0.5, x_hi - 0.5))
        y0 = float(rng.uniform(y_lo + 0.5, y_hi - 0.5))
        agents.append(Agent((w, h), (x0, y0), (vx, vy), start_f, start_f + life))
    return SceneScript(frames, fps, width, height, 3, Background(), agents, [],
                       int(rng.integers(0, 2**31)))
