"""Frame containers and codec-free sequence storage (binary PGM/PPM + stream.json)."""
from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

META_NAME = "stream.json"
_FRAME_RE = re.compile(r"^(\d+)\.(pgm|ppm)$")


class VideoIOError(Exception):
    pass


def timestamp_ms(index: int, fps: float) -> int:
    # round half up; Python's round() is banker's rounding
    return int(math.floor(index * 1000.0 / fps + 0.5))


@dataclass(frozen=True)
class Frame:
    """One decoded image. ``pixels`` is a read-only uint8 array of shape (H, W, C)."""

    index: int
    timestamp_ms: int
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"pixels must be HxW, HxWx1 or HxWx3, got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("frame must be at least 1x1")
        if px.base is not None or px.flags.writeable:
            px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    @property
    def gray(self) -> np.ndarray:
        """2-D luma view (converts if RGB)."""
        return to_luma(self).pixels[:, :, 0]


@dataclass(frozen=True)
class StreamMeta:
    fps: float
    frame_count: int
    source_id: str = ""
    width: Optional[int] = None
    height: Optional[int] = None

    def __post_init__(self):
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.frame_count < 0:
            raise ValueError(f"frame_count must be >= 0, got {self.frame_count}")


class FrameSource:
    """Single-consumer iterator over Frames with attached ``meta``."""

    def __init__(self, meta: StreamMeta):
        self.meta = meta

    def __iter__(self) -> Iterator[Frame]:
        raise NotImplementedError

    def __len__(self) -> int:
        return self.meta.frame_count


class MemorySource(FrameSource):
    def __init__(self, frames: Iterable[Frame], meta: StreamMeta):
        super().__init__(meta)
        self.frames = list(frames)
        if len(self.frames) != meta.frame_count:
            raise VideoIOError(
                f"meta says {meta.frame_count} frames, got {len(self.frames)}")

    def __iter__(self):
        return iter(self.frames)

    @classmethod
    def from_arrays(cls, arrays, fps: float, source_id: str = "memory") -> "MemorySource":
        frames = [Frame(i, timestamp_ms(i, fps), a) for i, a in enumerate(arrays)]
        h = frames[0].height if frames else None
        w = frames[0].width if frames else None
        return cls(frames, StreamMeta(fps, len(frames), source_id, w, h))


def to_luma(frame: Frame) -> Frame:
    if frame.channels == 1:
        return frame
    px = frame.pixels.astype(np.float64)
    y = 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]
    y = np.floor(y + 0.5).clip(0, 255).astype(np.uint8)
    return Frame(frame.index, frame.timestamp_ms, y)


# --- PNM codec -----------------------------------------------------------

def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise VideoIOError("truncated PNM header")
    return buf[start:pos], pos


def decode_pnm(buf: bytes, pos: int = 0) -> tuple[np.ndarray, int]:
    """Decode one binary P5/P6 image starting at ``pos``; returns (array, next_pos)."""
    magic, pos = _read_token(buf, pos)
    if magic not in (b"P5", b"P6"):
        raise VideoIOError(f"unsupported PNM magic {magic!r}")
    try:
        w, pos = _read_token(buf, pos)
        h, pos = _read_token(buf, pos)
        maxval, pos = _read_token(buf, pos)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as e:
        raise VideoIOError(f"bad PNM header: {e}") from None
    if maxval != 255:
        raise VideoIOError(f"only 8-bit PNM supported (maxval {maxval})")
    pos += 1  # single whitespace after maxval
    c = 1 if magic == b"P5" else 3
    size = w * h * c
    if pos + size > len(buf):
        raise VideoIOError("truncated PNM pixel data")
    arr = np.frombuffer(buf, dtype=np.uint8, count=size, offset=pos).reshape(h, w, c)
    return arr, pos + size


def encode_pnm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    h, w, c = pixels.shape
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode() + np.ascontiguousarray(pixels).tobytes()


def _read_meta(path: Path) -> dict:
    try:
        meta = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise VideoIOError(f"unparsable metadata {path}: {e}") from None
    if not isinstance(meta, dict):
        raise VideoIOError(f"metadata {path} is not an object")
    return meta


class DirectorySource(FrameSource):
    def __init__(self, files: list[Path], meta: StreamMeta):
        super().__init__(meta)
        self.files = files

    def __iter__(self):
        shape = None
        for i, f in enumerate(self.files):
            arr, _ = decode_pnm(f.read_bytes())
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise VideoIOError(
                    f"frame {i} ({f.name}) has shape {arr.shape}, expected {shape}")
            yield Frame(i, timestamp_ms(i, self.meta.fps), arr)


class MultiPnmSource(FrameSource):
    """Concatenated PNM images in one file (multi-image netpbm)."""

    def __init__(self, path: Path, meta: StreamMeta):
        super().__init__(meta)
        self.path = path

    def __iter__(self):
        buf = self.path.read_bytes()
        pos, i, shape = 0, 0, None
        while True:
            while pos < len(buf) and buf[pos:pos + 1].isspace():
                pos += 1
            if pos >= len(buf):
                return
            arr, pos = decode_pnm(buf, pos)
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise VideoIOError(f"frame {i} has shape {arr.shape}, expected {shape}")
            yield Frame(i, timestamp_ms(i, self.meta.fps), arr)
            i += 1


def _count_pnm(buf: bytes) -> int:
    pos, n = 0, 0
    while True:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(buf):
            return n
        _, pos = decode_pnm(buf, pos)
        n += 1


def open_sequence(path, meta: Optional[StreamMeta] = None) -> FrameSource:
    """Open a frame directory (``000000.ppm`` ... + ``stream.json``) or a multi-image PNM file.

    Dimension consistency is checked lazily, while iterating.
    """
    path = Path(path)
    if not path.exists():
        raise VideoIOError(f"no such path: {path}")
    if path.is_dir():
        meta_file = path / META_NAME
        raw = _read_meta(meta_file) if meta_file.exists() else {}
        numbered = []
        for f in path.iterdir():
            m = _FRAME_RE.match(f.name)
            if m:
                numbered.append((int(m.group(1)), f))
        numbered.sort()
        files = [f for _, f in numbered]
        if not files and raw.get("count", 0) != 0:
            raise VideoIOError(f"no frames in {path}")
        if not files and not raw:
            raise VideoIOError(f"no frames in {path}")
        if "count" in raw and raw["count"] != len(files):
            raise VideoIOError(
                f"stream.json count {raw['count']} != {len(files)} frame files")
        meta = _resolve_meta(raw, meta, len(files), str(path))
        return DirectorySource(files, meta)
    # single file stream
    buf = path.read_bytes()
    sidecar = path.with_name(META_NAME)
    raw = _read_meta(sidecar) if sidecar.exists() else {}
    n = _count_pnm(buf)
    if n == 0:
        raise VideoIOError(f"no frames in {path}")
    meta = _resolve_meta(raw, meta, n, str(path))
    return MultiPnmSource(path, meta)


def _resolve_meta(raw: dict, override: Optional[StreamMeta], count: int, source_id: str) -> StreamMeta:
    if override is not None:
        return StreamMeta(override.fps, count, override.source_id or source_id,
                          override.width or raw.get("width"), override.height or raw.get("height"))
    if "fps" not in raw:
        raise VideoIOError("fps absent from metadata and not overridden")
    try:
        return StreamMeta(float(raw["fps"]), count, source_id, raw.get("width"), raw.get("height"))
    except (TypeError, ValueError) as e:
        raise VideoIOError(f"unparsable metadata: {e}") from None


def write_sequence(sink_path, frames: Iterable[Frame], meta: StreamMeta) -> int:
    """Write frames as ``NNNNNN.pgm|ppm`` plus ``stream.json``; returns bytes written."""
    sink = Path(sink_path)
    try:
        sink.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise VideoIOError(f"cannot create {sink}: {e}") from None
    total, count = 0, 0
    width, height = meta.width, meta.height
    try:
        for count, fr in enumerate(frames, start=1):
            if width is None:
                width, height = fr.width, fr.height
            if (fr.width, fr.height) != (width, height):
                raise VideoIOError(
                    f"frame {fr.index} is {fr.width}x{fr.height}, expected {width}x{height}")
            ext = "pgm" if fr.channels == 1 else "ppm"
            data = encode_pnm(fr.pixels)
            (sink / f"{count - 1:06d}.{ext}").write_bytes(data)
            total += len(data)
        doc = {"fps": meta.fps, "width": width or 0, "height": height or 0, "count": count}
        (sink / META_NAME).write_text(json.dumps(doc))
    except OSError as e:
        raise VideoIOError(f"write failed in {sink}: {e}") from None
    return total


def sequence_bytes(path) -> int:
    """Raw byte count of an emitted sequence directory (frames only)."""
    return sum(os.path.getsize(f) for f in Path(path).iterdir() if _FRAME_RE.match(f.name))
