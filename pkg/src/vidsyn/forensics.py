"""Inter-frame forgery scan, camera-tamper and trespass monitors, busyness anomaly detection."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .bgmodel import LabelMask
from .config import BusynessConfig, FlowConfig, ForgeryConfig, TamperConfig, TrespassConfig
from .flow import block_histograms, corner_features, dense_flow, flow_stats
from .regions import foreground_area_ratio
from .video_io import to_luma

FORGERY = "FORGERY"
CAMERA_TAMPER = "CAMERA_TAMPER"
ANOMALY = "ANOMALY"
TRESPASS = "TRESPASS"


class ForensicsError(Exception):
    pass


@dataclass
class AlarmEvent:
    kind: str
    start_frame: int
    end_frame: int          # inclusive
    score: float
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"kind": self.kind, "frames": [self.start_frame, self.end_frame],
                "score": round(float(self.score), 6), "detail": self.detail}

    def overlaps(self, a: int, b: int) -> bool:
        """True if the inclusive range [a, b] meets this event's range."""
        return self.start_frame <= b and a <= self.end_frame


def write_events(events: Iterable[AlarmEvent], path) -> int:
    n = 0
    with open(path, "w") as fh:
        for e in events:
            fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")
            n += 1
    return n


# --- inter-frame forgery --------------------------------------------------------

@dataclass
class VariationSequence:
    variance: np.ndarray   # V[t]: variance of flow magnitudes for transition t -> t+1
    total: np.ndarray      # F[t]: summed flow magnitude
    mean_abs_diff: np.ndarray  # mean |frame[t+1] - frame[t]|

    def __len__(self) -> int:
        return len(self.variance)


def variation_sequence(source: Iterable, flow_config: Optional[FlowConfig] = None) -> VariationSequence:
    prev = None
    V, F, D = [], [], []
    for frame in source:
        g = to_luma(frame).pixels[:, :, 0]
        if prev is not None:
            if g.shape != prev.shape:
                raise ForensicsError("frame size changed mid-stream")
            total, var = flow_stats(dense_flow(prev, g, flow_config))
            V.append(var)
            F.append(total)
            D.append(float(np.abs(g.astype(np.int16) - prev.astype(np.int16)).mean()))
        prev = g
    return VariationSequence(np.array(V), np.array(F), np.array(D))


def robust_zscores(x: np.ndarray, window: int, min_rel_scale: float = 0.0, min_scale: float = 0.0) -> np.ndarray:
    """|x - median| / (1.4826 MAD) over a centered window clipped to the sequence.

    The scale never drops below ``min_rel_scale * |median|`` or ``min_scale`` so a
    nearly constant signal does not turn sensor noise into huge scores.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    half = window // 2
    z = np.zeros(n)
    for t in range(n):
        w = x[max(0, t - half):min(n, t + half + 1)]
        med = np.median(w)
        mad = np.median(np.abs(w - med))
        scale = max(1.4826 * mad, min_rel_scale * abs(med), min_scale, 1e-9)
        z[t] = abs(x[t] - med) / scale
    return z


def _runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) index runs of True values."""
    out, start = [], None
    for i, f in enumerate(flags):
        if f and start is None:
            start = i
        elif not f and start is not None:
            out.append((start, i - 1))
            start = None
    if start is not None:
        out.append((start, len(flags) - 1))
    return out


def repeated_windows(v: np.ndarray, length: int, rho: float, rel_tol: float = 0.05) -> list[tuple[int, int]]:
    """(i, j) window starts, j >= i + length, whose windows of ``v`` match.

    A match needs Pearson correlation above ``rho`` plus equal level and spread
    within ``rel_tol``, which is what a re-inserted copy of real frames produces.
    """
    v = np.asarray(v, dtype=np.float64)
    n = len(v) - length + 1
    if n <= length:
        return []
    win = np.lib.stride_tricks.sliding_window_view(v, length)
    mu = win.mean(axis=1)
    sd = win.std(axis=1)
    ok = sd > 1e-9 * max(1.0, float(np.abs(v).max()))
    zs = np.where(ok[:, None], (win - mu[:, None]) / np.where(ok, sd, 1.0)[:, None], 0.0)
    hits = []
    chunk = 256
    for a in range(0, n, chunk):
        b = min(n, a + chunk)
        corr = zs[a:b] @ zs.T / length
        ii, jj = np.nonzero(corr > rho)
        for i, j in zip(ii + a, jj):
            if j < i + length or not (ok[i] and ok[j]):
                continue
            lvl = max(abs(mu[i]), sd[i], 1e-12)
            if abs(mu[i] - mu[j]) <= rel_tol * lvl and abs(sd[i] - sd[j]) <= rel_tol * sd[i]:
                hits.append((int(i), int(j)))
    return hits


def forgery_scan(source, config: Optional[ForgeryConfig] = None,
                 flow_config: Optional[FlowConfig] = None,
                 seq: Optional[VariationSequence] = None) -> tuple[list[AlarmEvent], VariationSequence]:
    """Flag discontinuities (insert/delete) and duplicated runs in the motion sequence.

    Returns the events (sorted by start frame) and the computed sequences.
    """
    cfg = config or ForgeryConfig()
    if seq is None:
        n = len(source) if hasattr(source, "__len__") else None
        if n is not None and n < cfg.window + 2:
            raise ForensicsError(f"stream too short: {n} frames, need {cfg.window + 2}")
        seq = variation_sequence(source, flow_config)
    if len(seq) + 1 < cfg.window + 2:
        raise ForensicsError(f"stream too short: {len(seq) + 1} frames, need {cfg.window + 2}")

    # V drives the alarm; F is scored the same way and reported alongside
    zv = robust_zscores(seq.variance, cfg.window, cfg.min_rel_scale, cfg.var_floor)
    zf = robust_zscores(seq.total, cfg.window, cfg.min_rel_scale)
    events = []
    for a, b in _runs(zv > cfg.k):
        t = a + int(np.argmax(zv[a:b + 1]))
        events.append(AlarmEvent(FORGERY, a, b + 1, float(zv[t]),
                                 {"type": "discontinuity", "transition": t,
                                  "z_variance": round(float(zv[t]), 4), "z_total": round(float(zf[t]), 4),
                                  "variance": float(seq.variance[t]), "total": float(seq.total[t])}))

    for a, b in _runs(seq.mean_abs_diff < cfg.dup_eps):
        if b - a + 1 >= cfg.min_dup:
            events.append(AlarmEvent(FORGERY, a, b + 1, float(b - a + 1),
                                     {"type": "frozen", "transitions": b - a + 1}))

    L = cfg.corr_len
    by_lag: dict[int, list[int]] = {}
    for i, j in repeated_windows(seq.variance, L, cfg.rho):
        by_lag.setdefault(j - i, []).append(i)
    for lag, starts in sorted(by_lag.items()):
        starts = sorted(set(starts))
        flags = np.zeros(starts[-1] + 1, bool)
        flags[starts] = True
        for a, b in _runs(flags):
            if b - a + 1 < cfg.min_dup:
                continue  # isolated look-alike windows happen by chance
            # windows i..b+L-1 of transitions repeat at +lag; frames span one more
            events.append(AlarmEvent(FORGERY, a + lag, b + lag + L, float(b - a + L),
                                     {"type": "duplication", "source_frames": [a, b + L], "lag": lag}))
    events.sort(key=lambda e: (e.start_frame, e.end_frame, e.detail.get("type", "")))
    return events, seq


# --- camera tamper ----------------------------------------------------------------

def _foreground(mask) -> np.ndarray:
    if isinstance(mask, LabelMask):
        return mask.foreground()
    return (np.asarray(mask) > 0).astype(np.uint8)


class CameraTamperMonitor:
    """Alarms once the filled foreground area exceeds ``tau`` of the frame for ``persistence`` frames."""

    def __init__(self, config: Optional[TamperConfig] = None, **overrides):
        cfg = config or TamperConfig()
        if overrides:
            cfg = TamperConfig(**{**cfg.__dict__, **overrides})
        cfg.validate()
        self.config = cfg
        self.run = 0
        self.run_start = 0
        self.frame_index = -1
        self.last_ratio = 0.0

    def step(self, mask, frame_index: Optional[int] = None) -> Optional[AlarmEvent]:
        return camera_tamper_step(mask, self, frame_index)


def camera_tamper_step(mask, state: CameraTamperMonitor, frame_index: Optional[int] = None) -> Optional[AlarmEvent]:
    state.frame_index = state.frame_index + 1 if frame_index is None else frame_index
    ratio = foreground_area_ratio(_foreground(mask))
    state.last_ratio = ratio
    if ratio > state.config.tau:
        if state.run == 0:
            state.run_start = state.frame_index
        state.run += 1
        if state.run == state.config.persistence:
            return AlarmEvent(CAMERA_TAMPER, state.run_start, state.frame_index, ratio,
                              {"ratio": round(ratio, 6)})
    else:
        state.run = 0
    return None


# --- trespass ---------------------------------------------------------------------

def polygon_mask(points: Sequence[Sequence[float]], width: int, height: int) -> np.ndarray:
    """Even-odd point-in-polygon test at every integer pixel coordinate."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ForensicsError("polygon needs at least 3 vertices")
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    inside = np.zeros((height, width), bool)
    n = len(pts)
    for k in range(n):
        x1, y1 = pts[k]
        x2, y2 = pts[(k + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > ys) != (y2 > ys)
        xint = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (xs < xint)
    return inside


@dataclass
class Zone:
    zone_id: str
    points: list

    @classmethod
    def from_json(cls, doc) -> list["Zone"]:
        try:
            return [cls(str(z["id"]), [list(map(float, p)) for p in z["points"]]) for z in doc]
        except (KeyError, TypeError, ValueError) as e:
            raise ForensicsError(f"bad polygon config: {e}") from None


class TrespassMonitor:
    def __init__(self, zones: Sequence, config: Optional[TrespassConfig] = None, **overrides):
        cfg = config or TrespassConfig()
        if overrides:
            cfg = TrespassConfig(**{**cfg.__dict__, **overrides})
        cfg.validate()
        self.config = cfg
        self.zones = [z if isinstance(z, Zone) else Zone(str(i), list(z)) for i, z in enumerate(zones)]
        for z in self.zones:
            if len(z.points) < 3:
                raise ForensicsError(f"polygon {z.zone_id} has fewer than 3 vertices")
        self._masks: dict[tuple[int, int], list[np.ndarray]] = {}
        self.runs = [0] * len(self.zones)
        self.starts = [0] * len(self.zones)
        self.frame_index = -1
        self.last_fractions: list[float] = []

    def masks(self, width: int, height: int) -> list[np.ndarray]:
        key = (width, height)
        if key not in self._masks:
            self._masks[key] = [polygon_mask(z.points, width, height) for z in self.zones]
        return self._masks[key]

    def step(self, mask, frame_index: Optional[int] = None) -> list[AlarmEvent]:
        return trespass_step(mask, self, frame_index)


def trespass_step(mask, state: TrespassMonitor, frame_index: Optional[int] = None) -> list[AlarmEvent]:
    fg = _foreground(mask).astype(bool)
    H, W = fg.shape
    state.frame_index = state.frame_index + 1 if frame_index is None else frame_index
    events, fractions = [], []
    for k, (zone, inside) in enumerate(zip(state.zones, state.masks(W, H))):
        n_in = int(inside.sum())
        frac = float((fg & inside).sum()) / n_in if n_in else 0.0
        fractions.append(frac)
        if frac > state.config.area_frac:
            if state.runs[k] == 0:
                state.starts[k] = state.frame_index
            state.runs[k] += 1
            if state.runs[k] == state.config.persistence:
                events.append(AlarmEvent(TRESPASS, state.starts[k], state.frame_index, frac,
                                         {"polygon": zone.zone_id, "fraction": round(frac, 6)}))
        else:
            state.runs[k] = 0
    state.last_fractions = fractions
    return events


# --- busyness anomaly ------------------------------------------------------------

@dataclass
class BusynessMatrix:
    data: np.ndarray     # (rows, cols, bins)
    width: int
    height: int
    block: int = 8
    window: int = 5

    @property
    def bins(self) -> int:
        return self.data.shape[2]

    def geometry(self) -> dict:
        return {"width": self.width, "height": self.height, "block": self.block,
                "rows": int(self.data.shape[0]), "cols": int(self.data.shape[1]), "window": self.window}

    def to_json(self) -> dict:
        return {"geometry": self.geometry(), "bins": self.bins, "data": self.data.tolist()}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def from_json(cls, doc) -> "BusynessMatrix":
        try:
            g = doc["geometry"]
            data = np.asarray(doc["data"], dtype=np.float64)
            if data.ndim != 3 or data.shape != (g["rows"], g["cols"], doc["bins"]):
                raise ForensicsError("busyness data does not match its geometry")
            return cls(data, int(g["width"]), int(g["height"]), int(g.get("block", 8)), int(g.get("window", 5)))
        except (KeyError, TypeError) as e:
            raise ForensicsError(f"bad busyness matrix: {e}") from None

    @classmethod
    def load(cls, path) -> "BusynessMatrix":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise ForensicsError(f"cannot read busyness matrix {path}: {e}") from None


def frame_histograms(source: Iterable, config: Optional[BusynessConfig] = None,
                     flow_config: Optional[FlowConfig] = None) -> tuple[list[np.ndarray], tuple[int, int]]:
    """Per-transition block orientation histograms and the frame (width, height)."""
    cfg = config or BusynessConfig()
    fcfg = flow_config or FlowConfig()
    prev, hists, size = None, [], None
    for frame in source:
        g = to_luma(frame).pixels[:, :, 0]
        if prev is None:
            size = (g.shape[1], g.shape[0])
        elif g.shape != prev.shape:
            raise ForensicsError("frame size changed mid-stream")
        else:
            fld = dense_flow(prev, g, fcfg)
            pts = corner_features(prev, cfg.max_corners) if cfg.features == "corners" else None
            h = block_histograms(fld, pts, n_bins=fcfg.bins, block=fcfg.block, min_magnitude=cfg.min_magnitude)
            hists.append(h.bins)
        prev = g
    return hists, size


def feature_matrices(hists: Sequence[np.ndarray], window: int = 5) -> np.ndarray:
    """Element-wise sums over every run of ``window`` consecutive histograms."""
    h = np.asarray(hists, dtype=np.float64)
    if len(h) < window:
        return np.zeros((0,) + h.shape[1:])
    c = np.concatenate([np.zeros((1,) + h.shape[1:]), np.cumsum(h, axis=0)])
    return c[window:] - c[:-window]


def busyness_from_histograms(hists: Sequence[np.ndarray], size: tuple[int, int], window: int = 5,
                             block: int = 8) -> BusynessMatrix:
    feats = feature_matrices(hists, window)
    if len(feats) == 0:
        raise ForensicsError(f"need at least {window + 1} frames to train")
    return BusynessMatrix(feats.max(axis=0), size[0], size[1], block, window)


def busyness_train(source, config: Optional[BusynessConfig] = None,
                   flow_config: Optional[FlowConfig] = None) -> BusynessMatrix:
    cfg = config or BusynessConfig()
    fcfg = flow_config or FlowConfig()
    hists, size = frame_histograms(source, cfg, fcfg)
    if len(hists) < cfg.window:
        raise ForensicsError(f"training stream too short: need at least {cfg.window + 1} frames")
    return busyness_from_histograms(hists, size, cfg.window, fcfg.block)


def busyness_events(hists: Sequence[np.ndarray], matrix: BusynessMatrix, margin: float = 0.1,
                    hits: int = 2) -> list[AlarmEvent]:
    feats = feature_matrices(hists, matrix.window)
    if len(feats) and feats.shape[1:] != matrix.data.shape:
        raise ForensicsError(f"histogram grid {feats.shape[1:]} does not match matrix {matrix.data.shape}")
    limit = matrix.data * (1.0 + margin)
    rows, cols = matrix.data.shape[:2]
    run = np.zeros((rows, cols), int)
    start = np.zeros((rows, cols), int)
    events = []
    for k, fm in enumerate(feats):
        excess = fm - limit
        bad = (excess > 0).any(axis=2)
        start[bad & (run == 0)] = k
        run = np.where(bad, run + 1, 0)
        for r, c in zip(*np.nonzero(run == hits)):
            b = int(np.argmax(excess[r, c]))
            trained = float(matrix.data[r, c, b])
            score = float(fm[r, c, b] / trained) if trained > 0 else float("inf")
            events.append(AlarmEvent(ANOMALY, int(start[r, c]), k + matrix.window, score,
                                     {"block": [int(r), int(c)], "bin": b,
                                      "value": round(float(fm[r, c, b]), 6), "trained": round(trained, 6)}))
    return events


def busyness_test(source, matrix: BusynessMatrix, config: Optional[BusynessConfig] = None,
                  flow_config: Optional[FlowConfig] = None) -> list[AlarmEvent]:
    cfg = config or BusynessConfig()
    fcfg = flow_config or FlowConfig()
    meta = getattr(source, "meta", None)
    if meta is not None and meta.width and meta.height and (meta.width, meta.height) != (matrix.width, matrix.height):
        raise ForensicsError(f"stream is {meta.width}x{meta.height}, matrix expects {matrix.width}x{matrix.height}")
    hists, size = frame_histograms(source, cfg, fcfg)
    if size is not None and size != (matrix.width, matrix.height):
        raise ForensicsError(f"stream is {size[0]}x{size[1]}, matrix expects {matrix.width}x{matrix.height}")
    return busyness_events(hists, matrix, cfg.margin, cfg.hits)
