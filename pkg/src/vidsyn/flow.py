"""Dense optical flow, corner features and per-block orientation histograms.

The default estimator is coarse-to-fine block matching: each pyramid level
refines the doubled coarser estimate with an exhaustive SAD search of
+-``search_px``; the finest level then takes one Gauss-Newton step on the
block SSD for sub-pixel precision. Ties prefer the smaller total displacement,
so flat regions report zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import cv2
import numpy as np
from numba import njit

from .config import FlowConfig
from .video_io import Frame


class FlowError(Exception):
    pass


@dataclass
class FlowField:
    u: np.ndarray  # (H, W) float32, +x = right
    v: np.ndarray  # (H, W) float32, +y = down

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u.astype(np.float64), self.v.astype(np.float64))

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width), np.float32), np.zeros((height, width), np.float32))


@dataclass
class BlockFlowHistogram:
    bins: np.ndarray   # (rows, cols, n_bins) float64
    block: int = 8

    @property
    def n_bins(self) -> int:
        return self.bins.shape[2]

    @property
    def grid(self) -> tuple[int, int]:
        return self.bins.shape[0], self.bins.shape[1]


def _as_gray(img) -> np.ndarray:
    if isinstance(img, Frame):
        if img.channels != 1:
            raise FlowError("flow expects single-channel (luma) frames")
        img = img.pixels[:, :, 0]
    a = np.asarray(img)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim != 2:
        raise FlowError("flow expects single-channel (luma) frames")
    return a.astype(np.float32)


@njit(cache=True)
def _sad(prev, nxt, y0, x0, bs, dy, dx):
    H, W = prev.shape
    s = 0.0
    for yy in range(y0, min(y0 + bs, H)):
        ty = min(max(yy + dy, 0), H - 1)
        for xx in range(x0, min(x0 + bs, W)):
            tx = min(max(xx + dx, 0), W - 1)
            s += abs(prev[yy, xx] - nxt[ty, tx])
    return s


@njit(cache=True)
def _lk_refine(prev, nxt, y0, x0, bs, dy, dx):
    # one Gauss-Newton step on the block SSD around the integer match
    H, W = prev.shape
    sxx = sxy = syy = sxt = syt = 0.0
    for yy in range(y0, min(y0 + bs, H)):
        ty = min(max(yy + dy, 0), H - 1)
        ty0 = max(ty - 1, 0)
        ty1 = min(ty + 1, H - 1)
        for xx in range(x0, min(x0 + bs, W)):
            tx = min(max(xx + dx, 0), W - 1)
            tx0 = max(tx - 1, 0)
            tx1 = min(tx + 1, W - 1)
            gx = 0.5 * (nxt[ty, tx1] - nxt[ty, tx0])
            gy = 0.5 * (nxt[ty1, tx] - nxt[ty0, tx])
            it = nxt[ty, tx] - prev[yy, xx]
            sxx += gx * gx
            sxy += gx * gy
            syy += gy * gy
            sxt += gx * it
            syt += gy * it
    det = sxx * syy - sxy * sxy
    if det <= 1e-6 * (sxx + syy) * (sxx + syy) or det <= 0.0:
        return 0.0, 0.0
    du = -(syy * sxt - sxy * syt) / det
    dv = -(sxx * syt - sxy * sxt) / det
    return min(max(du, -0.5), 0.5), min(max(dv, -0.5), 0.5)


@njit(cache=True)
def _match_level(prev, nxt, init_u, init_v, bs, search, subpixel, out_u, out_v):
    rows, cols = init_u.shape
    for bi in range(rows):
        for bj in range(cols):
            y0 = bi * bs
            x0 = bj * bs
            best = 1e30
            bu = 0
            bv = 0
            bcost = 1 << 30
            # search around the propagated vector and around zero: a wrong coarse
            # estimate on fine texture must not lock the block onto a far match
            for cand in range(2):
                if cand == 0:
                    cu = int(np.round(init_u[bi, bj]))
                    cv = int(np.round(init_v[bi, bj]))
                else:
                    cu = 0
                    cv = 0
                    if abs(int(np.round(init_u[bi, bj]))) + abs(int(np.round(init_v[bi, bj]))) == 0:
                        break
                for dy in range(-search, search + 1):
                    for dx in range(-search, search + 1):
                        s = _sad(prev, nxt, y0, x0, bs, cv + dy, cu + dx)
                        cost = abs(cu + dx) + abs(cv + dy)
                        if s < best or (s == best and cost < bcost):
                            best = s
                            bu = cu + dx
                            bv = cv + dy
                            bcost = cost
            fu = float(bu)
            fv = float(bv)
            if subpixel:
                du, dv = _lk_refine(prev, nxt, y0, x0, bs, bv, bu)
                fu += du
                fv += dv
            out_u[bi, bj] = fu
            out_v[bi, bj] = fv


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    return cv2.resize(img, ((w + 1) // 2, (h + 1) // 2), interpolation=cv2.INTER_AREA)


def _block_grid(h: int, w: int, bs: int) -> tuple[int, int]:
    return -(-h // bs), -(-w // bs)


def block_match_flow(prev: np.ndarray, nxt: np.ndarray, levels: int = 3, search_px: int = 4,
                     block: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Per-block (u, v) at full resolution; grid is ceil(H/block) x ceil(W/block)."""
    pyr = [(prev, nxt)]
    for _ in range(levels - 1):
        p, n = pyr[-1]
        if min(p.shape) < 2 * block:
            break
        pyr.append((_downsample(p), _downsample(n)))
    u = v = None
    for lvl in range(len(pyr) - 1, -1, -1):
        p, n = pyr[lvl]
        rows, cols = _block_grid(*p.shape, block)
        if u is None:
            init_u = np.zeros((rows, cols))
            init_v = np.zeros((rows, cols))
        else:
            # each fine block takes the doubled vector of the coarse block holding its center
            ci = np.minimum(((np.arange(rows) * block + block // 2) // 2) // block, u.shape[0] - 1)
            cj = np.minimum(((np.arange(cols) * block + block // 2) // 2) // block, u.shape[1] - 1)
            init_u = 2.0 * u[np.ix_(ci, cj)]
            init_v = 2.0 * v[np.ix_(ci, cj)]
        u = np.empty((rows, cols))
        v = np.empty((rows, cols))
        _match_level(np.ascontiguousarray(p, np.float32), np.ascontiguousarray(n, np.float32),
                     init_u, init_v, block, search_px, lvl == 0, u, v)
    return u, v


def dense_flow(prev, nxt, config: Optional[FlowConfig] = None) -> FlowField:
    """Per-pixel displacement from ``prev`` to ``nxt`` (luma frames or 2-D arrays)."""
    cfg = config or FlowConfig()
    a, b = _as_gray(prev), _as_gray(nxt)
    if a.shape != b.shape:
        raise FlowError(f"frame sizes differ: {a.shape} vs {b.shape}")
    H, W = a.shape
    if cfg.estimator == "farneback":
        f = cv2.calcOpticalFlowFarneback(a.astype(np.uint8), b.astype(np.uint8), None,
                                         0.5, cfg.levels, 15, 3, 5, 1.2, 0)
        return FlowField(f[:, :, 0].astype(np.float32), f[:, :, 1].astype(np.float32))
    bu, bv = block_match_flow(a, b, cfg.levels, cfg.search_px, cfg.block)
    rows = np.arange(H) // cfg.block
    cols = np.arange(W) // cfg.block
    return FlowField(bu[np.ix_(rows, cols)].astype(np.float32), bv[np.ix_(rows, cols)].astype(np.float32))


def corner_features(frame, max_n: int = 400, min_distance: int = 8, quality: float = 0.01) -> np.ndarray:
    """Up to ``max_n`` Shi-Tomasi corners as an (n, 2) float array of (x, y)."""
    g = _as_gray(frame)
    if g.max() == g.min():
        return np.zeros((0, 2), np.float32)
    pts = cv2.goodFeaturesToTrack(g, maxCorners=max_n, qualityLevel=quality, minDistance=min_distance)
    if pts is None:
        return np.zeros((0, 2), np.float32)
    return pts.reshape(-1, 2)


def orientation_bin(u, v, n_bins: int = 9):
    """Bin index of atan2(v, u) folded into [0, 360) with bins of 360/n_bins degrees."""
    ang = np.degrees(np.arctan2(v, u)) % 360.0
    b = np.floor(ang / (360.0 / n_bins)).astype(np.int64)
    return np.minimum(b, n_bins - 1)


def block_histograms(field: FlowField, points: Optional[Sequence] = None, *, n_bins: int = 9,
                     block: int = 8, min_magnitude: float = 0.0) -> BlockFlowHistogram:
    """Sum flow magnitudes into (block, orientation-bin) cells.

    With ``points`` only the vectors at those (x, y) locations contribute.
    Vectors shorter than ``min_magnitude`` are ignored.
    """
    H, W = field.shape
    rows, cols = _block_grid(H, W, block)
    if points is None:
        ys, xs = np.mgrid[0:H, 0:W]
        ys, xs = ys.ravel(), xs.ravel()
    else:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        xs = np.clip(np.floor(pts[:, 0] + 0.5).astype(np.int64), 0, W - 1)
        ys = np.clip(np.floor(pts[:, 1] + 0.5).astype(np.int64), 0, H - 1)
    u = field.u[ys, xs].astype(np.float64)
    v = field.v[ys, xs].astype(np.float64)
    mag = np.hypot(u, v)
    keep = mag > 0 if min_magnitude <= 0 else mag >= min_magnitude
    cell = ((ys // block) * cols + xs // block) * n_bins + orientation_bin(u, v, n_bins)
    hist = np.bincount(cell[keep], weights=mag[keep], minlength=rows * cols * n_bins)
    return BlockFlowHistogram(hist.reshape(rows, cols, n_bins), block)


def flow_stats(field: FlowField) -> tuple[float, float]:
    """(sum of magnitudes, population variance of magnitudes)."""
    m = field.magnitude()
    return float(m.sum()), float(m.var())
