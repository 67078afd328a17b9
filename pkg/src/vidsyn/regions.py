"""Foreground mask -> per-object detections (morphology, components, contours, hulls)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import cv2
import numpy as np

from .config import RegionsConfig
from .video_io import Frame


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.w, self.h))

    def intersection_area(self, other: "BBox") -> int:
        iw = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        ih = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        return max(iw, 0) * max(ih, 0)

    def iou(self, other: "BBox") -> float:
        inter = self.intersection_area(other)
        union = self.area + other.area - inter
        return inter / union if union > 0 else 0.0

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.w >= 1 and self.h >= 1 \
            and self.x + self.w <= width and self.y + self.h <= height

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_center(cls, cx: float, cy: float, w: int, h: int, width: int, height: int) -> "BBox":
        """Box of size w x h centered at (cx, cy), shifted/clipped to lie inside the frame."""
        w = max(1, min(w, width))
        h = max(1, min(h, height))
        x = int(np.floor(cx - w / 2.0 + 0.5))
        y = int(np.floor(cy - h / 2.0 + 0.5))
        x = min(max(x, 0), width - w)
        y = min(max(y, 0), height - h)
        return cls(x, y, w, h)


@dataclass
class Detection:
    frame_index: int
    bbox: BBox
    contour: np.ndarray = field(repr=False)  # (n, 2) int (x, y)
    hull: np.ndarray = field(repr=False)     # (m, 2) int (x, y)
    area_px: int = 0
    mask_patch: Optional[np.ndarray] = field(default=None, repr=False)
    image_patch: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def center(self) -> tuple[float, float]:
        return self.bbox.center


def structuring_element(size: int) -> np.ndarray:
    if size <= 1:
        return np.ones((1, 1), np.uint8)
    return cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (size, size))


def clean_mask(mask: np.ndarray, config: Optional[RegionsConfig] = None, *,
               kernel: Optional[int] = None, dilate_iters: Optional[int] = None,
               erode_iters: Optional[int] = None) -> np.ndarray:
    """Dilate then erode a binary mask; returns a 0/1 uint8 array of the same shape."""
    cfg = config or RegionsConfig()
    k = structuring_element(cfg.kernel if kernel is None else kernel)
    nd = cfg.dilate_iters if dilate_iters is None else dilate_iters
    ne = cfg.erode_iters if erode_iters is None else erode_iters
    m = (np.asarray(mask) > 0).astype(np.uint8)
    if nd:
        m = cv2.dilate(m, k, iterations=nd)
    if ne:
        m = cv2.erode(m, k, iterations=ne)
    return m


def _outer_contour(component: np.ndarray) -> np.ndarray:
    contours, _ = cv2.findContours(component, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    # a single 8-connected component has exactly one outer boundary
    c = max(contours, key=len)
    return c.reshape(-1, 2)


def extract_regions(mask: np.ndarray, frame: Optional[Frame] = None,
                    config: Optional[RegionsConfig] = None, *,
                    min_area: Optional[int] = None, frame_index: Optional[int] = None) -> list[Detection]:
    """One Detection per 8-connected component whose filled area reaches ``min_area``.

    ``min_area`` defaults to ``min_area_frac`` of the frame area.
    """
    cfg = config or RegionsConfig()
    m = (np.asarray(mask) > 0).astype(np.uint8)
    H, W = m.shape
    if frame is not None and frame.shape != (H, W):
        raise ValueError(f"mask {m.shape} and frame {frame.shape} differ")
    if min_area is None:
        min_area = int(np.ceil(cfg.min_area_frac * H * W))
    if frame_index is None:
        frame_index = frame.index if frame is not None else 0

    n, cc, stats, _ = cv2.connectedComponentsWithStats(m, connectivity=8)
    dets = []
    for lab in range(1, n):
        x, y, w, h = (int(v) for v in stats[lab, :4])
        comp = (cc[y:y + h, x:x + w] == lab).astype(np.uint8)
        contour = _outer_contour(comp)
        filled = np.zeros_like(comp)
        cv2.drawContours(filled, [contour.reshape(-1, 1, 2)], -1, 1, thickness=cv2.FILLED)
        filled |= comp
        area = int(filled.sum())
        if area < min_area:
            continue
        hull = cv2.convexHull(contour.reshape(-1, 1, 2)).reshape(-1, 2)
        hx, hy, hw, hh = cv2.boundingRect(hull.reshape(-1, 1, 2))
        contour = contour + (x, y)
        hull = hull + (x, y)
        bbox = BBox(x + hx, y + hy, hw, hh)
        img = None
        if frame is not None:
            img = frame.pixels[bbox.y:bbox.y + bbox.h, bbox.x:bbox.x + bbox.w].copy()
        dets.append(Detection(frame_index, bbox, contour, hull, area, filled, img))
    dets.sort(key=lambda d: (d.bbox.y, d.bbox.x))
    return dets


def foreground_area_ratio(mask: np.ndarray) -> float:
    """Total filled outer-contour area of all foreground blobs over the frame area."""
    m = (np.asarray(mask) > 0).astype(np.uint8)
    if not m.any():
        return 0.0
    contours, _ = cv2.findContours(m, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    filled = np.zeros_like(m)
    cv2.drawContours(filled, contours, -1, 1, thickness=cv2.FILLED)
    filled |= m
    return float(filled.sum()) / m.size
