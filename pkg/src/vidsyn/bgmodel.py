"""Adaptive per-pixel Gaussian mixture background model with shadow labelling.

Each pixel keeps up to ``max_components`` Gaussians (weight, per-channel mean,
one shared variance) sorted by weight. The leading components whose cumulative
weight stays under ``background_ratio`` describe the background. Learning uses
a recursive approximation of a sliding ``history``-sample window: the learning
rate is ``1 / min(n, history)`` where ``n`` is the number of frames seen, and a
negative complexity prior prunes components that stop being supported.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .config import BgConfig
from .video_io import Frame

BACKGROUND = 0
SHADOW = 1
FOREGROUND = 2


class BackgroundModelError(Exception):
    pass


@dataclass
class LabelMask:
    labels: np.ndarray  # (H, W) uint8 of BACKGROUND / SHADOW / FOREGROUND

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def foreground(self) -> np.ndarray:
        """Binary uint8 mask (1 = FOREGROUND); shadows count as background."""
        return (self.labels == FOREGROUND).astype(np.uint8)

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self.labels == label))


@njit(cache=True)
def _gmm_step(px, weights, means, variances, ncomp, alpha, var_threshold,
              shadow_threshold, background_ratio, c_t, var_init, var_min,
              var_max, chroma_spread, detect_shadows, labels):
    H, W, C = px.shape
    K = weights.shape[2]
    x = np.empty(C)
    for r in range(H):
        for c in range(W):
            for ch in range(C):
                x[ch] = px[r, c, ch]
            n = ncomp[r, c]

            # --- classify against the current model
            matched = -1
            n_bg = 0
            cum = 0.0
            for k in range(n):
                if cum < background_ratio:
                    n_bg = k + 1
                cum += weights[r, c, k]
            for k in range(n):
                d2 = 0.0
                for ch in range(C):
                    diff = x[ch] - means[r, c, k, ch]
                    d2 += diff * diff
                if d2 <= var_threshold * variances[r, c, k]:
                    matched = k
                    break
            if matched >= 0 and matched < n_bg:
                label = 0
            else:
                label = 2
                if detect_shadows:
                    for k in range(n_bg):
                        num = 0.0
                        den = 0.0
                        for ch in range(C):
                            num += x[ch] * means[r, c, k, ch]
                            den += means[r, c, k, ch] * means[r, c, k, ch]
                        if den <= 0.0:
                            continue
                        a = num / den
                        if a < shadow_threshold or a >= 1.0:
                            continue
                        if C == 1:
                            label = 1
                            break
                        lo = 1e9
                        hi = -1e9
                        ok = True
                        for ch in range(C):
                            m = means[r, c, k, ch]
                            if m <= 0.0:
                                ok = False
                                break
                            q = x[ch] / m
                            lo = min(lo, q)
                            hi = max(hi, q)
                        if ok and hi - lo <= chroma_spread:
                            label = 1
                            break
            labels[r, c] = label

            # --- update
            total = 0.0
            for k in range(n):
                o = 1.0 if k == matched else 0.0
                w = weights[r, c, k] + alpha * (o - weights[r, c, k]) - alpha * c_t
                weights[r, c, k] = w
            if matched >= 0:
                w = weights[r, c, matched]
                if w <= 0.0:
                    # keep the supported component alive even under a strong prior
                    w = alpha
                    weights[r, c, matched] = w
                rho = alpha / w
                if rho > 1.0:
                    rho = 1.0
                d2 = 0.0
                for ch in range(C):
                    diff = x[ch] - means[r, c, matched, ch]
                    means[r, c, matched, ch] += rho * diff
                    d2 += diff * diff
                v = variances[r, c, matched] + rho * (d2 / C - variances[r, c, matched])
                variances[r, c, matched] = min(max(v, var_min), var_max)
            # prune unsupported components
            m = 0
            for k in range(n):
                if weights[r, c, k] > 0.0:
                    if m != k:
                        weights[r, c, m] = weights[r, c, k]
                        variances[r, c, m] = variances[r, c, k]
                        for ch in range(C):
                            means[r, c, m, ch] = means[r, c, k, ch]
                    m += 1
            n = m
            if matched < 0:
                k = n if n < K else K - 1
                weights[r, c, k] = alpha
                variances[r, c, k] = var_init
                for ch in range(C):
                    means[r, c, k, ch] = x[ch]
                if n < K:
                    n += 1
            for k in range(n):
                total += weights[r, c, k]
            if total > 0.0:
                for k in range(n):
                    weights[r, c, k] /= total
            # insertion sort by weight, descending
            for k in range(1, n):
                j = k
                while j > 0 and weights[r, c, j] > weights[r, c, j - 1]:
                    tw = weights[r, c, j]
                    weights[r, c, j] = weights[r, c, j - 1]
                    weights[r, c, j - 1] = tw
                    tv = variances[r, c, j]
                    variances[r, c, j] = variances[r, c, j - 1]
                    variances[r, c, j - 1] = tv
                    for ch in range(C):
                        tm = means[r, c, j, ch]
                        means[r, c, j, ch] = means[r, c, j - 1, ch]
                        means[r, c, j - 1, ch] = tm
                    j -= 1
            for k in range(n, K):
                weights[r, c, k] = 0.0
            ncomp[r, c] = n


class BackgroundModel:
    """Stateful mixture model; feed frames strictly in stream order."""

    def __init__(self, config: Optional[BgConfig] = None, **overrides):
        cfg = config or BgConfig()
        if overrides:
            cfg = BgConfig(**{**cfg.__dict__, **overrides})
        cfg.validate()
        self.config = cfg
        self.n_frames = 0
        self.shape: Optional[tuple[int, int, int]] = None
        self.weights = self.means = self.variances = self.ncomp = None

    def _init_state(self, shape):
        H, W, C = shape
        K = self.config.max_components
        self.shape = shape
        self.weights = np.zeros((H, W, K))
        self.means = np.zeros((H, W, K, C))
        self.variances = np.full((H, W, K), self.config.var_init)
        self.ncomp = np.zeros((H, W), dtype=np.int32)

    @property
    def learning_rate(self) -> float:
        return 1.0 / min(self.n_frames + 1, self.config.history)

    def apply(self, frame: Frame) -> LabelMask:
        return bg_apply(self, frame)

    def snapshot(self, index: int = 0, timestamp_ms: int = 0) -> Frame:
        return bg_snapshot(self, index, timestamp_ms)

    def copy(self) -> "BackgroundModel":
        other = BackgroundModel(self.config)
        other.n_frames = self.n_frames
        other.shape = self.shape
        if self.shape is not None:
            other.weights = self.weights.copy()
            other.means = self.means.copy()
            other.variances = self.variances.copy()
            other.ncomp = self.ncomp.copy()
        return other


def bg_apply(model: BackgroundModel, frame: Frame) -> LabelMask:
    """Classify ``frame`` against the model, then fold it into the model."""
    px = frame.pixels
    if model.shape is None:
        model._init_state(px.shape)
    elif px.shape != model.shape:
        raise BackgroundModelError(f"frame shape {px.shape} does not match model {model.shape}")
    cfg = model.config
    labels = np.empty(px.shape[:2], dtype=np.uint8)
    _gmm_step(px, model.weights, model.means, model.variances, model.ncomp,
              model.learning_rate, cfg.var_threshold, cfg.shadow_threshold,
              cfg.background_ratio, cfg.complexity_prior, cfg.var_init, cfg.var_min,
              cfg.var_max, cfg.chroma_spread, cfg.detect_shadows, labels)
    model.n_frames += 1
    return LabelMask(labels)


def bg_snapshot(model: BackgroundModel, index: int = 0, timestamp_ms: int = 0) -> Frame:
    """Current background estimate: mean of each pixel's highest-weight component."""
    if model.n_frames == 0:
        raise BackgroundModelError("background model has not seen any frame")
    mean = model.means[:, :, 0, :]
    px = np.floor(mean + 0.5).clip(0, 255).astype(np.uint8)
    return Frame(index, timestamp_ms, px)
