import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import textured
from vidsyn.config import FlowConfig
from vidsyn.flow import (FlowError, FlowField, block_histograms, corner_features, dense_flow, flow_stats,
                         orientation_bin)
from vidsyn.video_io import Frame


def shifted_pair(seed, dx, dy, h=96, w=128):
    rng = np.random.default_rng(seed)
    big = textured(rng, h + 40, w + 40)
    a = big[20:20 + h, 20:20 + w]
    # content moves by (+dx, +dy): next[y, x] = prev[y - dy, x - dx]
    b = big[20 - dy:20 - dy + h, 20 - dx:20 - dx + w]
    return a, b


@given(st.integers(0, 10_000))
def test_identical_frames_give_no_motion(seed):
    a, _ = shifted_pair(seed, 0, 0)
    f = dense_flow(a, a)
    assert np.abs(f.u).max() <= 0.1 and np.abs(f.v).max() <= 0.1


def test_three_pixel_right_shift():
    a, b = shifted_pair(1, 3, 0)
    f = dense_flow(a, b)
    core = (slice(16, -16), slice(16, -16))
    assert 2.5 <= np.median(f.u[core]) <= 3.5
    assert np.median(np.abs(f.v[core])) <= 0.5


@given(st.integers(0, 10_000), st.integers(-4, 4), st.integers(-4, 4))
def test_translation_recovery(seed, dx, dy):
    a, b = shifted_pair(seed, dx, dy)
    f = dense_flow(Frame(0, 0, a), Frame(1, 0, b))
    core = (slice(16, -16), slice(16, -16))
    assert abs(np.median(f.u[core]) - dx) <= 0.5
    assert abs(np.median(f.v[core]) - dy) <= 0.5


def test_farneback_alternative_recovers_shift():
    a, b = shifted_pair(2, 2, -1)
    f = dense_flow(a, b, FlowConfig(estimator="farneback"))
    core = (slice(16, -16), slice(16, -16))
    assert abs(np.median(f.u[core]) - 2) <= 0.5
    assert abs(np.median(f.v[core]) + 1) <= 0.5


def test_textureless_frames_do_not_raise():
    a = np.full((40, 48), 120, np.uint8)
    f = dense_flow(a, a.copy())
    assert f.shape == (40, 48)


def test_size_mismatch_and_channels():
    with pytest.raises(FlowError):
        dense_flow(np.zeros((8, 8)), np.zeros((8, 9)))
    with pytest.raises(FlowError):
        dense_flow(Frame(0, 0, np.zeros((8, 8, 3), np.uint8)), Frame(1, 0, np.zeros((8, 8, 3), np.uint8)))


def test_field_matches_frame_size_with_partial_blocks():
    a, b = shifted_pair(3, 1, 0, h=37, w=53)
    assert dense_flow(a, b).shape == (37, 53)


# --- corners -------------------------------------------------------------------------

def min_eig_response(img, block=3):
    """Brute-force Shi-Tomasi response with Sobel gradients."""
    g = img.astype(np.float64)
    p = np.pad(g, 1, mode="reflect")
    gx = (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]) - (p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2])
    gy = (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]) - (p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:])
    H, W = g.shape
    r = np.zeros((H, W))
    for y in range(H):
        for x in range(W):
            ys, xs = slice(max(y - 1, 0), y + 2), slice(max(x - 1, 0), x + 2)
            a = (gx[ys, xs] ** 2).sum()
            b = (gx[ys, xs] * gy[ys, xs]).sum()
            c = (gy[ys, xs] ** 2).sum()
            r[y, x] = (a + c) / 2 - math.sqrt(((a - c) / 2) ** 2 + b * b)
    return r


def test_uniform_frame_has_no_corners():
    assert len(corner_features(np.full((30, 30), 77, np.uint8))) == 0


def test_square_corners_match_brute_force_response():
    img = np.zeros((60, 60), np.uint8)
    img[20:40, 15:45] = 255
    pts = corner_features(img, max_n=10)
    assert len(pts) == 4
    r = min_eig_response(img)
    # strongest response at each corner neighbourhood, per the oracle
    oracle = []
    for cy, cx in [(20, 15), (20, 44), (39, 15), (39, 44)]:
        win = r[cy - 3:cy + 4, cx - 3:cx + 4]
        dy, dx = np.unravel_index(np.argmax(win), win.shape)
        oracle.append((cx - 3 + dx, cy - 3 + dy))
    for ox, oy in oracle:
        d = np.hypot(pts[:, 0] - ox, pts[:, 1] - oy).min()
        assert d <= 1.5


def test_checkerboard_is_capped_and_spaced():
    img = ((np.indices((96, 96)) // 6).sum(axis=0) % 2 * 255).astype(np.uint8)
    pts = corner_features(img, max_n=25)
    assert len(pts) == 25
    d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    d[np.diag_indices(len(pts))] = np.inf
    assert d.min() >= 8


# --- histograms and statistics -------------------------------------------------------------

def _field(h, w):
    return FlowField.zeros(h, w)


def test_zero_field_histogram():
    hist = block_histograms(_field(17, 20))
    assert hist.bins.shape == (3, 3, 9)
    assert hist.bins.sum() == 0


def test_single_rightward_pixel():
    f = _field(16, 16)
    f.u[2, 3] = 1.0
    hist = block_histograms(f)
    assert hist.bins[0, 0, 0] == 1.0
    assert hist.bins.sum() == 1.0


def test_downward_vector_lands_in_bin_two():
    f = _field(16, 16)
    f.v[9, 9] = 2.0
    hist = block_histograms(f)
    assert math.floor(90 / 40) == 2
    assert hist.bins[1, 1, 2] == 2.0 and hist.bins.sum() == 2.0


def test_eighteen_bin_switch():
    f = _field(8, 8)
    f.v[0, 0] = 1.0
    assert block_histograms(f, n_bins=18).bins[0, 0, 4] == 1.0


def test_sparse_points_restrict_contributions():
    f = _field(16, 16)
    f.u[:] = 1.0
    hist = block_histograms(f, points=[(1.2, 1.4), (12.0, 3.0)])
    assert hist.bins.sum() == 2.0
    assert hist.bins[0, 0, 0] == 1.0 and hist.bins[0, 1, 0] == 1.0


@given(st.integers(0, 10_000), st.sampled_from([9, 18]))
def test_histogram_mass_is_conserved(seed, bins):
    rng = np.random.default_rng(seed)
    f = FlowField(rng.normal(0, 3, (21, 30)).astype(np.float32), rng.normal(0, 3, (21, 30)).astype(np.float32))
    hist = block_histograms(f, n_bins=bins)
    assert hist.bins.sum() == pytest.approx(f.magnitude().sum(), rel=1e-6)
    assert (hist.bins >= 0).all()


@given(st.floats(-1e3, 1e3, allow_nan=False), st.floats(-1e3, 1e3, allow_nan=False))
def test_orientation_binning_total_and_exclusive(u, v):
    b = int(orientation_bin(np.array([u]), np.array([v]))[0])
    assert 0 <= b < 9
    ang = math.degrees(math.atan2(v, u)) % 360.0
    assert b == min(int(ang // 40), 8)


def test_flow_stats_examples():
    assert flow_stats(_field(5, 6)) == (0.0, 0.0)
    f = FlowField(np.full((4, 5), 3, np.float32), np.full((4, 5), 4, np.float32))
    total, var = flow_stats(f)
    assert total == pytest.approx(5 * 20) and var == pytest.approx(0)
    g = _field(4, 4)
    g.u[:2] = 2.0
    assert flow_stats(g) == (pytest.approx(16.0), pytest.approx(1.0))
