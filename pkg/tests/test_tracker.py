from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vidsyn.config import Config, TrackConfig
from vidsyn.regions import BBox, Detection
from vidsyn.synopsis import TubeProducer
from vidsyn.synthgen import Agent, Background, SceneScript, generate
from vidsyn.tracker import (Track, TrackState, Tracker, TrackerError, associate, confirmation_threshold,
                            displacement, predict_center)
from vidsyn.video_io import Frame, timestamp_ms

H, W = 120, 160


def det(f, x, y, w=10, h=10):
    pts = np.array([[x, y], [x + w - 1, y], [x + w - 1, y + h - 1], [x, y + h - 1]])
    return Detection(f, BBox(x, y, w, h), pts, pts, w * h, np.ones((h, w), np.uint8),
                     np.zeros((h, w, 1), np.uint8))


def frame(i, fps=18):
    return Frame(i, timestamp_ms(i, fps), np.zeros((H, W, 1), np.uint8))


def eq31_oracle(c):
    i = len(c) - 1
    num = [Fraction(0), Fraction(0)]
    den = Fraction(0)
    for n in range(i):
        for k in range(2):
            num[k] += (Fraction(c[n + 1][k]) - Fraction(c[n][k])) * (n + 1)
        den += n + 1
    return [float(v / den) for v in num]


def eq32_oracle(c):
    i = len(c) - 1
    out = []
    for k in range(2):
        s = Fraction(0)
        for n in range(1, 11):
            s += (Fraction(c[i][k]) - Fraction(c[i - n][k])) * (10 - n) / 45
        out.append(float(s))
    return out


def test_constant_difference_example():
    p = predict_center([(0, 0), (2, 0), (4, 0), (6, 0)])
    assert p == pytest.approx((8, 0), abs=1e-12)
    assert displacement([(0, 0), (2, 0), (4, 0), (6, 0)]) == pytest.approx([2, 0], abs=1e-12)


def test_long_constant_velocity_overshoots_by_eleven_thirds():
    c = [(3.0 * n, 0.0) for n in range(15)]
    assert sum(n * (10 - n) for n in range(1, 11)) == 165
    assert displacement(c)[0] == pytest.approx(11.0, abs=1e-9)
    assert predict_center(c) == pytest.approx((42.0 + 11.0, 0.0), abs=1e-9)


def test_single_center_predicts_itself():
    assert predict_center([(4.5, 7.25)]) == (4.5, 7.25)


def test_index_ten_uses_first_form():
    c = [(float(n * n), 0.0) for n in range(11)]   # i = 10
    assert displacement(c)[0] == pytest.approx(eq31_oracle(c)[0], abs=1e-9)
    c.append((121.0, 0.0))                         # i = 11
    assert displacement(c)[0] == pytest.approx(eq32_oracle(c)[0], abs=1e-9)


centers = st.lists(st.tuples(st.floats(-500, 500, allow_nan=False), st.floats(-500, 500, allow_nan=False)),
                   min_size=2, max_size=30)


@given(centers)
def test_displacement_matches_summation_oracles(c):
    want = eq31_oracle(c) if len(c) - 1 <= 10 else eq32_oracle(c)
    assert displacement(c) == pytest.approx(want, abs=1e-9)


@given(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), st.integers(1, 30))
def test_constant_history_predicts_same_center(p, n):
    assert predict_center([p] * n) == pytest.approx(p, abs=1e-9)


@given(st.integers(1, 10))
def test_first_form_weights_sum_to_one(i):
    assert sum(n + 1 for n in range(i)) == i * (i + 1) // 2
    assert sum(Fraction(10 - n, 45) for n in range(1, 11)) == 1


@pytest.mark.parametrize("fps,n", [(18, 9), (30, 15), (1, 1), (25, 13), (0.5, 1)])
def test_confirmation_threshold(fps, n):
    assert confirmation_threshold(fps) == n


def test_confirmation_threshold_rejects_bad_fps():
    with pytest.raises(TrackerError):
        confirmation_threshold(0)


def _track(serial, center, object_id=None, box=10):
    x, y = center
    t = Track(serial, TrackState.CONFIRMED if object_id else TrackState.CANDIDATE, object_id)
    d = det(0, int(x - box / 2), int(y - box / 2), box, box)
    t.centers = [d.center]
    t.entries = [type("E", (), {"bbox": d.bbox, "predicted": False, "original_frame_index": 0})()]
    return t


def test_associate_nearest_within_gate():
    t = _track(0, (50, 50), 1)
    dets = [det(1, 47, 45), det(1, 195, 195)]   # centers (52, 50) and (200, 200)
    a = associate([t], dets, gate_min_px=40)
    assert a.matches == [(0, 0)]
    assert a.unmatched_detections == [1]


def test_associate_tie_goes_to_lower_object_id():
    t1, t2 = _track(5, (50, 50), 2), _track(6, (50, 50), 1)
    a = associate([t1, t2], [det(1, 45, 45)])
    assert a.matches == [(1, 0)]
    assert a.unmatched_tracks == [0]


def test_associate_no_detections():
    ts = [_track(0, (10, 10), 1), _track(1, (90, 90), 2)]
    a = associate(ts, [])
    assert a.matches == [] and a.unmatched_tracks == [0, 1]


def test_associate_rejects_mixed_frames():
    with pytest.raises(TrackerError):
        associate([], [det(1, 0, 0), det(2, 0, 0)])


def test_moving_square_single_tube():
    tr = Tracker(18)
    tubes = []
    for i in range(30):
        tubes += tr.step([det(i, 5 + 5 * i, 40)], frame(i))
    tubes += tr.flush()
    assert len(tubes) == 1
    (tube,) = tubes
    assert tube.object_id == 1 and len(tube) == 30
    assert [o.original_frame_index for o in tube.frames] == list(range(30))
    assert not any(o.predicted for o in tube.frames)


def test_short_blob_never_confirmed():
    tr = Tracker(18)
    out = []
    for i in range(3):
        out += tr.step([det(i, 20, 20)], frame(i))
    for i in range(3, 20):
        out += tr.step([], frame(i))
    out += tr.flush()
    assert out == []


def test_coasting_bridges_gap_and_trims_tail():
    tr = Tracker(18, TrackConfig(coast_limit=3))
    out = []
    for i in range(12):
        out += tr.step([det(i, 10 + 2 * i, 50)], frame(i))
    out += tr.step([], frame(12))                       # one missed frame
    for i in range(13, 20):
        out += tr.step([det(i, 10 + 2 * i, 50)], frame(i))
    for i in range(20, 30):
        out += tr.step([], frame(i))
    assert len(out) == 1
    tube = out[0]
    idx = [o.original_frame_index for o in tube.frames]
    assert idx == list(range(20))
    assert [o.predicted for o in tube.frames].count(True) == 1 and tube.frames[12].predicted
    assert tube.frames[12].bbox.inside(W, H)


def test_out_of_order_frames_rejected():
    tr = Tracker(18)
    tr.step([], frame(5))
    with pytest.raises(TrackerError):
        tr.step([], frame(5))


@given(st.lists(st.lists(st.tuples(st.integers(0, 140), st.integers(0, 100)), max_size=5), min_size=1, max_size=40),
       st.sampled_from([2, 6, 18]))
def test_tracker_invariants_on_random_detections(per_frame, fps):
    tr = Tracker(fps)
    n_conf = confirmation_threshold(fps)
    tubes = []
    for i, pts in enumerate(per_frame):
        dets = [det(i, x, y) for x, y in pts]
        tubes += tr.step(dets, frame(i, fps))
        # no detection is claimed twice in one frame
        claimed = [id(t.entries[-1]) for t in tr.tracks if t.entries[-1].original_frame_index == i
                   and not t.entries[-1].predicted]
        assert len(claimed) == len(set(claimed))
        boxes = [t.entries[-1].bbox for t in tr.tracks
                 if t.entries[-1].original_frame_index == i and not t.entries[-1].predicted]
        assert len(boxes) <= len(dets)
    tubes += tr.flush()
    ids = sorted(t.object_id for t in tubes)
    assert ids == list(range(1, len(ids) + 1))
    for t in tubes:
        idx = [o.original_frame_index for o in t.frames]
        assert idx == list(range(idx[0], idx[0] + len(idx)))
        assert sum(not o.predicted for o in t.frames) >= n_conf
        assert not t.frames[-1].predicted


def _crossing_scene(seed):
    return SceneScript(90, 18, 200, 120, 3, Background(noise=2.0),
                       [Agent((20, 20), (10, 50), (6, 0), 20, 48),
                        Agent((12, 12), (178, 54), (-6, 0), 20, 48)], [], seed)


@pytest.mark.parametrize("seed", [0, 1])
def test_crossing_squares_keep_their_ids(seed):
    g = generate(_crossing_scene(seed))
    tubes = [t for batch in TubeProducer(g.source, Config()) for t in batch]
    assert len(tubes) == 2
    # identity of each tube: the agent it overlaps on most real frames, before and after the crossing
    for t in tubes:
        before, after = set(), set()
        for o in t.frames:
            if o.predicted:
                continue
            best = max(g.annotations.frames[o.original_frame_index], key=lambda b: b.bbox.iou(o.bbox))
            if best.bbox.iou(o.bbox) < 0.5:
                continue
            (before if o.original_frame_index < 30 else after).add(best.gt_id)
        assert len(before) == 1 and before == after
    assert {len(t) for t in tubes} == {28}
