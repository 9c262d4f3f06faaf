import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motpipe.detpre import Detection
from motpipe.geometry import BBox
from motpipe.motion import KalmanBoxFilter
from motpipe.tracker import Tracker, TrackerConfig, run_sequence

from scenarios import noiseless, occlusion, run_scene


def unit(i, dim=16):
    v = np.zeros(dim)
    v[i] = 1.0
    return v


PEDS = [BBox(100, 100, 40, 100), BBox(600, 300, 50, 120), BBox(1200, 500, 45, 110)]


def frame_dets(frame, peds=PEDS, step=2.0):
    return [Detection(frame, b.translated(step * frame, 0), 0.9, embedding=unit(i))
            for i, b in enumerate(peds)]


def test_confirmation_delay_and_stable_ids():
    trk = Tracker()
    assert trk.step(frame_dets(1), 1) == []
    assert trk.step(frame_dets(2), 2) == []
    ids = None
    for f in range(3, 12):
        out = trk.step(frame_dets(f), f)
        assert len(out) == 3
        now = [tid for tid, _, _ in out]
        assert ids is None or now == ids
        ids = now
    assert ids == [1, 2, 3]


def test_out_of_order_frame_rejected():
    trk = Tracker()
    trk.step(frame_dets(5), 5)
    with pytest.raises(ValueError):
        trk.step(frame_dets(5), 5)


def test_absence_beyond_max_age_gets_new_id():
    ped = [PEDS[0]]
    trk = Tracker()
    seen = set()
    for f in range(1, 11):
        seen |= {tid for tid, _, _ in trk.step(frame_dets(f, ped, 0.0), f)}
    assert seen == {1}
    for f in range(11, 62):  # 51 empty frames
        assert trk.step([], f) == []
    later = set()
    for f in range(62, 70):
        later |= {tid for tid, _, _ in trk.step(frame_dets(f, ped, 0.0), f)}
    assert later == {2}


def test_absence_within_max_age_keeps_id():
    ped = [PEDS[0]]
    trk = Tracker()
    for f in range(1, 11):
        trk.step(frame_dets(f, ped, 0.0), f)
    for f in range(11, 41):
        trk.step([], f)
    assert [tid for tid, _, _ in trk.step(frame_dets(41, ped, 0.0), 41)] == [1]


def test_non_pedestrian_detections_ignored():
    trk = Tracker()
    for f in range(1, 6):
        out = trk.step([Detection(f, PEDS[0], 0.9, category=2)], f)
    assert out == [] and trk.tracks == []


def test_raw_box_output_without_smoothing():
    cfg = TrackerConfig(output_smoothing=False)
    trk = Tracker(cfg)
    for f in range(1, 6):
        dets = frame_dets(f)
        out = trk.step(dets, f)
    assert sorted(b for _, b, _ in out) == sorted(d.bbox for d in dets)


def test_empty_sequence():
    assert run_sequence({}) == []


@given(st.integers(0, 2**16), st.floats(0.5, 8.0))
@settings(max_examples=25, deadline=None)
def test_smoothed_center_between_prediction_and_detection(seed, noise):
    rng = np.random.default_rng(seed)
    trk = Tracker()
    kf = KalmanBoxFilter()
    for f in range(1, 25):
        dets = [Detection(f, b.translated(2 * f + rng.normal(0, noise), rng.normal(0, noise)), 0.9,
                          embedding=unit(i)) for i, b in enumerate(PEDS)]
        predicted = {t.serial: np.array(kf.predict(t.state).mean[:2]) for t in trk.tracks}
        out = trk.step(dets, f)
        by_id = {t.track_id: t for t in trk.tracks}
        for tid, box, _ in out:
            t = by_id[tid]
            p = predicted.get(t.serial)
            if p is None:
                continue
            d = np.array(t.last_detection.bbox.center)
            c = np.array(box.center)
            for k in range(2):
                lo, hi = sorted((p[k], d[k]))
                assert lo - 1e-6 <= c[k] <= hi + 1e-6


def test_ids_never_reused_and_output_one_to_one():
    res, _, rows = run_scene(occlusion(seed=3), max_age=10)
    per_frame = {}
    for frame, tid, _, _ in rows:
        assert tid not in per_frame.setdefault(frame, set())
        per_frame[frame].add(tid)
    # ids are handed out in confirmation order: the first frame an id appears increases with the id
    first = {}
    for frame, tid, _, _ in rows:
        first.setdefault(tid, frame)
    ids = sorted(first)
    assert ids == list(range(1, len(ids) + 1))
    assert [first[i] for i in ids] == sorted(first[i] for i in ids)


def test_rerun_is_identical():
    a = run_scene(noiseless(seed=4, n_peds=5, n_frames=60))[2]
    b = run_scene(noiseless(seed=4, n_peds=5, n_frames=60))[2]
    assert a == b


def test_noiseless_scene_has_one_id_per_pedestrian():
    res, n_ids, _ = run_scene(noiseless(seed=1, n_peds=20, n_frames=200))
    assert res.counts.idsw == 0 and n_ids == 20


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_longer_max_age_never_adds_switches(seed):
    switches = [run_scene(occlusion(seed), max_age=a)[0].counts.idsw for a in (5, 10, 20, 50)]
    assert switches == sorted(switches, reverse=True)
