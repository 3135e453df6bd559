import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from tessdet.hough3d import HoughParams, extract_trajectories
from tessdet.metrics import track_score
from tessdet.synth import Background, SceneSpec, TargetSpec, render
from tessdet.tess import TessParams, detect_unit
from tessdet.tracker import (
    Status,
    Track,
    Tracker,
    TrackerParams,
    TrackObservation,
    assign,
    match_cost,
    observation_from_line,
    predict,
    step,
    update,
)


def _track(state, cov=None, **kw):
    cov = np.eye(4) * 10 if cov is None else np.asarray(cov, dtype=float)
    return Track(kw.pop("id", 0), np.asarray(state, dtype=float), cov, **kw)


def _obs(center, velocity=(1.0, 0.0), unit=0):
    return TrackObservation(tuple(map(float, center)), tuple(map(float, velocity)), unit)


# -- Kalman filter ---------------------------------------------------------------


def test_predict_constant_velocity():
    out = predict(_track([10, 10, 2, -1]))
    assert out.state.tolist() == [12, 9, 2, -1]


def test_predict_zero_noise_zero_covariance():
    out = predict(_track([1, 2, 3, 4], np.zeros((4, 4))), q=0.0)
    assert np.all(out.covariance == 0)


def test_predict_keeps_psd_and_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = rng.normal(size=(4, 4))
        out = predict(_track(rng.normal(size=4), a @ a.T), q=rng.uniform(0, 3))
        assert np.abs(out.covariance - out.covariance.T).max() <= 1e-9
        assert np.linalg.eigvalsh(out.covariance).min() >= -1e-9


def test_predict_refuses_deleted():
    with pytest.raises(ValueError):
        predict(_track([0, 0, 0, 0], status=Status.DELETED))


def test_update_zero_innovation_is_exact():
    t = predict(_track([10, 10, 2, -1]))
    out = update(t, _obs((12, 9), (2, -1)))
    assert np.array_equal(out.state, t.state)


def test_update_trusts_precise_measurement():
    t = predict(_track([0, 0, 0, 0]))
    out = update(t, _obs((5, -3), (1.5, 2)), r=1e-12)
    assert np.abs(out.state - [5, -3, 1.5, 2]).max() < 1e-6


def test_update_decreases_every_variance():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a = rng.normal(size=(4, 4))
        t = predict(_track(rng.normal(size=4), a @ a.T + np.eye(4)))
        r = 0.5 * np.diag(t.covariance).min()
        out = update(t, _obs(rng.normal(size=2), rng.normal(size=2)), r)
        assert np.all(np.diag(out.covariance) < np.diag(t.covariance))
        assert np.abs(out.covariance - out.covariance.T).max() <= 1e-9


@pytest.mark.parametrize("p0", [1.0, 10.0, 100.0])
def test_noiseless_stream_converges(p0):
    truth = np.array([3.0, -4.0, 1.25, 0.5])
    t = _track([0, 0, 0, 0], np.eye(4) * p0)
    for k in range(1, 11):
        t = predict(t, q=0.0)
        x = truth[:2] + k * truth[2:]
        t = update(t, _obs(x, truth[2:]), r=1e-9)
    expected = np.concatenate([truth[:2] + 10 * truth[2:], truth[2:]])
    assert np.abs(t.state - expected).max() < 1e-6


# -- cost and assignment -----------------------------------------------------------


def test_match_cost_examples():
    p = TrackerParams(alpha1=1.0, alpha2=1.0)
    pred = _track([2, 2, 1, 1])
    assert match_cost(pred, _obs((2, 2), (1, 1)), p) == pytest.approx(0, abs=1e-12)
    assert match_cost(pred, _obs((2, 2), (-1, -1)), TrackerParams()) == pytest.approx(2 * 50.0)
    assert match_cost(pred, _obs((5, 6), (3, 3)), p) == pytest.approx(5.0)


def test_match_cost_zero_velocity_conventions():
    p = TrackerParams(alpha1=0.0, alpha2=1.0)
    assert match_cost(_track([0, 0, 0, 0]), _obs((0, 0), (0, 0)), p) == 0.0
    assert match_cost(_track([0, 0, 0, 0]), _obs((0, 0), (1, 0)), p) == 1.0
    assert match_cost(_track([0, 0, 2, 0]), _obs((0, 0), (0, 0)), p) == 1.0


def test_assign_examples():
    assert assign([[3.0]], 100) == ([(0, 0)], [], [])
    matches, lt, ld = assign([[1, 10], [10, 1]], 100)
    assert sorted(matches) == [(0, 0), (1, 1)] and lt == [] and ld == []
    assert assign([[200, 300], [400, 500]], 100) == ([], [0, 1], [0, 1])
    assert assign(np.zeros((0, 3)), 1) == ([], [], [0, 1, 2])
    with pytest.raises(ValueError):
        assign([[np.nan]], 1)


def test_assign_rectangular():
    matches, lt, ld = assign([[5, 1, 9]], 100)
    assert matches == [(0, 1)] and lt == [] and ld == [0, 2]
    matches, lt, ld = assign([[5], [1], [9]], 100)
    assert matches == [(1, 0)] and lt == [0, 2] and ld == []


def test_assign_gating_splits_costly_pair():
    matches, lt, ld = assign([[1, 200], [200, 150]], 100)
    assert matches == [(0, 0)] and lt == [1] and ld == [1]


def test_assign_lexicographic_tie_break():
    assert assign(np.ones((3, 3)), 100)[0] == [(0, 0), (1, 1), (2, 2)]
    assert assign([[1, 1, 5], [1, 1, 5]], 100)[0] == [(0, 0), (1, 1)]
    # ties between matching row 0 and leaving it unmatched: the detection wins
    assert assign([[0.0], [0.0]], 100)[0] == [(0, 0)]


def _pre_gate_total(c, matches):
    return sum(c[i][j] for i, j in sorted(matches))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda m: st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (m, n), elements=st.floats(0, 100, allow_nan=False)))))
def test_assign_is_optimal(c):
    matches, lt, ld = assign(c, np.inf)
    assert len(matches) == min(c.shape)
    assert _pre_gate_total(c.tolist(), matches) == oracles.min_assignment_cost(c.tolist())


def test_assign_tie_break_is_lexicographic_minimum():
    rng = np.random.default_rng(7)
    for _ in range(200):
        m, n = map(int, rng.integers(1, 5, size=2))
        c = rng.integers(0, 3, size=(m, n)).astype(float)
        best = oracles.min_assignment_cost(c.tolist())
        candidates = []
        for cols in itertools.permutations(list(range(n)) + [None] * m, m):
            used = [j for j in cols if j is not None]
            if len(used) != min(m, n) or len(set(used)) != len(used):
                continue
            if sum(c[i, j] for i, j in enumerate(cols) if j is not None) == best:
                candidates.append(tuple(n if j is None else j for j in cols))
        got = dict(assign(c, np.inf)[0])
        assert tuple(got.get(i, n) for i in range(m)) == min(candidates)


def test_gate_monotone():
    rng = np.random.default_rng(3)
    for _ in range(100):
        c = rng.uniform(0, 100, size=tuple(rng.integers(1, 6, size=2)))
        counts = [len(assign(c, g)[0]) for g in (5, 20, 50, 80, 101)]
        assert counts == sorted(counts)


# -- lifecycle -------------------------------------------------------------------


def test_step_spawns_tentative_tracks():
    obs = [_obs((10 * k, 0), unit=0) for k in range(4)]
    live, events, nid = step([], obs, TrackerParams(), 0, 0)
    assert [t.id for t in live] == [0, 1, 2, 3] and nid == 4
    assert all(t.status is Status.TENTATIVE and t.hits == 1 for t in live)
    assert [e.kind for e in events] == ["spawn"] * 4
    assert np.array_equal(live[2].state, [20, 0, 1, 0])
    assert np.array_equal(live[0].covariance, 10 * np.eye(4))


def test_unmatched_tentative_is_deleted():
    live, _, nid = step([], [_obs((0, 0))], TrackerParams(), 0, 0)
    live2, events, _ = step(live, [], TrackerParams(), nid, 1)
    assert live2 == []
    assert [(e.id, e.kind) for e in events] == [(0, "delete")]


def test_confirmation_and_max_age():
    p = TrackerParams()
    tracks, nid, kinds = [], 0, []
    for u in range(3):
        tracks, ev, nid = step(tracks, [_obs((u, 0), unit=u)], p, nid, u)
        kinds.append([e.kind for e in ev])
    assert kinds == [["spawn"], ["match"], ["match", "confirm"]]
    assert tracks[0].status is Status.CONFIRMED and tracks[0].id == 0
    for u in range(3, 6):
        tracks, ev, nid = step(tracks, [], p, nid, u)
        kinds.append([e.kind for e in ev])
    assert kinds[3:] == [["miss"], ["miss"], ["delete"]]
    assert tracks == []


def test_ids_never_reused_and_deleted_never_returned():
    rng = np.random.default_rng(5)
    tr = Tracker()
    seen_deleted = set()
    for u in range(40):
        obs = [_obs(rng.uniform(0, 300, 2), rng.normal(size=2), u) for _ in range(rng.integers(0, 4))]
        events = tr.step(obs, u)
        spawned = [e.id for e in events if e.kind == "spawn"]
        assert not set(spawned) & seen_deleted
        seen_deleted |= {e.id for e in events if e.kind == "delete"}
        assert not {t.id for t in tr.tracks} & seen_deleted
        assert all(t.status is not Status.DELETED for t in tr.tracks)
    ids = [e.id for e in tr.events if e.kind == "spawn"]
    assert len(ids) == len(set(ids))


def test_step_is_pure():
    live, _, nid = step([], [_obs((0, 0)), _obs((50, 50))], TrackerParams(), 0, 0)
    before = [(t.state.copy(), t.covariance.copy(), t.hits) for t in live]
    obs = [_obs((1, 0), unit=1)]
    a = step(live, obs, TrackerParams(), nid, 1)
    b = step(live, obs, TrackerParams(), nid, 1)
    for t, (s, c, h) in zip(live, before):
        assert np.array_equal(t.state, s) and np.array_equal(t.covariance, c) and t.hits == h
    assert [e.to_dict() for e in a[1]] == [e.to_dict() for e in b[1]]


def test_out_of_order_units():
    tr = Tracker()
    tr.step([], 3)
    with pytest.raises(ValueError):
        tr.step([], 3)
    with pytest.raises(ValueError):
        step([], [_obs((0, 0), unit=2)], TrackerParams(), 0, 4)


def test_params_validation():
    for kw in ({"gate": 0}, {"max_age": 0}, {"min_hits": 0}, {"alpha1": -1}, {"r": 0}):
        with pytest.raises(ValueError):
            TrackerParams(**kw)


# -- observations -------------------------------------------------------------------


def test_observation_from_line_examples():
    o = observation_from_line(np.array([[0, 0, 0], [10, 0, 9]]), unit_index=2)
    assert o.center == (5.0, 0.0) and o.velocity == (10.0, 0.0) and o.unit_index == 2
    o = observation_from_line(np.array([[3, 7, 4]]))
    assert o.center == (3.0, 7.0) and o.velocity == (0.0, 0.0)
    o = observation_from_line(np.array([[0, 0, 9], [10, 0, 0]]))
    assert o.velocity == (-10.0, 0.0)


def test_observation_reads_time_matrix_and_rescales():
    tm = np.zeros((2, 11), dtype=int)
    tm[0, 0], tm[0, 10] = 100, 300
    o = observation_from_line(np.array([[0, 0, -1], [10, 0, -1]]), tm)
    assert o.velocity == (10.0, 0.0)
    o = observation_from_line(np.array([[0, 0, 100], [10, 0, 300]]), unit_length=500)
    assert o.velocity == pytest.approx((25.0, 0.0))
    with pytest.raises(ValueError):
        observation_from_line(np.zeros((0, 3)))


def test_two_targets_end_to_end():
    unit = 200
    spec = SceneSpec(160, 96, 6 * unit, Background(level=100), 1.0, (
        TargetSpec(8.0, 1.0, 1.0, (8.0, 25.0), (0.12, 0.0)),
        TargetSpec(8.0, 1.0, 1.0, (150.0, 70.0), (-0.12, 0.01)),
    ), seed=9)
    tr = Tracker()
    truth = []
    for u in range(6):
        stack, gt = render(spec, u * unit, (u + 1) * unit)
        res = detect_unit(stack, TessParams(window=40))
        _, lines = extract_trajectories(
            res, HoughParams(min_votes=40, min_points=40, time_scale=0.1, inlier_tolerance=3), pre_threshold=50)
        tr.step([observation_from_line(ln, None, u, unit) for ln in lines], u)
        truth.append({k: gt.mean_center(k) for k in range(2)})
    confirmed = tr.confirmed()
    assert len(confirmed) == 2
    score = track_score(tr.reports, truth)
    assert score.id_swaps == 0
    assert all(v == 1.0 for v in score.tpr.values())
    # each identity is followed by one track id throughout
    owners = {}
    for rep, tru in zip(tr.reports, truth):
        for g, c in tru.items():
            near = [t for t, p in rep.items() if np.hypot(*np.subtract(p, c)) <= 5]
            owners.setdefault(g, set()).update(near)
    assert all(len(v) == 1 for v in owners.values())
