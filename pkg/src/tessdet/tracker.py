"""Trajectory-level multi-target tracking.

Each detection unit contributes one observation per extracted trajectory: its
pixel centroid and its displacement over the unit. A constant-velocity Kalman
filter (one step = one unit, state ``(Px, Py, Vx, Vy)``, full-state
measurement) predicts every live track, predictions are paired with
observations by the Hungarian method on a position + velocity-direction cost,
and tracks move through Tentative -> Confirmed -> Deleted.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import DegenerateInputError

__all__ = [
    "Status",
    "TrackObservation",
    "Track",
    "TrackerParams",
    "TrackEvent",
    "Tracker",
    "TRANSITION",
    "predict",
    "update",
    "match_cost",
    "cost_matrix",
    "assign",
    "step",
    "observation_from_line",
]

TRANSITION = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
MAX_CONDITION = 1e12


class Status(str, enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass(frozen=True)
class TrackObservation:
    center: tuple[float, float]
    velocity: tuple[float, float]
    unit_index: int

    @property
    def vector(self) -> np.ndarray:
        return np.array([*self.center, *self.velocity], dtype=np.float64)


@dataclass(frozen=True)
class TrackerParams:
    """Cost weights, gate and lifecycle limits.

    ``alpha2 = 50`` makes a 90 degree heading disagreement cost as much as a
    50 pixel position error.
    """

    alpha1: float = 1.0
    alpha2: float = 50.0
    gate: float = 100.0
    max_age: int = 3
    min_hits: int = 3
    q: float = 1.0
    r: float = 1.0
    initial_covariance: float = 10.0

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("cost weights must be non-negative")
        if not self.gate > 0:
            raise ValueError("gate must be positive")
        if self.max_age < 1 or self.min_hits < 1:
            raise ValueError("max_age and min_hits must be >= 1")
        if self.q < 0 or not self.r > 0 or not self.initial_covariance > 0:
            raise ValueError("noise scales must be positive (q may be 0)")


@dataclass
class Track:
    id: int
    state: np.ndarray
    covariance: np.ndarray
    status: Status = Status.TENTATIVE
    hits: int = 1
    misses: int = 0

    @property
    def position(self) -> np.ndarray:
        return self.state[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.state[2:]

    def copy(self) -> "Track":
        return replace(self, state=self.state.copy(), covariance=self.covariance.copy())


@dataclass(frozen=True)
class TrackEvent:
    unit: int
    id: int
    kind: str  # spawn, match, confirm, miss, delete
    state: tuple[float, ...]
    covariance_diagonal: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "unit": self.unit,
            "id": self.id,
            "kind": self.kind,
            "state": list(self.state),
            "covariance_diagonal": list(self.covariance_diagonal),
        }


def _symmetric(p: np.ndarray) -> np.ndarray:
    return (p + p.T) / 2


def predict(track: Track, q: float = 1.0) -> Track:
    """Advance one unit: position += velocity, covariance F P F' + qI."""
    if track.status is Status.DELETED:
        raise ValueError(f"track {track.id} is deleted")
    f = TRANSITION
    out = track.copy()
    out.state = f @ track.state
    out.covariance = _symmetric(f @ track.covariance @ f.T + q * np.eye(4))
    return out


def update(track: Track, z: TrackObservation, r: float = 1.0) -> Track:
    """Kalman correction with H = I and R = rI."""
    zv = z.vector
    s = track.covariance + r * np.eye(4)
    if np.linalg.cond(s) > MAX_CONDITION:
        raise DegenerateInputError(f"innovation covariance of track {track.id} is numerically singular")
    gain = np.linalg.solve(s.T, track.covariance.T).T  # P S^-1
    out = track.copy()
    out.state = track.state + gain @ (zv - track.state)
    out.covariance = _symmetric((np.eye(4) - gain) @ track.covariance)
    return out


def match_cost(pred: Track, obs: TrackObservation, params: TrackerParams) -> float:
    """``alpha1 * distance + alpha2 * (1 - cos(angle between velocities))``.

    Two zero velocities agree (cosine term 0); exactly one zero velocity
    counts as unrelated headings (cosine term 1).
    """
    c1 = float(np.hypot(*(np.asarray(obs.center) - pred.position)))
    v_pred = pred.velocity
    v_obs = np.asarray(obs.velocity, dtype=np.float64)
    n_pred = np.linalg.norm(v_pred)
    n_obs = np.linalg.norm(v_obs)
    if n_pred == 0 and n_obs == 0:
        c2 = 0.0
    elif n_pred == 0 or n_obs == 0:
        c2 = 1.0
    else:
        c2 = 1.0 - float(np.clip(v_pred @ v_obs / (n_pred * n_obs), -1.0, 1.0))
    return params.alpha1 * c1 + params.alpha2 * c2


def cost_matrix(tracks, observations, params: TrackerParams) -> np.ndarray:
    return np.array([[match_cost(t, o, params) for o in observations] for t in tracks]).reshape(
        len(tracks), len(observations)
    )


def _optimum(c: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(c)
    return float(c[rows, cols].sum())


def assign(costs, gate: float):
    """Minimum-cost matching of tracks (rows) to detections (columns).

    Among equally cheap matchings the one whose per-row detection indices are
    lexicographically smallest wins (an unmatched row sorts after every
    detection). Matched pairs costing more than ``gate`` are split again.
    Returns ``(matches, unmatched_tracks, unmatched_detections)``.
    """
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    m, n = c.shape
    if m == 0 or n == 0:
        return [], list(range(m)), list(range(n))
    if not np.isfinite(c).all():
        raise ValueError("cost matrix must be finite")
    # Square it with zero-cost dummies: a track on a dummy column is unmatched.
    size = max(m, n)
    sq = np.zeros((size, size))
    sq[:m, :n] = c
    best = _optimum(sq)

    work = sq.copy()
    for i in range(m):
        for j in [*range(n), None]:
            trial = work.copy()
            if j is None:
                trial[i, :n] = np.inf
            else:
                keep = trial[i, j]
                trial[i, :] = np.inf
                trial[:, j] = np.inf
                trial[i, j] = keep
            try:
                value = _optimum(trial)
            except ValueError:
                continue
            # Exact comparison: totals are summed in row order, so equal
            # matchings give bit-identical sums.
            if value <= best:
                best = value
                work = trial
                break
    rows, cols = linear_sum_assignment(work)
    matches = []
    for r, k in zip(rows, cols):
        if r < m and k < n and c[r, k] <= gate:
            matches.append((int(r), int(k)))
    matched_r = {r for r, _ in matches}
    matched_c = {k for _, k in matches}
    return (
        matches,
        [i for i in range(m) if i not in matched_r],
        [j for j in range(n) if j not in matched_c],
    )


def _event(unit: int, track: Track, kind: str) -> TrackEvent:
    return TrackEvent(unit, track.id, kind, tuple(track.state.tolist()), tuple(np.diag(track.covariance).tolist()))


def step(tracks, observations, params: TrackerParams, next_id: int, unit_index: int):
    """Advance every live track by one unit.

    Pure: inputs are not modified. Returns ``(live_tracks, events, next_id)``;
    tracks deleted in this step appear only in the events.
    """
    for o in observations:
        if o.unit_index != unit_index:
            raise ValueError(f"observation from unit {o.unit_index} passed to unit {unit_index}")
    live = [predict(t, params.q) for t in tracks if t.status is not Status.DELETED]
    costs = cost_matrix(live, observations, params)
    matches, lost, fresh = assign(costs, params.gate)
    events = []
    for ti, oi in matches:
        t = update(live[ti], observations[oi], params.r)
        t.hits += 1
        t.misses = 0
        live[ti] = t
        events.append(_event(unit_index, t, "match"))
        if t.status is Status.TENTATIVE and t.hits >= params.min_hits:
            t.status = Status.CONFIRMED
            events.append(_event(unit_index, t, "confirm"))
    for ti in lost:
        t = live[ti]
        t.misses += 1
        t.hits = 0
        if t.status is Status.TENTATIVE or t.misses >= params.max_age:
            t.status = Status.DELETED
            events.append(_event(unit_index, t, "delete"))
        else:
            events.append(_event(unit_index, t, "miss"))
    for oi in fresh:
        t = Track(next_id, observations[oi].vector, params.initial_covariance * np.eye(4))
        next_id += 1
        live.append(t)
        events.append(_event(unit_index, t, "spawn"))
    return [t for t in live if t.status is not Status.DELETED], events, next_id


@dataclass
class Tracker:
    """Stateful wrapper around :func:`step` for one sequence."""

    params: TrackerParams = field(default_factory=TrackerParams)
    tracks: list = field(default_factory=list)
    events: list = field(default_factory=list)
    next_id: int = 0
    last_unit: int | None = None
    reports: list = field(default_factory=list)

    def step(self, observations, unit_index: int) -> list[TrackEvent]:
        if self.last_unit is not None and unit_index <= self.last_unit:
            raise ValueError(f"unit {unit_index} is not after the last stepped unit {self.last_unit}")
        self.tracks, events, self.next_id = step(self.tracks, list(observations), self.params, self.next_id, unit_index)
        self.last_unit = unit_index
        self.events.extend(events)
        seen = {e.id for e in events if e.kind in ("match", "spawn")}
        self.reports.append({t.id: tuple(t.position) for t in self.tracks if t.id in seen})
        return events

    def confirmed(self) -> list[Track]:
        return [t for t in self.tracks if t.status is Status.CONFIRMED]


def observation_from_line(line, time_matrix=None, unit_index: int = 0, unit_length: int | None = None) -> TrackObservation:
    """Summarize one trajectory as a tracker observation.

    The centre is the mean inlier pixel. The velocity is the displacement
    from the earliest-T inliers to the latest-T inliers (ties averaged). With
    ``unit_length`` the displacement is rescaled to a whole unit, i.e.
    ``displacement * unit_length / (T_last - T_first)``, which is the motion
    per filter step; without it the raw displacement is returned.
    """
    pts = np.asarray(line.inliers if hasattr(line, "inliers") else line, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("trajectory has no inliers")
    xy = pts[:, :2]
    if time_matrix is not None:
        tm = np.asarray(time_matrix)
        t = tm[xy[:, 1].astype(np.int64), xy[:, 0].astype(np.int64)].astype(np.float64)
    else:
        t = pts[:, 2]
    center = xy.mean(axis=0)
    t0, t1 = t.min(), t.max()
    if t1 == t0:
        velocity = np.zeros(2)
    else:
        velocity = xy[t == t1].mean(axis=0) - xy[t == t0].mean(axis=0)
        if unit_length is not None:
            velocity = velocity * unit_length / (t1 - t0)
    return TrackObservation((float(center[0]), float(center[1])), (float(velocity[0]), float(velocity[1])), unit_index)
