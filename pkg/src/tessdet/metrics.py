"""Detection and tracking scores: pixel TPR/FPR, ROC/AUC, SCRG, BSF, track matching."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import DegenerateInputError, FrameStack
from .synth import GroundTruth, scr

__all__ = [
    "EvalReport",
    "TrackScore",
    "tpr_fpr",
    "roc_auc",
    "tpr_at_fpr",
    "scr_in",
    "scr_out",
    "sigma_in",
    "sigma_out",
    "scrg",
    "bsf",
    "track_score",
]


def _check_masks(pred: np.ndarray, truth: np.ndarray) -> None:
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if not truth.any() or truth.all():
        raise DegenerateInputError("truth mask needs at least one target and one background pixel")


def _drop(values: np.ndarray, truth: np.ndarray, ignore) -> tuple[np.ndarray, np.ndarray]:
    if ignore is None:
        return values, truth
    keep = ~np.asarray(ignore, dtype=bool)
    return values[keep], truth[keep]


def tpr_fpr(predicted_mask, truth_mask, ignore=None) -> tuple[float, float]:
    """Pixel-count TPR and FPR. Pixels flagged in ``ignore`` count as neither class."""
    pred = np.asarray(predicted_mask, dtype=bool)
    truth = np.asarray(truth_mask, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    pred, truth = _drop(pred, truth, ignore)
    _check_masks(pred, truth)
    tp = np.count_nonzero(pred & truth)
    fp = np.count_nonzero(pred & ~truth)
    return tp / np.count_nonzero(truth), fp / np.count_nonzero(~truth)


def roc_auc(raw_p, truth_mask, ignore=None) -> tuple[np.ndarray, float]:
    """ROC over every distinct score (a pixel is positive when ``score >= threshold``).

    Returns ``(roc, auc)`` with ``roc`` an ``(n, 2)`` array of ``(fpr, tpr)``
    rows ordered from threshold ``+inf`` down to ``-inf``; the area uses the
    trapezoid rule, so tied scores contribute a diagonal segment.
    """
    scores = np.asarray(raw_p, dtype=np.float64)
    truth = np.asarray(truth_mask, dtype=bool)
    if scores.shape != truth.shape:
        raise ValueError(f"shape mismatch: {scores.shape} vs {truth.shape}")
    scores, truth = _drop(scores.ravel(), truth.ravel(), None if ignore is None else np.ravel(ignore))
    _check_masks(scores, truth)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    lab = truth[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(lab)[ends]
    fp = (ends + 1) - tp
    tpr = np.r_[0.0, tp / lab.sum(), 1.0]
    fpr = np.r_[0.0, fp / (~lab).sum(), 1.0]
    roc = np.column_stack([fpr, tpr])
    auc = float(np.trapezoid(tpr, fpr))
    return roc, min(max(auc, 0.0), 1.0)


def tpr_at_fpr(raw_p, truth_mask, max_fpr: float, ignore=None) -> tuple[float, float]:
    """Best TPR of any plain threshold whose FPR stays at or below ``max_fpr``; also returns that threshold."""
    roc, _ = roc_auc(raw_p, truth_mask, ignore)
    scores = np.asarray(raw_p, dtype=np.float64).ravel()
    if ignore is not None:
        scores = scores[~np.ravel(np.asarray(ignore, dtype=bool))]
    thresholds = np.r_[np.inf, np.unique(scores)[::-1], -np.inf]
    ok = np.flatnonzero(roc[:, 0] <= max_fpr)
    best = ok[np.argmax(roc[ok, 1])]
    return float(roc[best, 1]), float(thresholds[best])


def _frame_masks(truth) -> list[np.ndarray]:
    if isinstance(truth, GroundTruth):
        return [truth.frame_mask(i) for i in range(truth.frames)]
    return [np.asarray(m, dtype=bool) for m in truth]


def _output_mask(truth) -> np.ndarray:
    if isinstance(truth, GroundTruth):
        return truth.trajectory_mask()
    masks = _frame_masks(truth)
    out = np.zeros_like(masks[0])
    for m in masks:
        out |= m
    return out


def scr_in(stack: FrameStack, truth) -> float:
    """Mean per-frame SCR of the input over frames containing a target."""
    vals = [scr(stack.data[i], m, ~m) for i, m in enumerate(_frame_masks(truth)) if m.any()]
    if not vals:
        raise DegenerateInputError("SCR_in undefined: no frame contains a target")
    return float(np.mean(vals))


def scr_out(output_p, truth) -> float:
    """SCR of a detection map, with the union of the target masks as target region."""
    m = _output_mask(truth)
    return scr(output_p, m, ~m)


def sigma_in(stack: FrameStack, truth) -> float:
    """Mean per-frame background standard deviation of the input."""
    return float(np.mean([stack.data[i][~m].astype(np.float64).std() for i, m in enumerate(_frame_masks(truth))]))


def sigma_out(output_p, truth) -> float:
    return float(np.asarray(output_p, dtype=np.float64)[~_output_mask(truth)].std())


def scrg(input_stack: FrameStack, output_p, truth) -> float:
    """SCR gain: output SCR over mean input SCR.

    ``truth`` is a :class:`GroundTruth` or a sequence of per-frame target
    masks; the output's target region is the union of those masks.
    """
    s_in = scr_in(input_stack, truth)
    if s_in == 0:
        raise DegenerateInputError("SCRG undefined: input SCR is zero")
    return scr_out(output_p, truth) / s_in


def bsf(input_stack: FrameStack, output_p, truth) -> float:
    """Background suppression factor: mean input background std over output background std."""
    s_out = sigma_out(output_p, truth)
    if s_out == 0:
        raise DegenerateInputError("BSF undefined: output background standard deviation is zero")
    return sigma_in(input_stack, truth) / s_out


@dataclass
class TrackScore:
    tpr: dict[int, float]
    fpr: dict[int, float]
    overall_fpr: float
    id_swaps: int
    swaps_by_identity: dict[int, int]


def track_score(reported, truth, match_radius: float = 5.0) -> TrackScore:
    """Score per-unit track reports against per-unit true centres.

    ``reported[u]`` maps track id -> (x, y) for unit ``u``; ``truth[u]`` maps
    truth identity -> (x, y) for targets alive in that unit. In each unit,
    an identity keeps the track it matched in the previous unit while that
    track is still within ``match_radius``; the remaining tracks and
    identities are paired one-to-one by minimum total distance, dropping pairs
    farther apart than ``match_radius``. Per identity,
    TPR = matched units / alive units. Per track, FPR = unmatched reports /
    reports. An identity swap is counted whenever an identity's matched track
    id differs from the id it last matched.
    """
    if len(reported) != len(truth):
        raise ValueError("reported and truth must cover the same units")
    alive = {}
    hits = {}
    n_reports = {}
    n_false = {}
    last_id = {}
    swaps = {}
    for rep, tru in zip(reported, truth):
        tids = list(rep)
        gids = list(tru)
        for g in gids:
            alive[g] = alive.get(g, 0) + 1
            hits.setdefault(g, 0)
            swaps.setdefault(g, 0)
        for t in tids:
            n_reports[t] = n_reports.get(t, 0) + 1
            n_false.setdefault(t, 0)
        pairs = []
        # Correspondences from the previous unit survive while still in range.
        for g in gids:
            t = last_id.get(g)
            if t in rep and np.hypot(*np.subtract(rep[t], tru[g])) <= match_radius:
                pairs.append((t, g))
        kept_t = {t for t, _ in pairs}
        kept_g = {g for _, g in pairs}
        free_t = [t for t in tids if t not in kept_t]
        free_g = [g for g in gids if g not in kept_g]
        if free_t and free_g:
            cost = np.array([[np.hypot(*np.subtract(rep[t], tru[g])) for g in free_g] for t in free_t])
            rows, cols = linear_sum_assignment(cost)
            pairs += [(free_t[r], free_g[c]) for r, c in zip(rows, cols) if cost[r, c] <= match_radius]
        matched_tracks = set()
        for t, g in pairs:
            matched_tracks.add(t)
            hits[g] += 1
            if g in last_id and last_id[g] != t:
                swaps[g] += 1
            last_id[g] = t
        for t in tids:
            if t not in matched_tracks:
                n_false[t] += 1
    tpr = {g: hits[g] / alive[g] for g in alive}
    fpr = {t: n_false[t] / n_reports[t] for t in n_reports}
    total = sum(n_reports.values())
    overall = sum(n_false.values()) / total if total else 0.0
    return TrackScore(tpr, fpr, overall, sum(swaps.values()), swaps)


@dataclass
class EvalReport:
    """Evaluation summary; ``to_dict`` gives the JSON-ready form."""

    tpr: float | None = None
    fpr: float | None = None
    roc: list[tuple[float, float]] = field(default_factory=list)
    auc: float | None = None
    scrg: float | None = None
    bsf: float | None = None
    track_tpr: dict[int, float] = field(default_factory=dict)
    track_fpr: dict[int, float] = field(default_factory=dict)
    id_swaps: int | None = None

    def __post_init__(self):
        if self.auc is not None and not 0 <= self.auc <= 1:
            raise ValueError("auc must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["track_tpr"] = {str(k): v for k, v in self.track_tpr.items()}
        d["track_fpr"] = {str(k): v for k, v in self.track_fpr.items()}
        d["roc"] = [list(p) for p in self.roc]
        return d
