"""Dynamic pseudo-label thresholds and score filtering.

Per-class detection scores are modeled as a two-component 1-D Gaussian
mixture (reliable vs unreliable populations); the threshold is placed at
the posterior crossover of the high-mean component, clamped to a
configured band and smoothed across iterations. Filtering keeps
detections above their class threshold and applies class-wise greedy NMS
within each image.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateInputError, ValidationError
from .model import Detection, iou

VARIANCE_FLOOR = 1e-6
DEFAULT_THRESHOLD_FLOOR = 0.30
DEFAULT_THRESHOLD_CAP = 0.95
DEFAULT_SMOOTHING_RATE = 0.9
DEFAULT_INITIAL_THRESHOLD = 0.9
DEFAULT_WINDOW_SIZE = 4096


@dataclass(frozen=True)
class GmmModel:
    """Two-component 1-D Gaussian mixture, components sorted by mean."""

    weights: tuple[float, float]
    means: tuple[float, float]
    variances: tuple[float, float]
    log_likelihood: float
    ll_trace: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        w1, w2 = self.weights
        if abs(w1 + w2 - 1.0) > 1e-9 or w1 < 0 or w2 < 0:
            raise ValidationError(f"mixture weights must be non-negative and sum to 1: {self.weights}")
        if self.means[0] > self.means[1]:
            raise ValidationError(f"mixture means must be sorted: {self.means}")
        if any(v < VARIANCE_FLOOR for v in self.variances):
            raise ValidationError(f"mixture variances below floor {VARIANCE_FLOOR}: {self.variances}")


def fit_gmm(scores: Sequence[float], max_iters: int = 100, tol: float = 1e-6) -> GmmModel:
    """EM-fit a two-component mixture to scores in [0, 1].

    Initialization is deterministic: means at the 25th/75th percentiles,
    equal weights, pooled variance. Stops when the log-likelihood gain
    falls below tol or after max_iters updates. Raises
    DegenerateInputError for fewer than 4 scores or all-equal scores;
    callers should fall back to their previous threshold.
    """
    arr = np.asarray(scores, dtype=float)
    if arr.ndim != 1:
        raise ValidationError("scores must be one-dimensional")
    if arr.size < 4:
        raise DegenerateInputError(f"need at least 4 scores, got {arr.size}")
    if np.all(arr == arr[0]):
        raise DegenerateInputError("all scores identical")

    mu = np.percentile(arr, [25.0, 75.0]).astype(float)
    var = np.full(2, max(float(arr.var()), VARIANCE_FLOOR))
    w = np.array([0.5, 0.5])

    def log_weighted(w, mu, var):
        return (
            np.log(w)[None, :]
            - 0.5 * np.log(2.0 * np.pi * var)[None, :]
            - (arr[:, None] - mu[None, :]) ** 2 / (2.0 * var[None, :])
        )

    def log_likelihood(lw):
        mx = lw.max(axis=1, keepdims=True)
        return float((mx[:, 0] + np.log(np.exp(lw - mx).sum(axis=1))).sum())

    lw = log_weighted(w, mu, var)
    trace = [log_likelihood(lw)]
    for _ in range(max_iters):
        # E-step: responsibilities from the current parameters.
        mx = lw.max(axis=1, keepdims=True)
        lse = mx + np.log(np.exp(lw - mx).sum(axis=1, keepdims=True))
        resp = np.exp(lw - lse)
        # M-step.
        nk = np.maximum(resp.sum(axis=0), 1e-12)
        w = np.clip(nk / arr.size, 1e-12, None)
        w = w / w.sum()
        mu = (resp * arr[:, None]).sum(axis=0) / nk
        var = np.maximum((resp * (arr[:, None] - mu[None, :]) ** 2).sum(axis=0) / nk, VARIANCE_FLOOR)
        lw = log_weighted(w, mu, var)
        trace.append(log_likelihood(lw))
        if trace[-1] - trace[-2] < tol:
            break

    order = np.argsort(mu, kind="stable")
    w, mu, var = w[order], mu[order], var[order]
    return GmmModel(
        weights=(float(w[0]), float(w[1])),
        means=(float(mu[0]), float(mu[1])),
        variances=(float(var[0]), float(var[1])),
        log_likelihood=trace[-1],
        ll_trace=tuple(trace),
    )


def _log_posterior_gap(x: float, gmm: GmmModel) -> float:
    """log of (high-component likelihood) minus log of (low-component likelihood)."""
    (w1, w2), (m1, m2), (v1, v2) = gmm.weights, gmm.means, gmm.variances
    hi = math.log(max(w2, 1e-300)) - 0.5 * math.log(2.0 * math.pi * v2) - (x - m2) ** 2 / (2.0 * v2)
    lo = math.log(max(w1, 1e-300)) - 0.5 * math.log(2.0 * math.pi * v1) - (x - m1) ** 2 / (2.0 * v1)
    return hi - lo


def dynamic_threshold(
    gmm: GmmModel,
    floor: float = DEFAULT_THRESHOLD_FLOOR,
    cap: float = DEFAULT_THRESHOLD_CAP,
    tol: float = 1e-6,
) -> float:
    """Score where the high-mean component's posterior crosses 0.5.

    Found by bisection on [mean1, mean2]; when no crossing exists there,
    the midpoint is used. The result is clamped to [floor, cap].
    """
    lo, hi = gmm.means
    if hi - lo < tol:
        t = 0.5 * (lo + hi)
    else:
        g_lo = _log_posterior_gap(lo, gmm)
        g_hi = _log_posterior_gap(hi, gmm)
        if g_lo == 0.0:
            t = lo
        elif g_hi == 0.0:
            t = hi
        elif (g_lo > 0.0) == (g_hi > 0.0):
            t = 0.5 * (lo + hi)
        else:
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                g_mid = _log_posterior_gap(mid, gmm)
                if g_mid == 0.0:
                    lo = hi = mid
                elif (g_mid > 0.0) == (g_lo > 0.0):
                    lo = mid
                else:
                    hi = mid
            t = 0.5 * (lo + hi)
    return min(max(t, floor), cap)


def smooth_threshold(prev: float, new: float, rate: float = DEFAULT_SMOOTHING_RATE) -> float:
    """Exponential smoothing: rate*prev + (1-rate)*new."""
    if not 0.0 <= rate <= 1.0:
        raise ValidationError(f"smoothing rate out of [0,1]: {rate}")
    return rate * prev + (1.0 - rate) * new


@dataclass
class ThresholdState:
    """Per-class smoothed thresholds, clamped to [floor, cap].

    Single-writer: one state per filtering stream; updates mutate in
    place. Classes never updated report the initial threshold.
    """

    floor: float = DEFAULT_THRESHOLD_FLOOR
    cap: float = DEFAULT_THRESHOLD_CAP
    rate: float = DEFAULT_SMOOTHING_RATE
    initial: float = DEFAULT_INITIAL_THRESHOLD
    iteration: int = 0
    thresholds: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.floor <= self.cap:
            raise ValidationError(f"invalid threshold band [{self.floor}, {self.cap}]")
        if not 0.0 <= self.rate <= 1.0:
            raise ValidationError(f"smoothing rate out of [0,1]: {self.rate}")
        self.initial = min(max(self.initial, self.floor), self.cap)

    def threshold(self, class_id: int) -> float:
        return self.thresholds.get(class_id, self.initial)

    def update(self, class_id: int, raw: float | None) -> float:
        """Smooth toward a clamped raw threshold; None keeps the previous value."""
        prev = self.threshold(class_id)
        if raw is None:
            new_value = prev
        else:
            clamped = min(max(raw, self.floor), self.cap)
            new_value = smooth_threshold(prev, clamped, self.rate)
        self.thresholds[class_id] = new_value
        return new_value


@dataclass
class ScoreWindow:
    """Rolling per-class score window feeding the mixture fits."""

    maxlen: int = DEFAULT_WINDOW_SIZE
    _scores: dict[int, deque] = field(default_factory=dict)

    def push(self, class_id: int, values: Iterable[float]) -> None:
        window = self._scores.get(class_id)
        if window is None:
            window = self._scores[class_id] = deque(maxlen=self.maxlen)
        window.extend(values)

    def scores(self, class_id: int) -> list[float]:
        return list(self._scores.get(class_id, ()))

    def class_ids(self) -> list[int]:
        return sorted(self._scores)


def update_thresholds(
    state: ThresholdState,
    scores_by_class: Mapping[int, Sequence[float]],
    max_iters: int = 100,
    tol: float = 1e-6,
) -> dict[int, float | None]:
    """Fit per-class mixtures, update the state, advance the iteration.

    Returns the raw (pre-smoothing) threshold per class, None where the
    fit was degenerate and the previous threshold was kept.
    """
    raw_thresholds: dict[int, float | None] = {}
    for class_id in sorted(scores_by_class):
        try:
            gmm = fit_gmm(scores_by_class[class_id], max_iters=max_iters, tol=tol)
            raw = dynamic_threshold(gmm, floor=state.floor, cap=state.cap)
        except DegenerateInputError:
            raw = None
        raw_thresholds[class_id] = raw
        state.update(class_id, raw)
    state.iteration += 1
    return raw_thresholds


@dataclass(frozen=True)
class PseudoLabelSet:
    """Detections promoted to supervision targets, plus provenance."""

    detections: tuple[Detection, ...]
    iteration: int
    thresholds: Mapping[int, float]

    def count_for(self, class_id: int) -> int:
        return sum(1 for d in self.detections if d.class_id == class_id)


def _greedy_nms(dets: list[Detection], nms_iou: float) -> list[Detection]:
    ordered = sorted(dets, key=lambda d: (-d.score, d.bbox.x, d.bbox.y))
    kept: list[Detection] = []
    for det in ordered:
        if all(iou(det.bbox, other.bbox) <= nms_iou for other in kept):
            kept.append(det)
    return kept


def filter_pseudo_labels(
    dets: Sequence[Detection],
    state: ThresholdState,
    nms_iou: float = 0.5,
) -> PseudoLabelSet:
    """Keep detections above their class threshold, then class-wise NMS.

    NMS is greedy in descending score order within each (image, class)
    group, with deterministic tie-breaks on (score desc, x asc, y asc).
    """
    if not 0.0 < nms_iou < 1.0:
        raise ValidationError(f"nms_iou out of (0,1): {nms_iou}")
    groups: dict[tuple[int, int], list[Detection]] = {}
    for det in dets:
        if det.score >= state.threshold(det.class_id):
            groups.setdefault((det.image_id, det.class_id), []).append(det)
    kept: list[Detection] = []
    for key in sorted(groups):
        kept.extend(_greedy_nms(groups[key], nms_iou))
    thresholds = {det.class_id: state.threshold(det.class_id) for det in dets}
    return PseudoLabelSet(tuple(kept), state.iteration, thresholds)


@dataclass(frozen=True)
class ThresholdTraceRecord:
    """One line of the threshold trace (JSONL external format)."""

    iteration: int
    class_name: str
    raw_threshold: float | None
    smoothed_threshold: float
    n_scores: int
    kept_count: int

    def to_obj(self) -> dict:
        return {
            "iteration": self.iteration,
            "class": self.class_name,
            "raw_threshold": self.raw_threshold,
            "smoothed_threshold": self.smoothed_threshold,
            "n_scores": self.n_scores,
            "kept_count": self.kept_count,
        }


def trace_to_jsonl(records: Iterable[ThresholdTraceRecord]) -> str:
    """Serialize trace records as JSON lines."""
    return "".join(json.dumps(r.to_obj(), sort_keys=True) + "\n" for r in records)
