"""Cost-based anchor assignment and an optimal-matching oracle.

Anchors are matched to supervision targets by a linear cost in
classification confidence and localization overlap. The top-k mode
replaces the static IoU-threshold baseline: each target takes its k
cheapest anchors, with contested anchors going to their cheapest target.
A small exact Hungarian solver is included as the optimality oracle for
tests and diagnostics; it targets small matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import NoHeadsError, ValidationError
from .model import BBox, Detection, iou


@dataclass(frozen=True)
class Anchor:
    """Candidate box with a class confidence and optional per-head boxes.

    The score is the anchor's confidence for the class of the target it
    is compared against; callers group anchors and targets by class.
    """

    bbox: BBox
    score: float
    heads: tuple[BBox, ...] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score out of [0,1]: {self.score}")
        if self.heads is not None and len(self.heads) == 0:
            raise ValidationError("head list present but empty")


def matching_cost(anchor: Anchor, label: Detection, w_cls: float = 1.0, w_reg: float = 2.0) -> float:
    """w_cls*(1 - score) + w_reg*(1 - IoU); zero for a perfect match."""
    if w_cls < 0 or w_reg < 0:
        raise ValidationError(f"weights must be non-negative: ({w_cls}, {w_reg})")
    return w_cls * (1.0 - anchor.score) + w_reg * (1.0 - iou(anchor.bbox, label.bbox))


@dataclass(frozen=True)
class Assignment:
    """Per-anchor target index (None = background) with pair costs."""

    labels: tuple[int | None, ...]
    costs: tuple[float | None, ...]
    mode: str

    def positives(self, label_index: int) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab == label_index]

    def to_records(self) -> list[dict]:
        """Dump form: one {anchor_index, label_index|"bg", cost, mode} per anchor."""
        return [
            {
                "anchor_index": i,
                "label_index": lab if lab is not None else "bg",
                "cost": cost,
                "mode": self.mode,
            }
            for i, (lab, cost) in enumerate(zip(self.labels, self.costs))
        ]


def _as_detections(labels) -> Sequence[Detection]:
    return getattr(labels, "detections", labels)


def assign_topk(
    anchors: Sequence[Anchor],
    labels,
    k: int = 3,
    mode: str = "cost_topk",
    w_cls: float = 1.0,
    w_reg: float = 2.0,
    iou_thresh: float = 0.5,
) -> Assignment:
    """Assign anchors to targets; everything unassigned is background.

    cost_topk: sweep all (target, anchor) pairs in ascending cost order,
    assigning an anchor to a target while the target holds fewer than k
    positives and the anchor is free. A contested anchor therefore goes
    to its cheapest target; ties break on lower target index, then lower
    anchor index. Targets receive fewer than k positives only when
    anchors run out.

    static_iou: the baseline this replaces - an anchor is positive for
    its max-IoU target when that IoU reaches iou_thresh.
    """
    targets = _as_detections(labels)
    out_labels: list[int | None] = [None] * len(anchors)
    out_costs: list[float | None] = [None] * len(anchors)

    if mode == "cost_topk":
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        pairs = sorted(
            (matching_cost(anchor, target, w_cls, w_reg), li, ai)
            for li, target in enumerate(targets)
            for ai, anchor in enumerate(anchors)
        )
        taken: dict[int, int] = {}
        for cost, li, ai in pairs:
            if out_labels[ai] is not None or taken.get(li, 0) >= k:
                continue
            out_labels[ai] = li
            out_costs[ai] = cost
            taken[li] = taken.get(li, 0) + 1
    elif mode == "static_iou":
        for ai, anchor in enumerate(anchors):
            best_iou = 0.0
            best_li = None
            for li, target in enumerate(targets):
                overlap = iou(anchor.bbox, target.bbox)
                if overlap > best_iou:
                    best_iou = overlap
                    best_li = li
            if best_li is not None and best_iou >= iou_thresh:
                out_labels[ai] = best_li
                out_costs[ai] = matching_cost(anchor, targets[best_li], w_cls, w_reg)
    else:
        raise ValidationError(f"unknown assignment mode {mode!r}")

    return Assignment(tuple(out_labels), tuple(out_costs), mode)


def select_regression_head(anchor: Anchor, label: Detection) -> int:
    """Index of the head whose box best overlaps the target; ties -> lowest."""
    if anchor.heads is None:
        raise NoHeadsError("anchor has no regression heads")
    best_index = 0
    best_iou = -1.0
    for i, head in enumerate(anchor.heads):
        overlap = iou(head, label.bbox)
        if overlap > best_iou:
            best_iou = overlap
            best_index = i
    return best_index


@dataclass(frozen=True)
class Matching:
    """Result of hungarian_assign: per-row column (None = unmatched)."""

    row_to_col: tuple[int | None, ...]
    total_cost: float


def _optimal_value(cost: list[list[float]]) -> float:
    """Minimum total cost of matching min(n, m) row/column pairs.

    Potentials-based Hungarian algorithm, O(n^2 m) with n <= m.
    """
    n = len(cost)
    if n == 0 or len(cost[0]) == 0:
        return 0.0
    m = len(cost[0])
    if n > m:
        cost = [[cost[i][j] for i in range(n)] for j in range(m)]
        n, m = m, n
    INF = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (m + 1)
        way = [0] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return sum(cost[p[j] - 1][j - 1] for j in range(1, m + 1) if p[j])


def hungarian_assign(costs: Sequence[Sequence[float]]) -> Matching:
    """Optimal one-to-one matching of min(n, m) pairs.

    Among all optimal matchings, returns the lexicographically smallest
    row->column vector, comparing unmatched (None) as larger than any
    column index. Intended as an exact oracle for small instances; the
    tie-break is resolved by re-solving forced subproblems, so cost grows
    quickly with size.
    """
    matrix = [list(map(float, row)) for row in costs]
    n = len(matrix)
    if n == 0:
        return Matching((), 0.0)
    m = len(matrix[0])
    for i, row in enumerate(matrix):
        if len(row) != m:
            raise ValidationError(f"cost matrix row {i} has length {len(row)}, expected {m}")
        for value in row:
            if not math.isfinite(value):
                raise ValidationError("cost matrix entries must be finite")
    if m == 0:
        return Matching((None,) * n, 0.0)

    def sub_value(next_row: int, used: set[int]) -> float:
        rows = [[matrix[i][j] for j in range(m) if j not in used] for i in range(next_row, n)]
        if not rows or not rows[0]:
            return 0.0
        return _optimal_value(rows)

    best_total = _optimal_value(matrix)
    tol = 1e-9 + 1e-12 * abs(best_total)
    used: set[int] = set()
    acc = 0.0
    pairs_left = min(n, m)
    result: list[int | None] = []
    for i in range(n):
        chosen = None
        if pairs_left > 0:
            for c in range(m):
                if c in used:
                    continue
                forced = {*used, c}
                if acc + matrix[i][c] + sub_value(i + 1, forced) <= best_total + tol:
                    chosen = c
                    break
        result.append(chosen)
        if chosen is not None:
            used.add(chosen)
            acc += matrix[i][chosen]
            pairs_left -= 1
    total = sum(matrix[i][c] for i, c in enumerate(result) if c is not None)
    return Matching(tuple(result), total)
