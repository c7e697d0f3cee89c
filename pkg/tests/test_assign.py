"""Matching cost, top-k assignment, Hungarian oracle, head selection."""

import itertools

import numpy as np
import pytest

from colearn import (
    Anchor,
    BBox,
    Detection,
    NoHeadsError,
    ValidationError,
    assign_topk,
    hungarian_assign,
    matching_cost,
    select_regression_head,
)

import oracles


def target(x=0.0, y=0.0, w=10.0, h=10.0, image_id=0, class_id=0, score=1.0):
    return Detection(image_id, BBox(x, y, w, h), class_id, score)


def test_matching_cost_cases():
    perfect = Anchor(BBox(0, 0, 10, 10), 1.0)
    assert matching_cost(perfect, target()) == 0.0
    worst = Anchor(BBox(100, 100, 10, 10), 0.0)
    assert matching_cost(worst, target(), 1.0, 2.0) == pytest.approx(3.0)
    # score 0.8, IoU 0.5: overlap (0,0,10,10) with (0,0,10,5) pair
    half = Anchor(BBox(0, 0, 10, 5), 0.8)
    assert matching_cost(half, target(), 1.0, 2.0) == pytest.approx(1.2)
    with pytest.raises(ValidationError):
        matching_cost(perfect, target(), -1.0, 2.0)


def test_matching_cost_monotone():
    base = target()
    boxes = [BBox(0, 0, 10, 10), BBox(0, 2, 10, 10), BBox(0, 5, 10, 10)]
    for w_cls, w_reg in [(1.0, 2.0), (0.5, 0.5), (2.0, 1.0)]:
        # increasing score never increases cost
        for box in boxes:
            costs = [matching_cost(Anchor(box, s), base, w_cls, w_reg) for s in (0.1, 0.5, 0.9)]
            assert costs == sorted(costs, reverse=True)
        # increasing IoU never increases cost
        costs = [matching_cost(Anchor(box, 0.5), base, w_cls, w_reg) for box in boxes]
        assert costs == sorted(costs)


def anchors_for_costs(scores):
    """Anchors on the target box whose costs are purely score-driven."""
    return [Anchor(BBox(0, 0, 10, 10), s) for s in scores]


def test_assign_topk_example():
    # costs {0.1, 0.5, 2.0} via scores at IoU 1 with w_cls=1: score = 1-cost
    anchors = [
        Anchor(BBox(0, 0, 10, 10), 0.9),
        Anchor(BBox(0, 0, 10, 10), 0.5),
        Anchor(BBox(100, 100, 10, 10), 0.5),  # disjoint: cost 0.5+2.0
    ]
    result = assign_topk(anchors, [target()], k=2, w_cls=1.0, w_reg=1.0)
    assert result.labels == (0, 0, None)
    assert result.costs[2] is None


def test_assign_topk_saturation():
    anchors = anchors_for_costs([0.9, 0.1])
    result = assign_topk(anchors, [target()], k=5)
    assert result.labels == (0, 0)


def test_assign_static_iou():
    anchors = [
        Anchor(BBox(0, 0, 10, 6), 0.5),   # IoU 0.6
        Anchor(BBox(0, 0, 10, 4), 0.5),   # IoU 0.4
    ]
    result = assign_topk(anchors, [target()], mode="static_iou", iou_thresh=0.5)
    assert result.labels == (0, None)
    assert result.mode == "static_iou"


def test_assign_unknown_mode():
    with pytest.raises(ValidationError):
        assign_topk([], [], mode="nope")


def test_contested_anchor_goes_to_cheapest_label():
    # one anchor overlapping two targets, nearer the second
    a = Anchor(BBox(0, 0, 10, 10), 1.0)
    t1 = target(0, 5)   # IoU 0.5 -> cost 1.0 (w_reg=2 -> 1.0)
    t2 = target(0, 0)   # IoU 1.0 -> cost 0
    result = assign_topk([a], [t1, t2], k=1)
    assert result.labels == (1,)


def test_tie_breaks_lower_label_then_anchor():
    a0 = Anchor(BBox(0, 0, 10, 10), 0.5)
    a1 = Anchor(BBox(0, 0, 10, 10), 0.5)
    t0, t1 = target(), target()
    result = assign_topk([a0, a1], [t0, t1], k=1)
    # equal costs everywhere: label 0 takes anchor 0, label 1 takes anchor 1
    assert result.labels == (0, 1)


def brute_force_check(anchors, targets, k, w_cls, w_reg):
    result = assign_topk(anchors, targets, k=k, w_cls=w_cls, w_reg=w_reg)
    # each label holds at most k positives
    for li in range(len(targets)):
        assert len(result.positives(li)) <= k
    # optimality after cross-label claiming: no background anchor is
    # strictly cheaper than an assigned anchor for the same label
    for li, tgt in enumerate(targets):
        assigned = result.positives(li)
        if not assigned:
            continue
        max_assigned = max(matching_cost(anchors[ai], tgt, w_cls, w_reg) for ai in assigned)
        for ai, lab in enumerate(result.labels):
            if lab is None:
                assert matching_cost(anchors[ai], tgt, w_cls, w_reg) >= max_assigned - 1e-12
    # fewer than k positives only when anchors ran out
    if any(len(result.positives(li)) < k for li in range(len(targets))):
        assert all(lab is not None for lab in result.labels)
    return result


def test_assign_topk_optimality_exhaustive():
    rng = np.random.default_rng(777)
    for n_anchors in range(1, 7):
        for n_labels in range(1, 4):
            for k in (1, 2, 3):
                for _ in range(6):
                    anchors = [
                        Anchor(
                            BBox(float(rng.uniform(0, 40)), float(rng.uniform(0, 40)), 10, 10),
                            float(rng.uniform(0, 1)),
                        )
                        for _ in range(n_anchors)
                    ]
                    targets = [
                        target(float(rng.uniform(0, 40)), float(rng.uniform(0, 40)))
                        for _ in range(n_labels)
                    ]
                    brute_force_check(anchors, targets, k, 1.0, 2.0)
                # tie-heavy instance: identical anchors
                anchors = [Anchor(BBox(0, 0, 10, 10), 0.5) for _ in range(n_anchors)]
                targets = [target() for _ in range(n_labels)]
                brute_force_check(anchors, targets, k, 1.0, 2.0)


def test_weight_scaling_leaves_assignment_unchanged():
    rng = np.random.default_rng(4242)
    for _ in range(30):
        anchors = [
            Anchor(
                BBox(float(rng.uniform(0, 30)), float(rng.uniform(0, 30)), 10, 10),
                float(rng.uniform(0, 1)),
            )
            for _ in range(5)
        ]
        targets = [target(float(rng.uniform(0, 30)), float(rng.uniform(0, 30))) for _ in range(2)]
        base = assign_topk(anchors, targets, k=2, w_cls=1.0, w_reg=2.0)
        scaled = assign_topk(anchors, targets, k=2, w_cls=3.5, w_reg=7.0)
        assert base.labels == scaled.labels


def test_select_regression_head():
    label = target()
    heads = (BBox(0, 0, 10, 9), BBox(0, 0, 10, 6))  # IoUs 0.9, 0.6
    assert select_regression_head(Anchor(BBox(0, 0, 10, 10), 0.5, heads), label) == 0
    single = (BBox(0, 0, 10, 10),)
    assert select_regression_head(Anchor(BBox(0, 0, 10, 10), 0.5, single), label) == 0
    equal = (BBox(0, 0, 10, 8), BBox(0, 2, 10, 8))  # both IoU 0.8... first wins
    assert select_regression_head(Anchor(BBox(0, 0, 10, 10), 0.5, equal), label) == 0
    with pytest.raises(NoHeadsError):
        select_regression_head(Anchor(BBox(0, 0, 10, 10), 0.5), label)


def test_select_head_order_invariance():
    label = target()
    heads = [BBox(0, 0, 10, 9), BBox(0, 0, 10, 6), BBox(0, 0, 10, 3)]
    for perm in itertools.permutations(range(3)):
        permuted = tuple(heads[i] for i in perm)
        chosen = select_regression_head(Anchor(BBox(0, 0, 10, 10), 0.5, permuted), label)
        assert permuted[chosen] == heads[0]


def test_hungarian_examples():
    assert hungarian_assign([[1, 2], [2, 1]]) == hungarian_assign([[1, 2], [2, 1]])
    m = hungarian_assign([[1, 2], [2, 1]])
    assert m.row_to_col == (0, 1) and m.total_cost == 2.0
    m = hungarian_assign([[4, 1], [2, 3]])
    assert m.row_to_col == (1, 0) and m.total_cost == 3.0
    m = hungarian_assign([[0, 0, 0], [0, 0, 0], [0, 0, 0]])
    assert m.row_to_col == (0, 1, 2) and m.total_cost == 0.0


def test_hungarian_rejects_bad_input():
    with pytest.raises(ValidationError):
        hungarian_assign([[1.0, float("inf")]])
    with pytest.raises(ValidationError):
        hungarian_assign([[1.0, 2.0], [1.0]])


def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(2024)
    for trial in range(120):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 6))
        if trial % 3 == 0:
            matrix = rng.integers(0, 4, size=(n, m)).astype(float)  # tie-heavy
        else:
            matrix = rng.uniform(0, 10, size=(n, m))
        rows = [list(map(float, row)) for row in matrix]
        got = hungarian_assign(rows)
        want_vector, want_total = oracles.hungarian(rows)
        assert got.row_to_col == want_vector
        assert got.total_cost == want_total


def test_hungarian_rectangular_rows_exceed_cols():
    matrix = [[5.0], [1.0], [3.0]]
    got = hungarian_assign(matrix)
    want_vector, want_total = oracles.hungarian(matrix)
    assert got.row_to_col == want_vector == (None, 0, None)
    assert got.total_cost == want_total == 1.0
