"""Box geometry: hand-computed IoU vectors and fuzzed invariants."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from colearn import BBox, ValidationError, iou

# Hand-computed by inclusion-exclusion on (x, y, w, h) boxes.
IOU_VECTORS = [
    ((0, 0, 10, 10), (0, 0, 10, 10), 1.0),
    ((0, 0, 10, 10), (20, 20, 5, 5), 0.0),
    ((0, 0, 10, 10), (5, 5, 10, 10), 25 / 175),
    ((0, 0, 10, 10), (10, 0, 10, 10), 0.0),
    ((0, 0, 10, 10), (9.5, 0, 10, 10), 5 / 195),
    ((0, 0, 4, 4), (1, 1, 2, 2), 4 / 16),
    ((0, 0, 10, 10), (0, 0, 10, 5), 50 / 100),
    ((0, 0, 10, 10), (0, 5, 10, 10), 50 / 150),
    ((2, 3, 4, 5), (2, 3, 4, 5), 1.0),
    ((0, 0, 1, 1), (0.5, 0.5, 1, 1), 0.25 / 1.75),
    ((0, 0, 100, 100), (50, 50, 100, 100), 2500 / 17500),
    ((0, 0, 3, 3), (1, 0, 3, 3), 6 / 12),
    ((0, 0, 5, 4), (3, 1, 4, 6), 6 / 38),
    ((-5, -5, 10, 10), (0, 0, 10, 10), 25 / 175),
    ((0, 0, 2, 8), (1, 2, 6, 2), 2 / 26),
    ((0, 0, 10, 10), (2, 2, 6, 6), 36 / 100),
    ((1, 1, 1, 1), (1.5, 1, 1, 1), 0.5 / 1.5),
    ((0, 0, 7, 3), (6, 2, 5, 5), 1 / 45),
    ((10, 10, 5, 5), (12, 8, 5, 5), 9 / 41),
    ((0, 0, 0.5, 0.5), (0.25, 0, 0.5, 0.5), 0.125 / 0.375),
    ((0, 0, 10, 1), (0, 0, 1, 10), 1 / 19),
    ((5, 5, 2, 2), (0, 0, 2, 2), 0.0),
    ((0, 0, 5, 5), (5, 5, 5, 5), 0.0),
]


@pytest.mark.parametrize("a,b,expected", IOU_VECTORS)
def test_iou_hand_vectors(a, b, expected):
    assert iou(BBox(*a), BBox(*b)) == pytest.approx(expected, abs=1e-9)
    assert iou(BBox(*b), BBox(*a)) == pytest.approx(expected, abs=1e-9)


def random_boxes(rng, n):
    xs = rng.uniform(-100, 1000, size=n)
    ys = rng.uniform(-100, 1000, size=n)
    ws = rng.uniform(1.0, 500.0, size=n)
    hs = rng.uniform(1.0, 500.0, size=n)
    return [BBox(float(x), float(y), float(w), float(h)) for x, y, w, h in zip(xs, ys, ws, hs)]


def test_iou_fuzz_symmetry_self_and_bounds():
    rng = np.random.default_rng(20240517)
    boxes_a = random_boxes(rng, 10_000)
    boxes_b = random_boxes(rng, 10_000)
    for a, b in zip(boxes_a, boxes_b):
        ab = iou(a, b)
        assert ab == iou(b, a)  # exact symmetry
        assert 0.0 <= ab <= 1.0
        assert abs(iou(a, a) - 1.0) <= 1e-12


@given(
    st.floats(-50, 50), st.floats(-50, 50),
    st.floats(0.5, 40), st.floats(0.5, 40),
    st.floats(-50, 50), st.floats(-50, 50),
    st.floats(0.5, 40), st.floats(0.5, 40),
)
def test_iou_property_range_and_symmetry(x1, y1, w1, h1, x2, y2, w2, h2):
    a, b = BBox(x1, y1, w1, h1), BBox(x2, y2, w2, h2)
    overlap = iou(a, b)
    assert 0.0 <= overlap <= 1.0
    assert overlap == iou(b, a)


def test_degenerate_boxes_rejected():
    with pytest.raises(ValidationError):
        BBox(0, 0, 0, 10)
    with pytest.raises(ValidationError):
        BBox(0, 0, 10, -1)
    with pytest.raises(ValidationError):
        BBox(float("nan"), 0, 1, 1)
    with pytest.raises(ValidationError):
        BBox(0, float("inf"), 1, 1)


def test_corner_properties():
    box = BBox(2.0, 3.0, 4.0, 5.0)
    assert (box.x2, box.y2) == (6.0, 8.0)
    assert box.area == 20.0
