"""AP@IoU and mAP computation with all-point interpolation.

Matching is greedy per class and image in descending score order; AP is
the area under the precision envelope over recall. Classes without
ground truth are excluded from the mean rather than scored zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ValidationError
from .model import Dataset, Detection, GroundTruthBox, iou


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    iou_thresh: float = 0.5,
) -> list[bool]:
    """TP/FP flags for one class in one image, aligned with the input order.

    Detections are processed in descending score order (score ties keep
    input order); each is a TP iff its best-IoU still-unmatched ground
    truth reaches iou_thresh, and that ground truth is then consumed.
    """
    flags = [False] * len(dets)
    matched = [False] * len(gts)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    for i in order:
        best_iou = 0.0
        best_j = None
        for j, gt in enumerate(gts):
            if matched[j]:
                continue
            overlap = iou(dets[i].bbox, gt.bbox)
            if overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j is not None and best_iou >= iou_thresh:
            flags[i] = True
            matched[best_j] = True
    return flags


def average_precision(flags: Sequence[bool], n_gt: int) -> float | None:
    """All-point interpolated AP from score-ordered TP/FP flags.

    Returns None when n_gt is zero (AP undefined; the class is excluded
    from the mean).
    """
    if n_gt < 0:
        raise ValidationError(f"n_gt must be non-negative: {n_gt}")
    if n_gt == 0:
        return None
    if not flags:
        return 0.0
    precisions = []
    recalls = []
    tp = 0
    for i, flag in enumerate(flags):
        if flag:
            tp += 1
        precisions.append(tp / (i + 1))
        recalls.append(tp / n_gt)
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for recall, precision in zip(recalls, precisions):
        if recall > prev_recall:
            ap += (recall - prev_recall) * precision
            prev_recall = recall
    return ap


@dataclass(frozen=True)
class ClassCounts:
    n_gt: int
    n_det: int
    n_tp: int
    n_fp: int


@dataclass(frozen=True)
class EvalReport:
    """Per-class AP (None where undefined), their mean, and match counts.

    pr_curves carries the (recalls, precisions) points per class for
    plotting; it is not part of the serialized report.
    """

    per_class_ap: Mapping[str, float | None]
    map_score: float
    counts: Mapping[str, ClassCounts]
    pr_curves: Mapping[str, tuple[tuple[float, ...], tuple[float, ...]]]

    def to_obj(self) -> dict:
        return {
            "per_class": dict(self.per_class_ap),
            "mAP": self.map_score,
            "counts": {
                name: {"n_gt": c.n_gt, "n_det": c.n_det, "n_tp": c.n_tp, "n_fp": c.n_fp}
                for name, c in self.counts.items()
            },
        }


def evaluate_dataset(
    gt: Dataset,
    dets: Sequence[Detection],
    iou_thresh: float = 0.5,
) -> EvalReport:
    """Per-class AP pooled across images, and their arithmetic mean.

    The mean covers only classes with ground truth; with no such class
    the mAP is reported as 0.0. Pooling order is (score desc, image id,
    per-image input order), so permuting images leaves the report
    unchanged.
    """
    image_ids = {img.id for img in gt.images}
    for idx, det in enumerate(dets):
        if det.image_id not in image_ids:
            raise ValidationError(f"detections[{idx}]: unknown image id {det.image_id}")
        if det.class_id >= len(gt.vocabulary):
            raise ValidationError(f"detections[{idx}]: class id {det.class_id} out of range")

    per_class_ap: dict[str, float | None] = {}
    counts: dict[str, ClassCounts] = {}
    curves: dict[str, tuple[tuple[float, ...], tuple[float, ...]]] = {}
    defined_aps = []
    for class_id, name in enumerate(gt.vocabulary.names):
        gts_by_image: dict[int, list[GroundTruthBox]] = {}
        for box in gt.ground_truth:
            if box.class_id == class_id:
                gts_by_image.setdefault(box.image_id, []).append(box)
        dets_by_image: dict[int, list[Detection]] = {}
        for det in dets:
            if det.class_id == class_id:
                dets_by_image.setdefault(det.image_id, []).append(det)

        pooled: list[tuple[float, int, int, bool]] = []
        for image_id, image_dets in dets_by_image.items():
            flags = match_detections(image_dets, gts_by_image.get(image_id, []), iou_thresh)
            ordered = sorted(range(len(image_dets)), key=lambda i: (-image_dets[i].score, i))
            for seq, i in enumerate(ordered):
                pooled.append((-image_dets[i].score, image_id, seq, flags[i]))
        pooled.sort()
        flags = [flag for _, _, _, flag in pooled]

        n_gt = sum(len(v) for v in gts_by_image.values())
        n_tp = sum(flags)
        ap = average_precision(flags, n_gt)
        per_class_ap[name] = ap
        counts[name] = ClassCounts(n_gt, len(flags), n_tp, len(flags) - n_tp)

        tp = 0
        recalls = []
        precisions = []
        for i, flag in enumerate(flags):
            if flag:
                tp += 1
            precisions.append(tp / (i + 1))
            recalls.append(tp / n_gt if n_gt else 0.0)
        curves[name] = (tuple(recalls), tuple(precisions))

        if ap is not None:
            defined_aps.append(ap)

    map_score = sum(defined_aps) / len(defined_aps) if defined_aps else 0.0
    return EvalReport(per_class_ap, map_score, counts, curves)
