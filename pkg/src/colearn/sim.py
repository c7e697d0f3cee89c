"""Deterministic synthetic scenes and the teacher-student loop.

The simulator exercises the full pipeline without neural networks:
scenes are sampled boxes, the teacher is a noisy observer of the ground
truth, thresholds/assignment/EMA run exactly as they would in training,
and the student "learns" by a deterministic decay of its noise
parameters proportional to the fraction of consistent assignments. This
is a stand-in that studies pseudo-label dynamics, not an optimizer.

All randomness comes from counter-based Philox generators keyed by
(seed, stream, index), so per-image work is independent and can run in
parallel without changing any output.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .align import align_dataset, default_lexicon
from .assign import Anchor, assign_topk, select_regression_head
from .ema import ParamVector, ema_update
from .errors import ConfigError
from .metrics import EvalReport, evaluate_dataset
from .model import (
    BBox,
    ClassVocabulary,
    Dataset,
    Detection,
    DEFAULT_CLASSES,
    GroundTruthBox,
    ImageInfo,
    iou,
)
from .pseudo import (
    ScoreWindow,
    ThresholdState,
    ThresholdTraceRecord,
    filter_pseudo_labels,
    update_thresholds,
)

STREAM_SCENE = 0
STREAM_DETECT = 1
STREAM_ANCHORS = 2
STREAM_ANNOTATE = 3

PARAM_NAMES = ("jitter_sigma", "label_confusion", "drop_rate", "spurious_rate", "score_noise")

_SIZE_MIN_FRAC = 0.05
_SIZE_MAX_FRAC = 0.25
_COLOR_PROB = 0.8
_MOTION_PROB = 0.7

_DESCRIPTION_COLORS = ("red", "blue", "white", "black", "gray", "silver", "green", "brown")
_TYPE_WORDS = {
    "sedan": ("sedan", "car"),
    "bus": ("bus",),
    "pickup-truck": ("pickup",),
    "suv": ("suv",),
    "hatchback": ("hatchback",),
    "van": ("van",),
    "truck": ("truck", "lorry"),
}
_MOTION_PHRASES = ("heading forward", "moving straight", "turning left", "turning right", "stopped")


def rng_for(seed: int, stream: int, index: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream, index)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, index))
    return np.random.Generator(np.random.Philox(ss))


def thread_cap() -> int:
    """Parallelism cap from COLEARN_THREADS; defaults to 1."""
    raw = os.environ.get("COLEARN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_images(fn, image_ids):
    """Apply fn over image ids, optionally in threads; order preserved."""
    ids = list(image_ids)
    cap = thread_cap()
    if cap <= 1 or len(ids) <= 1:
        return [fn(i) for i in ids]
    with ThreadPoolExecutor(max_workers=min(cap, len(ids))) as pool:
        return list(pool.map(fn, ids))


def _check_rate(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} out of [0,1]: {value}")
    return float(value)


@dataclass(frozen=True)
class DetectorNoise:
    """Noise model for the simulated detector.

    Scores follow clamp(score_base - score_penalty * jitter_norm + eps, 0, 1)
    where jitter_norm is the L2 box perturbation relative to the box
    diagonal and eps ~ N(0, score_noise). Spurious boxes are emitted per
    surviving ground truth at spurious_rate with score near
    spurious_score.
    """

    jitter_sigma: float = 4.0
    label_confusion: float = 0.05
    synonym_split: float = 0.0
    drop_rate: float = 0.05
    spurious_rate: float = 0.05
    score_base: float = 0.9
    score_penalty: float = 1.5
    score_noise: float = 0.05
    spurious_score: float = 0.25

    def __post_init__(self) -> None:
        if self.jitter_sigma < 0:
            raise ConfigError(f"jitter_sigma must be >= 0: {self.jitter_sigma}")
        if self.score_penalty < 0:
            raise ConfigError(f"score_penalty must be >= 0: {self.score_penalty}")
        if self.score_noise < 0:
            raise ConfigError(f"score_noise must be >= 0: {self.score_noise}")
        for name in ("label_confusion", "synonym_split", "drop_rate", "spurious_rate",
                     "score_base", "spurious_score"):
            _check_rate(name, getattr(self, name))


@dataclass(frozen=True)
class SimConfig:
    """Full configuration of one simulation run."""

    seed: int = 0
    image_width: int = 1280
    image_height: int = 720
    objects_min: int = 2
    objects_max: int = 6
    classes: tuple[str, ...] = DEFAULT_CLASSES
    class_weights: tuple[float, ...] | None = None
    noise: DetectorNoise = field(default_factory=DetectorNoise)
    iterations: int = 500
    images_per_iteration: int = 8
    labeled_fraction: float = 0.1
    k: int = 3
    w_cls: float = 1.0
    w_reg: float = 2.0
    threshold_floor: float = 0.30
    threshold_cap: float = 0.95
    initial_threshold: float = 0.9
    smoothing_rate: float = 0.9
    ema_momentum: float = 0.999
    heads_per_anchor: int = 2
    anchors_per_object: int = 3
    window_size: int = 4096
    nms_iou: float = 0.5
    student_decay: float = 0.05
    holdout_images: int = 16

    def __post_init__(self) -> None:
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer: {self.seed!r}")
        if self.image_width < 1 or self.image_height < 1:
            raise ConfigError("image size must be positive")
        if not 0 <= self.objects_min <= self.objects_max:
            raise ConfigError(
                f"invalid objects range ({self.objects_min}, {self.objects_max})"
            )
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1: {self.iterations}")
        if self.images_per_iteration < 1:
            raise ConfigError("images_per_iteration must be >= 1")
        if self.holdout_images < 1:
            raise ConfigError("holdout_images must be >= 1")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1: {self.k}")
        if self.w_cls < 0 or self.w_reg < 0:
            raise ConfigError("matching-cost weights must be >= 0")
        if not 0.0 <= self.threshold_floor <= self.threshold_cap <= 1.0:
            raise ConfigError(
                f"invalid threshold band [{self.threshold_floor}, {self.threshold_cap}]"
            )
        if self.heads_per_anchor < 1 or self.anchors_per_object < 1:
            raise ConfigError("heads_per_anchor and anchors_per_object must be >= 1")
        if self.window_size < 4:
            raise ConfigError("window_size must be >= 4")
        if not 0.0 < self.nms_iou < 1.0:
            raise ConfigError(f"nms_iou out of (0,1): {self.nms_iou}")
        for name in ("labeled_fraction", "smoothing_rate", "ema_momentum",
                     "initial_threshold", "student_decay"):
            _check_rate(name, getattr(self, name))
        if not self.classes:
            raise ConfigError("classes must not be empty")
        weights = self.class_weights
        if weights is None:
            weights = tuple(1.0 for _ in self.classes)
            object.__setattr__(self, "class_weights", weights)
        if len(weights) != len(self.classes):
            raise ConfigError(
                f"{len(weights)} class weights for {len(self.classes)} classes"
            )
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ConfigError("class weights must be non-negative with positive sum")
        for name in self.classes:
            if name not in _TYPE_WORDS:
                raise ConfigError(f"no description vocabulary for class {name!r}")

    def vocabulary(self) -> ClassVocabulary:
        return ClassVocabulary(self.classes)

    def to_obj(self) -> dict:
        noise = self.noise
        return {
            "seed": self.seed,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "objects_min": self.objects_min,
            "objects_max": self.objects_max,
            "iterations": self.iterations,
            "images_per_iteration": self.images_per_iteration,
            "labeled_fraction": self.labeled_fraction,
            "classes": list(self.classes),
            "class_weights": {
                name: w for name, w in zip(self.classes, self.class_weights)
            },
            "noise": {
                "jitter_sigma": noise.jitter_sigma,
                "label_confusion": noise.label_confusion,
                "synonym_split": noise.synonym_split,
                "drop_rate": noise.drop_rate,
                "spurious_rate": noise.spurious_rate,
                "score_base": noise.score_base,
                "score_penalty": noise.score_penalty,
                "score_noise": noise.score_noise,
                "spurious_score": noise.spurious_score,
            },
            "loop": {
                "k": self.k,
                "w_cls": self.w_cls,
                "w_reg": self.w_reg,
                "threshold_floor": self.threshold_floor,
                "threshold_cap": self.threshold_cap,
                "initial_threshold": self.initial_threshold,
                "smoothing_rate": self.smoothing_rate,
                "ema_momentum": self.ema_momentum,
                "heads_per_anchor": self.heads_per_anchor,
                "anchors_per_object": self.anchors_per_object,
                "window_size": self.window_size,
                "nms_iou": self.nms_iou,
                "student_decay": self.student_decay,
                "holdout_images": self.holdout_images,
            },
        }


_TOP_LEVEL_KEYS = {
    "seed", "image_width", "image_height", "objects_min", "objects_max",
    "iterations", "images_per_iteration", "labeled_fraction", "classes",
    "class_weights", "noise", "loop",
}
_NOISE_KEYS = {
    "jitter_sigma", "label_confusion", "synonym_split", "drop_rate",
    "spurious_rate", "score_base", "score_penalty", "score_noise",
    "spurious_score",
}
_LOOP_KEYS = {
    "k", "w_cls", "w_reg", "threshold_floor", "threshold_cap",
    "initial_threshold", "smoothing_rate", "ema_momentum",
    "heads_per_anchor", "anchors_per_object", "window_size", "nms_iou",
    "student_decay", "holdout_images",
}


def config_from_obj(obj: dict) -> SimConfig:
    """Build a SimConfig from a decoded TOML/JSON mapping; strict on keys."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a table of key-value pairs")
    for key in obj:
        if key not in _TOP_LEVEL_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    kwargs: dict = {}
    for key in ("seed", "image_width", "image_height", "objects_min", "objects_max",
                "iterations", "images_per_iteration", "labeled_fraction"):
        if key in obj:
            kwargs[key] = obj[key]
    classes = tuple(obj.get("classes", DEFAULT_CLASSES))
    kwargs["classes"] = classes
    if "class_weights" in obj:
        table = obj["class_weights"]
        if not isinstance(table, dict):
            raise ConfigError("class_weights must be a table of class -> weight")
        for name in table:
            if name not in classes:
                raise ConfigError(f"class_weights: unknown class {name!r}")
        kwargs["class_weights"] = tuple(float(table.get(name, 1.0)) for name in classes)
    if "noise" in obj:
        table = obj["noise"]
        if not isinstance(table, dict):
            raise ConfigError("noise must be a table")
        for key in table:
            if key not in _NOISE_KEYS:
                raise ConfigError(f"unknown noise key {key!r}")
        kwargs["noise"] = DetectorNoise(**table)
    if "loop" in obj:
        table = obj["loop"]
        if not isinstance(table, dict):
            raise ConfigError("loop must be a table")
        for key in table:
            if key not in _LOOP_KEYS:
                raise ConfigError(f"unknown loop key {key!r}")
        kwargs.update(table)
    try:
        return SimConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_sim_config(path: str | os.PathLike) -> SimConfig:
    """Parse a TOML configuration file."""
    with open(path, "rb") as fh:
        try:
            obj = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    return config_from_obj(obj)


def generate_scene(cfg: SimConfig, image_id: int, rng: np.random.Generator | None = None) -> tuple[GroundTruthBox, ...]:
    """Sample ground-truth boxes for one image, determined by (seed, image_id)."""
    if rng is None:
        rng = rng_for(cfg.seed, STREAM_SCENE, image_id)
    count = int(rng.integers(cfg.objects_min, cfg.objects_max + 1))
    weights = np.asarray(cfg.class_weights, dtype=float)
    weights = weights / weights.sum()
    boxes = []
    for _ in range(count):
        class_id = int(rng.choice(len(cfg.classes), p=weights))
        w = float(rng.uniform(_SIZE_MIN_FRAC, _SIZE_MAX_FRAC) * cfg.image_width)
        h = float(rng.uniform(_SIZE_MIN_FRAC, _SIZE_MAX_FRAC) * cfg.image_height)
        x = float(rng.uniform(0.0, cfg.image_width - w))
        y = float(rng.uniform(0.0, cfg.image_height - h))
        boxes.append(GroundTruthBox(image_id, BBox(x, y, w, h), class_id))
    return tuple(boxes)


def _jittered_box(bbox: BBox, deltas, width: int, height: int) -> BBox:
    dx, dy, dw, dh = (float(d) for d in deltas)
    w = min(max(bbox.w + dw, 1.0), float(width))
    h = min(max(bbox.h + dh, 1.0), float(height))
    x = min(max(bbox.x + dx, 0.0), width - w)
    y = min(max(bbox.y + dy, 0.0), height - h)
    return BBox(x, y, w, h)


def _confused_class(class_id: int, n_classes: int, rng: np.random.Generator, rate: float) -> int:
    if n_classes > 1 and rng.uniform() < rate:
        other = int(rng.integers(0, n_classes - 1))
        return other + 1 if other >= class_id else other
    return class_id


def simulate_detector(
    gts: Sequence[GroundTruthBox],
    noise: DetectorNoise,
    width: int,
    height: int,
    rng: np.random.Generator,
    n_classes: int,
) -> list[Detection]:
    """Noisy observations of ground truth: drops, jitter, confusion, spurious.

    Scores decrease in expectation with the jitter magnitude, so clean
    boxes score near score_base and badly perturbed ones lower.
    """
    detections = []
    for gt in gts:
        if rng.uniform() < noise.drop_rate:
            continue
        deltas = rng.normal(0.0, noise.jitter_sigma, size=4) if noise.jitter_sigma > 0 else np.zeros(4)
        box = _jittered_box(gt.bbox, deltas, width, height)
        class_id = _confused_class(gt.class_id, n_classes, rng, noise.label_confusion)
        diag = float(np.hypot(gt.bbox.w, gt.bbox.h))
        jitter_norm = float(np.linalg.norm(deltas)) / diag
        eps = float(rng.normal(0.0, noise.score_noise)) if noise.score_noise > 0 else 0.0
        score = min(max(noise.score_base - noise.score_penalty * jitter_norm + eps, 0.0), 1.0)
        detections.append(Detection(gt.image_id, box, class_id, score))
        if rng.uniform() < noise.spurious_rate:
            w = float(rng.uniform(_SIZE_MIN_FRAC, _SIZE_MAX_FRAC) * width)
            h = float(rng.uniform(_SIZE_MIN_FRAC, _SIZE_MAX_FRAC) * height)
            x = float(rng.uniform(0.0, width - w))
            y = float(rng.uniform(0.0, height - h))
            spur_class = int(rng.integers(0, n_classes))
            spur_eps = float(rng.normal(0.0, noise.score_noise)) if noise.score_noise > 0 else 0.0
            spur_score = min(max(noise.spurious_score + spur_eps, 0.0), 1.0)
            detections.append(Detection(gt.image_id, BBox(x, y, w, h), spur_class, spur_score))
    return detections


def _teacher_noise(cfg: SimConfig, teacher: ParamVector) -> DetectorNoise:
    return replace(
        cfg.noise,
        jitter_sigma=teacher.get("jitter_sigma"),
        label_confusion=min(max(teacher.get("label_confusion"), 0.0), 1.0),
        drop_rate=min(max(teacher.get("drop_rate"), 0.0), 1.0),
        spurious_rate=min(max(teacher.get("spurious_rate"), 0.0), 1.0),
        score_noise=teacher.get("score_noise"),
    )


def _student_anchors(
    scene: Sequence[GroundTruthBox],
    student: ParamVector,
    cfg: SimConfig,
    rng: np.random.Generator,
) -> list[tuple[Anchor, int]]:
    """Anchors the student proposes for one image, tagged with their class."""
    sigma = student.get("jitter_sigma")
    confusion = min(max(student.get("label_confusion"), 0.0), 1.0)
    score_noise = student.get("score_noise")
    n_classes = len(cfg.classes)
    anchors = []
    for gt in scene:
        for _ in range(cfg.anchors_per_object):
            deltas = rng.normal(0.0, sigma, size=4) if sigma > 0 else np.zeros(4)
            box = _jittered_box(gt.bbox, deltas, cfg.image_width, cfg.image_height)
            class_id = _confused_class(gt.class_id, n_classes, rng, confusion)
            diag = float(np.hypot(gt.bbox.w, gt.bbox.h))
            jitter_norm = float(np.linalg.norm(deltas)) / diag
            eps = float(rng.normal(0.0, score_noise)) if score_noise > 0 else 0.0
            score = min(max(cfg.noise.score_base - cfg.noise.score_penalty * jitter_norm + eps, 0.0), 1.0)
            heads = []
            for _ in range(cfg.heads_per_anchor):
                head_deltas = rng.normal(0.0, sigma, size=4) if sigma > 0 else np.zeros(4)
                heads.append(_jittered_box(gt.bbox, head_deltas, cfg.image_width, cfg.image_height))
            anchors.append((Anchor(box, score, tuple(heads)), class_id))
    return anchors


@dataclass(frozen=True)
class IterationRecord:
    """Everything logged for one loop iteration."""

    iteration: int
    thresholds: Mapping[str, float]
    raw_thresholds: Mapping[str, float | None]
    window_sizes: Mapping[str, int]
    detection_counts: Mapping[str, int]
    pseudo_counts: Mapping[str, int]
    n_supervision: int
    n_positives: int
    mean_cost: float | None
    consistent_fraction: float
    teacher_params: Mapping[str, float]

    def to_obj(self) -> dict:
        return {
            "iteration": self.iteration,
            "thresholds": dict(self.thresholds),
            "raw_thresholds": dict(self.raw_thresholds),
            "window_sizes": dict(self.window_sizes),
            "detection_counts": dict(self.detection_counts),
            "pseudo_counts": dict(self.pseudo_counts),
            "n_supervision": self.n_supervision,
            "n_positives": self.n_positives,
            "mean_cost": self.mean_cost,
            "consistent_fraction": self.consistent_fraction,
            "teacher_params": dict(self.teacher_params),
        }


@dataclass(frozen=True)
class SimReport:
    """Per-iteration series plus the final held-out evaluations."""

    config: dict
    records: tuple[IterationRecord, ...]
    final_eval: Mapping[str, EvalReport]
    alignment_issue_count: int

    def to_obj(self) -> dict:
        return {
            "config": self.config,
            "iterations": [r.to_obj() for r in self.records],
            "final_eval": {name: rep.to_obj() for name, rep in self.final_eval.items()},
            "alignment_issues": self.alignment_issue_count,
        }

    def final_map(self, which: str = "aligned") -> float:
        return self.final_eval[which].map_score

    def threshold_trace(self) -> list[ThresholdTraceRecord]:
        """Flatten the per-iteration threshold series to trace records."""
        trace = []
        for record in self.records:
            for name in record.thresholds:
                trace.append(
                    ThresholdTraceRecord(
                        iteration=record.iteration,
                        class_name=name,
                        raw_threshold=record.raw_thresholds.get(name),
                        smoothed_threshold=record.thresholds[name],
                        n_scores=record.window_sizes.get(name, 0),
                        kept_count=record.pseudo_counts.get(name, 0),
                    )
                )
        return trace

    def timeseries_rows(self) -> list[list]:
        """Delimited export: one row per (iteration, class)."""
        rows: list[list] = [[
            "iteration", "class", "raw_threshold", "smoothed_threshold",
            "n_scores", "detections", "pseudo_labels",
        ]]
        for record in self.records:
            for name in record.thresholds:
                raw = record.raw_thresholds.get(name)
                rows.append([
                    record.iteration,
                    name,
                    "" if raw is None else raw,
                    record.thresholds[name],
                    record.window_sizes.get(name, 0),
                    record.detection_counts.get(name, 0),
                    record.pseudo_counts.get(name, 0),
                ])
        return rows


def _annotate_holdout(
    scenes: Mapping[int, tuple[GroundTruthBox, ...]],
    cfg: SimConfig,
) -> tuple[ClassVocabulary, list[GroundTruthBox]]:
    """Attach descriptions; optionally record synonym-split labels.

    Returns the extended vocabulary (canonical classes first, split
    labels appended) and the annotated boxes indexed against it.
    """
    annotated: list[tuple[int, BBox, str, str]] = []
    split_labels = set()
    for image_id in sorted(scenes):
        rng = rng_for(cfg.seed, STREAM_ANNOTATE, image_id)
        for gt in scenes[image_id]:
            class_name = cfg.classes[gt.class_id]
            color = None
            if rng.uniform() < _COLOR_PROB:
                color = _DESCRIPTION_COLORS[int(rng.integers(0, len(_DESCRIPTION_COLORS)))]
            motion = None
            if rng.uniform() < _MOTION_PROB:
                motion = _MOTION_PHRASES[int(rng.integers(0, len(_MOTION_PHRASES)))]
            words = _TYPE_WORDS[class_name]
            type_word = words[int(rng.integers(0, len(words)))]
            if color is not None and motion is not None:
                text = f"The {color} {type_word} is {motion}."
            elif color is not None:
                text = f"A {color} {type_word}."
            elif motion is not None:
                text = f"A {type_word} is {motion}."
            else:
                text = f"A {type_word}."
            label = class_name
            if color is not None and rng.uniform() < cfg.noise.synonym_split:
                label = f"{color}-{class_name}"
                split_labels.add(label)
            annotated.append((gt.image_id, gt.bbox, label, text))
    vocabulary = ClassVocabulary(tuple(cfg.classes) + tuple(sorted(split_labels)))
    boxes = [
        GroundTruthBox(image_id, bbox, vocabulary.index(label), text)
        for image_id, bbox, label, text in annotated
    ]
    return vocabulary, boxes


def run_colearning_sim(cfg: SimConfig) -> SimReport:
    """Run the loop: scenes, teacher detections, thresholds, pseudo-labels,
    anchor assignment, student decay, EMA teacher update; then evaluate the
    final teacher on a held-out annotated set with and without alignment."""
    class_names = cfg.classes
    n_classes = len(class_names)
    initial = tuple(getattr(cfg.noise, name) for name in PARAM_NAMES)
    teacher = ParamVector(PARAM_NAMES, initial)
    student = ParamVector(PARAM_NAMES, initial)
    state = ThresholdState(
        floor=cfg.threshold_floor,
        cap=cfg.threshold_cap,
        rate=cfg.smoothing_rate,
        initial=cfg.initial_threshold,
    )
    window = ScoreWindow(cfg.window_size)
    records = []
    next_image_id = 0
    labeled_per_iter = int(round(cfg.labeled_fraction * cfg.images_per_iteration))

    for iteration in range(1, cfg.iterations + 1):
        image_ids = list(range(next_image_id, next_image_id + cfg.images_per_iteration))
        next_image_id += cfg.images_per_iteration
        noise = _teacher_noise(cfg, teacher)

        def observe(image_id: int):
            scene = generate_scene(cfg, image_id)
            dets = simulate_detector(
                scene, noise, cfg.image_width, cfg.image_height,
                rng_for(cfg.seed, STREAM_DETECT, image_id), n_classes,
            )
            return scene, dets

        observed = _map_images(observe, image_ids)
        scenes = {image_id: pair[0] for image_id, pair in zip(image_ids, observed)}
        labeled_ids = set(image_ids[:labeled_per_iter])
        unlabeled_dets: list[Detection] = []
        for image_id, (_, dets) in zip(image_ids, observed):
            if image_id not in labeled_ids:
                unlabeled_dets.extend(dets)

        for class_id in range(n_classes):
            scores = [d.score for d in unlabeled_dets if d.class_id == class_id]
            if scores:
                window.push(class_id, scores)
        raw = update_thresholds(state, {c: window.scores(c) for c in window.class_ids()})
        pseudo = filter_pseudo_labels(unlabeled_dets, state, cfg.nms_iou)

        supervision: list[Detection] = list(pseudo.detections)
        for image_id in sorted(labeled_ids):
            for gt in scenes[image_id]:
                supervision.append(Detection(gt.image_id, gt.bbox, gt.class_id, 1.0))

        n_positives = 0
        n_consistent = 0
        total_cost = 0.0
        for image_id in image_ids:
            targets_by_class: dict[int, list[Detection]] = {}
            for det in supervision:
                if det.image_id == image_id:
                    targets_by_class.setdefault(det.class_id, []).append(det)
            if not targets_by_class:
                continue
            anchors = _student_anchors(
                scenes[image_id], student, cfg,
                rng_for(cfg.seed, STREAM_ANCHORS, image_id),
            )
            for class_id in sorted(targets_by_class):
                class_anchors = [a for a, c in anchors if c == class_id]
                targets = targets_by_class[class_id]
                assignment = assign_topk(
                    class_anchors, targets, k=cfg.k,
                    w_cls=cfg.w_cls, w_reg=cfg.w_reg,
                )
                for anchor_idx, label_idx in enumerate(assignment.labels):
                    if label_idx is None:
                        continue
                    n_positives += 1
                    total_cost += assignment.costs[anchor_idx]
                    anchor = class_anchors[anchor_idx]
                    head = select_regression_head(anchor, targets[label_idx])
                    if iou(anchor.heads[head], targets[label_idx].bbox) >= 0.5:
                        n_consistent += 1

        consistent_fraction = n_consistent / n_positives if n_positives else 0.0
        decay = 1.0 - cfg.student_decay * consistent_fraction
        student = ParamVector(
            PARAM_NAMES,
            tuple(v * decay for v in student.values),
            student.version + 1,
        )
        teacher = ema_update(teacher, student, cfg.ema_momentum)

        det_counts = {name: 0 for name in class_names}
        for det in unlabeled_dets:
            det_counts[class_names[det.class_id]] += 1
        pseudo_counts = {name: 0 for name in class_names}
        for det in pseudo.detections:
            pseudo_counts[class_names[det.class_id]] += 1
        records.append(
            IterationRecord(
                iteration=iteration,
                thresholds={name: state.threshold(c) for c, name in enumerate(class_names)},
                raw_thresholds={
                    class_names[c]: raw.get(c) for c in range(n_classes)
                },
                window_sizes={
                    name: len(window.scores(c)) for c, name in enumerate(class_names)
                },
                detection_counts=det_counts,
                pseudo_counts=pseudo_counts,
                n_supervision=len(supervision),
                n_positives=n_positives,
                mean_cost=(total_cost / n_positives) if n_positives else None,
                consistent_fraction=consistent_fraction,
                teacher_params=teacher.as_dict(),
            )
        )

    # Held-out evaluation with the final teacher.
    holdout_ids = list(range(next_image_id, next_image_id + cfg.holdout_images))
    holdout_scenes = {i: generate_scene(cfg, i) for i in holdout_ids}
    vocabulary, gt_boxes = _annotate_holdout(holdout_scenes, cfg)
    images = tuple(
        ImageInfo(i, cfg.image_width, cfg.image_height) for i in holdout_ids
    )
    noise = _teacher_noise(cfg, teacher)

    def detect(image_id: int):
        return simulate_detector(
            holdout_scenes[image_id], noise, cfg.image_width, cfg.image_height,
            rng_for(cfg.seed, STREAM_DETECT, image_id), n_classes,
        )

    detections = tuple(
        det for dets in _map_images(detect, holdout_ids) for det in dets
    )
    holdout = Dataset(vocabulary, images, tuple(gt_boxes), detections)
    unaligned_report = evaluate_dataset(holdout, detections)
    aligned = align_dataset(holdout, default_lexicon(vocabulary))
    aligned_report = evaluate_dataset(aligned.dataset, detections)

    return SimReport(
        config=cfg.to_obj(),
        records=tuple(records),
        final_eval={"unaligned": unaligned_report, "aligned": aligned_report},
        alignment_issue_count=len(aligned.issues),
    )
