"""Core domain types, box geometry and dataset I/O.

Boxes are stored as (x, y, w, h) in continuous pixel coordinates with
(x, y) the top-left corner; corner form is derived, never stored.
All types are immutable values and every operation here is pure, so
instances can be shared freely across threads.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass

from .errors import SchemaError, ValidationError

DEFAULT_CLASSES = ("sedan", "bus", "pickup-truck", "suv", "hatchback", "van", "truck")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner plus positive width and height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ValidationError(f"bbox {name} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise ValidationError(f"bbox {name} is not finite: {value!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(
                f"bbox has non-positive size: w={self.w}, h={self.h}"
            )

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint.

    Continuous-coordinate convention: areas are w*h with no +1 pixel
    offset, and the union uses inclusion-exclusion.
    """
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    if ix <= 0.0:
        return 0.0
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered list of canonical class names.

    Names must be unique, lowercase and non-empty; class ids used across
    the package are indices into this list.
    """

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.names:
            raise ValidationError("vocabulary must not be empty")
        seen = set()
        for name in self.names:
            if not isinstance(name, str) or not name:
                raise ValidationError(f"class name must be a non-empty string: {name!r}")
            if name != name.lower():
                raise ValidationError(f"class name must be lowercase: {name!r}")
            if name in seen:
                raise ValidationError(f"duplicate class name: {name!r}")
            seen.add(name)

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"class {name!r} is not in the vocabulary") from None

    def name(self, class_id: int) -> str:
        if not 0 <= class_id < len(self.names):
            raise ValidationError(f"class id {class_id} out of range")
        return self.names[class_id]


def default_vocabulary() -> ClassVocabulary:
    """The seven-class vehicle vocabulary used throughout the toolkit."""
    return ClassVocabulary(DEFAULT_CLASSES)


@dataclass(frozen=True)
class Detection:
    """A scored box prediction for one image."""

    image_id: int
    bbox: BBox
    class_id: int
    score: float

    def __post_init__(self) -> None:
        if not isinstance(self.class_id, int) or isinstance(self.class_id, bool) or self.class_id < 0:
            raise ValidationError(f"class_id must be a non-negative integer: {self.class_id!r}")
        if not isinstance(self.score, (int, float)) or isinstance(self.score, bool) or not math.isfinite(self.score):
            raise ValidationError(f"score must be a finite number: {self.score!r}")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score out of [0,1]: {self.score}")


@dataclass(frozen=True)
class GroundTruthBox:
    """An annotated box, optionally carrying its free-text description."""

    image_id: int
    bbox: BBox
    class_id: int
    description: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.class_id, int) or isinstance(self.class_id, bool) or self.class_id < 0:
            raise ValidationError(f"class_id must be a non-negative integer: {self.class_id!r}")
        if self.description is not None and not self.description.strip():
            raise ValidationError("description present but empty after trimming")


@dataclass(frozen=True)
class ImageInfo:
    """Image dimensions keyed by integer id."""

    id: int
    width: int
    height: int

    def __post_init__(self) -> None:
        for name in ("id", "width", "height"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValidationError(f"image {name} must be an integer: {value!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"image {self.id}: non-positive size {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class Dataset:
    """Vocabulary, image table, ground truth and optional detections.

    Construction checks referential integrity: every referenced image id
    exists and every box lies within its image bounds.
    """

    vocabulary: ClassVocabulary
    images: tuple[ImageInfo, ...]
    ground_truth: tuple[GroundTruthBox, ...]
    detections: tuple[Detection, ...] | None = None

    def __post_init__(self) -> None:
        by_id: dict[int, ImageInfo] = {}
        for img in self.images:
            if img.id in by_id:
                raise ValidationError(f"duplicate image id {img.id}")
            by_id[img.id] = img
        for idx, gt in enumerate(self.ground_truth):
            self._check_box(f"ground_truth[{idx}]", gt.image_id, gt.bbox, gt.class_id, by_id)
        if self.detections is not None:
            for idx, det in enumerate(self.detections):
                self._check_box(f"detections[{idx}]", det.image_id, det.bbox, det.class_id, by_id)

    def _check_box(
        self,
        where: str,
        image_id: int,
        bbox: BBox,
        class_id: int,
        by_id: dict[int, ImageInfo],
    ) -> None:
        img = by_id.get(image_id)
        if img is None:
            raise ValidationError(f"{where}: unknown image id {image_id}")
        if class_id >= len(self.vocabulary):
            raise ValidationError(f"{where}: class id {class_id} out of range")
        if bbox.x < 0 or bbox.y < 0 or bbox.x2 > img.width or bbox.y2 > img.height:
            raise ValidationError(
                f"{where}: bbox {bbox.as_list()} exceeds image bounds "
                f"{img.width}x{img.height}"
            )

    def image(self, image_id: int) -> ImageInfo:
        for img in self.images:
            if img.id == image_id:
                return img
        raise ValidationError(f"unknown image id {image_id}")


def _require(record: dict, key: str, where: str):
    if key not in record:
        raise SchemaError(f"{where}: missing required field {key!r}")
    return record[key]


def _parse_number(value, where: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SchemaError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _parse_bbox(value, where: str) -> BBox:
    if not isinstance(value, list) or len(value) != 4:
        raise SchemaError(f"{where}: bbox must be a [x,y,w,h] array, got {value!r}")
    x, y, w, h = (_parse_number(v, where) for v in value)
    try:
        return BBox(x, y, w, h)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def _parse_class(record: dict, vocabulary: ClassVocabulary, where: str) -> int:
    name = _require(record, "class", where)
    if not isinstance(name, str):
        raise SchemaError(f"{where}: class must be a string, got {name!r}")
    if name not in vocabulary:
        raise SchemaError(f"{where}: unknown class {name!r}")
    return vocabulary.index(name)


def parse_dataset(obj: dict) -> Dataset:
    """Build a Dataset from decoded JSON, strictly.

    Missing required fields raise :class:`SchemaError` naming the record;
    invariant violations raise :class:`ValidationError`; unknown extra
    fields are ignored.
    """
    if not isinstance(obj, dict):
        raise SchemaError("top level must be a JSON object")
    classes = _require(obj, "classes", "dataset")
    if not isinstance(classes, list):
        raise SchemaError("dataset: 'classes' must be an array of strings")
    vocabulary = ClassVocabulary(tuple(classes))

    raw_images = _require(obj, "images", "dataset")
    if not isinstance(raw_images, list):
        raise SchemaError("dataset: 'images' must be an array")
    images = []
    for idx, rec in enumerate(raw_images):
        where = f"images[{idx}]"
        if not isinstance(rec, dict):
            raise SchemaError(f"{where}: expected an object")
        images.append(
            ImageInfo(
                _require(rec, "id", where),
                _require(rec, "width", where),
                _require(rec, "height", where),
            )
        )

    raw_gt = _require(obj, "ground_truth", "dataset")
    if not isinstance(raw_gt, list):
        raise SchemaError("dataset: 'ground_truth' must be an array")
    ground_truth = []
    for idx, rec in enumerate(raw_gt):
        where = f"ground_truth[{idx}]"
        if not isinstance(rec, dict):
            raise SchemaError(f"{where}: expected an object")
        description = rec.get("description")
        if description is not None and not isinstance(description, str):
            raise SchemaError(f"{where}: description must be a string")
        try:
            ground_truth.append(
                GroundTruthBox(
                    image_id=_require(rec, "image_id", where),
                    bbox=_parse_bbox(_require(rec, "bbox", where), where),
                    class_id=_parse_class(rec, vocabulary, where),
                    description=description,
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}" if where not in str(exc) else str(exc)) from None

    detections = None
    if obj.get("detections") is not None:
        raw_det = obj["detections"]
        if not isinstance(raw_det, list):
            raise SchemaError("dataset: 'detections' must be an array")
        detections = []
        for idx, rec in enumerate(raw_det):
            where = f"detections[{idx}]"
            if not isinstance(rec, dict):
                raise SchemaError(f"{where}: expected an object")
            try:
                detections.append(
                    Detection(
                        image_id=_require(rec, "image_id", where),
                        bbox=_parse_bbox(_require(rec, "bbox", where), where),
                        class_id=_parse_class(rec, vocabulary, where),
                        score=_parse_number(_require(rec, "score", where), where),
                    )
                )
            except ValidationError as exc:
                raise ValidationError(f"{where}: {exc}" if where not in str(exc) else str(exc)) from None
        detections = tuple(detections)

    return Dataset(vocabulary, tuple(images), tuple(ground_truth), detections)


def dataset_to_obj(d: Dataset) -> dict:
    """Inverse of :func:`parse_dataset`; round-trips field for field."""
    obj: dict = {
        "classes": list(d.vocabulary.names),
        "images": [{"id": i.id, "width": i.width, "height": i.height} for i in d.images],
        "ground_truth": [],
    }
    for gt in d.ground_truth:
        rec: dict = {
            "image_id": gt.image_id,
            "bbox": gt.bbox.as_list(),
            "class": d.vocabulary.name(gt.class_id),
        }
        if gt.description is not None:
            rec["description"] = gt.description
        obj["ground_truth"].append(rec)
    if d.detections is not None:
        obj["detections"] = [
            {
                "image_id": det.image_id,
                "bbox": det.bbox.as_list(),
                "class": d.vocabulary.name(det.class_id),
                "score": det.score,
            }
            for det in d.detections
        ]
    return obj


def load_dataset(path: str | os.PathLike) -> Dataset:
    """Load and validate a dataset JSON file."""
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    return parse_dataset(obj)


def write_text_atomic(path: str | os.PathLike, text: str) -> None:
    """Write text via a temp file and rename, so failures leave no partial file."""
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path: str | os.PathLike, obj) -> None:
    """Serialize to canonical JSON (sorted keys) and write atomically."""
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_dataset(d: Dataset, path: str | os.PathLike) -> None:
    """Write a dataset as JSON, atomically."""
    write_json_atomic(path, dataset_to_obj(d))
