"""Free-text vehicle descriptions to canonical box-level class labels.

The pipeline is deliberately shallow: lowercase and tokenize, drop
stopwords, lemmatize via an exception table or fall back to the Porter
stemmer, then match tokens against curated color/type/motion term maps.
Synonym clusters keyed on (color, type) collapse label variants such as
"red van" and "blue van" onto one canonical class. Everything here is a
pure function over immutable inputs; per-record alignment can run in
parallel.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

from .errors import MissingTypeError, SchemaError, UnknownTypeError
from .model import ClassVocabulary, Dataset, GroundTruthBox, default_vocabulary
from .stemmer import porter_stem

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class Lexicon:
    """Term maps driving normalization and synonym clustering.

    All keys are lowercase and are matched against normalized tokens, so
    term keys must themselves be in normalized (post-stem or exception)
    form. Cluster keys are (canonical color or None, canonical type);
    cluster targets and canonical types must name vocabulary classes.
    """

    vocabulary: ClassVocabulary
    color_terms: Mapping[str, str]
    type_terms: Mapping[str, str]
    motion_terms: Mapping[str, str]
    lemma_exceptions: Mapping[str, str]
    stopwords: frozenset[str]
    clusters: Mapping[tuple[str | None, str], str]

    def __post_init__(self) -> None:
        for label, mapping in (
            ("colors", self.color_terms),
            ("types", self.type_terms),
            ("motions", self.motion_terms),
            ("lemma_exceptions", self.lemma_exceptions),
        ):
            for key in mapping:
                if key != key.lower():
                    raise SchemaError(f"lexicon {label}: key {key!r} must be lowercase")
        for word in self.stopwords:
            if word != word.lower():
                raise SchemaError(f"lexicon stopwords: {word!r} must be lowercase")
        for term, canonical in self.type_terms.items():
            if canonical not in self.vocabulary:
                raise SchemaError(
                    f"lexicon types: {term!r} maps to {canonical!r}, "
                    "which is not a vocabulary class"
                )
        for (color, vtype), label in self.clusters.items():
            if label not in self.vocabulary:
                raise SchemaError(
                    f"lexicon clusters: ({color!r}, {vtype!r}) targets {label!r}, "
                    "which is not a vocabulary class"
                )


def normalize_tokens(text: str, lexicon: Lexicon) -> list[str]:
    """Lowercase, tokenize, drop stopwords, lemmatize-or-stem. Order kept.

    An empty result is valid, not an error.
    """
    out = []
    for token in _TOKEN_RE.findall(text.lower()):
        if token in lexicon.stopwords:
            continue
        lemma = lexicon.lemma_exceptions.get(token)
        if lemma is None:
            lemma = porter_stem(token) if token.isalpha() else token
        out.append(lemma)
    return out


@dataclass(frozen=True)
class Attributes:
    """The (color, type, motion) triple extracted from one description."""

    color: str | None
    vehicle_type: str | None
    motion: str | None


def extract_attributes(tokens: list[str], lexicon: Lexicon) -> Attributes:
    """First token matching each term map wins, scanning left to right."""
    color = vehicle_type = motion = None
    for token in tokens:
        if color is None:
            color = lexicon.color_terms.get(token)
        if vehicle_type is None:
            vehicle_type = lexicon.type_terms.get(token)
        if motion is None:
            motion = lexicon.motion_terms.get(token)
    return Attributes(color, vehicle_type, motion)


def standardize(attrs: Attributes) -> str:
    """Join the present attributes as "color type motion"."""
    if attrs.vehicle_type is None:
        raise MissingTypeError("description has no recognizable vehicle type")
    parts = [attrs.color, attrs.vehicle_type, attrs.motion]
    return " ".join(p for p in parts if p is not None)


def canonicalize_class(attrs: Attributes, lexicon: Lexicon) -> int:
    """Resolve (color, type) through the synonym clusters to a class id.

    Falls back to the colorless cluster for the type when no exact
    (color, type) cluster exists.
    """
    if attrs.vehicle_type is None:
        raise MissingTypeError("description has no recognizable vehicle type")
    label = lexicon.clusters.get((attrs.color, attrs.vehicle_type))
    if label is None:
        label = lexicon.clusters.get((None, attrs.vehicle_type))
    if label is None:
        raise UnknownTypeError(
            f"no synonym cluster covers vehicle type {attrs.vehicle_type!r}"
        )
    return lexicon.vocabulary.index(label)


@dataclass(frozen=True)
class StandardizedDescription:
    """Parsed description: attribute triple plus the class it collapses to."""

    color: str | None
    vehicle_type: str
    motion: str | None
    canonical_class: int

    @property
    def text(self) -> str:
        return standardize(Attributes(self.color, self.vehicle_type, self.motion))


def parse_description(text: str, lexicon: Lexicon) -> StandardizedDescription:
    """Normalize, extract and canonicalize one description."""
    attrs = extract_attributes(normalize_tokens(text, lexicon), lexicon)
    canonical = canonicalize_class(attrs, lexicon)
    return StandardizedDescription(attrs.color, attrs.vehicle_type, attrs.motion, canonical)


@dataclass(frozen=True)
class AlignmentIssue:
    """One ground-truth record whose description could not be aligned."""

    record_index: int
    reason: str


@dataclass(frozen=True)
class AlignmentResult:
    dataset: Dataset
    issues: tuple[AlignmentIssue, ...]


def align_dataset(d: Dataset, lexicon: Lexicon) -> AlignmentResult:
    """Replace each described box's class with its canonical cluster label.

    Boxes without a description, and boxes whose description fails
    extraction, keep their existing class; failures are reported as
    issues rather than aborting the batch. The vocabulary is unchanged.
    """
    boxes = []
    issues = []
    for idx, gt in enumerate(d.ground_truth):
        if gt.description is None:
            boxes.append(gt)
            continue
        try:
            parsed = parse_description(gt.description, lexicon)
            label = lexicon.vocabulary.name(parsed.canonical_class)
            class_id = d.vocabulary.index(label)
        except (MissingTypeError, UnknownTypeError) as exc:
            issues.append(AlignmentIssue(idx, str(exc)))
            boxes.append(gt)
            continue
        if class_id == gt.class_id:
            boxes.append(gt)
        else:
            boxes.append(GroundTruthBox(gt.image_id, gt.bbox, class_id, gt.description))
    aligned = Dataset(d.vocabulary, d.images, tuple(boxes), d.detections)
    return AlignmentResult(aligned, tuple(issues))


def issues_to_obj(issues: tuple[AlignmentIssue, ...]) -> list[dict]:
    """Side-report form: one {record_index, reason} object per issue."""
    return [{"record_index": i.record_index, "reason": i.reason} for i in issues]


def _parse_str_map(obj: dict, key: str) -> dict[str, str]:
    raw = obj.get(key)
    if not isinstance(raw, dict):
        raise SchemaError(f"lexicon: {key!r} must be an object of string pairs")
    for k, v in raw.items():
        if not isinstance(v, str):
            raise SchemaError(f"lexicon {key}: value for {k!r} must be a string")
    return dict(raw)


def parse_lexicon(obj: dict, vocabulary: ClassVocabulary | None = None) -> Lexicon:
    """Build a Lexicon from decoded JSON, validated against a vocabulary."""
    if vocabulary is None:
        vocabulary = default_vocabulary()
    if not isinstance(obj, dict):
        raise SchemaError("lexicon: top level must be a JSON object")
    stopwords = obj.get("stopwords")
    if not isinstance(stopwords, list) or not all(isinstance(s, str) for s in stopwords):
        raise SchemaError("lexicon: 'stopwords' must be an array of strings")
    raw_clusters = obj.get("clusters")
    if not isinstance(raw_clusters, list):
        raise SchemaError("lexicon: 'clusters' must be an array")
    clusters: dict[tuple[str | None, str], str] = {}
    for idx, rec in enumerate(raw_clusters):
        where = f"clusters[{idx}]"
        if not isinstance(rec, dict):
            raise SchemaError(f"lexicon {where}: expected an object")
        color = rec.get("color")
        if color is not None and not isinstance(color, str):
            raise SchemaError(f"lexicon {where}: 'color' must be a string or null")
        vtype = rec.get("type")
        label = rec.get("label")
        if not isinstance(vtype, str) or not isinstance(label, str):
            raise SchemaError(f"lexicon {where}: 'type' and 'label' must be strings")
        key = (color, vtype)
        if key in clusters:
            raise SchemaError(f"lexicon {where}: duplicate cluster for {key!r}")
        clusters[key] = label
    return Lexicon(
        vocabulary=vocabulary,
        color_terms=_parse_str_map(obj, "colors"),
        type_terms=_parse_str_map(obj, "types"),
        motion_terms=_parse_str_map(obj, "motions"),
        lemma_exceptions=_parse_str_map(obj, "lemma_exceptions"),
        stopwords=frozenset(stopwords),
        clusters=clusters,
    )


def load_lexicon(path, vocabulary: ClassVocabulary | None = None) -> Lexicon:
    """Load a lexicon JSON file."""
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    return parse_lexicon(obj, vocabulary)


def default_lexicon(vocabulary: ClassVocabulary | None = None) -> Lexicon:
    """The curated lexicon shipped with the package."""
    text = resources.files("colearn").joinpath("data/default_lexicon.json").read_text("utf-8")
    return parse_lexicon(json.loads(text), vocabulary)
