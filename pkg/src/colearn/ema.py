"""Teacher-student parameter bookkeeping with EMA updates.

Parameters are abstract named reals, not neural weights; the teacher
stream is advanced by exponential moving average toward the student.
Vectors are immutable; each update returns a new teacher with a bumped
version counter.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Mapping

from .errors import IncompatibleVectorsError, SchemaError, ValidationError
from .model import write_text_atomic

DEFAULT_EMA_MOMENTUM = 0.999


@dataclass(frozen=True)
class ParamVector:
    """Ordered named real values plus a version counter."""

    names: tuple[str, ...]
    values: tuple[float, ...]
    version: int = 0

    def __post_init__(self) -> None:
        if len(self.names) != len(self.values):
            raise ValidationError(
                f"{len(self.names)} names but {len(self.values)} values"
            )
        if len(set(self.names)) != len(self.names):
            raise ValidationError("parameter names must be unique")
        for name, value in zip(self.names, self.values):
            if not math.isfinite(value):
                raise ValidationError(f"parameter {name!r} is not finite: {value!r}")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, float], version: int = 0) -> ParamVector:
        return cls(tuple(mapping), tuple(float(v) for v in mapping.values()), version)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))

    def get(self, name: str) -> float:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None


def ema_update(teacher: ParamVector, student: ParamVector, momentum: float = DEFAULT_EMA_MOMENTUM) -> ParamVector:
    """Componentwise momentum*teacher + (1-momentum)*student.

    The result lies between the two inputs and carries teacher.version + 1.
    """
    if teacher.names != student.names:
        raise IncompatibleVectorsError(
            f"parameter names differ: {teacher.names} vs {student.names}"
        )
    if not 0.0 <= momentum <= 1.0:
        raise ValidationError(f"momentum out of [0,1]: {momentum}")
    values = tuple(
        momentum * t + (1.0 - momentum) * s
        for t, s in zip(teacher.values, student.values)
    )
    return ParamVector(teacher.names, values, teacher.version + 1)


def save_checkpoint(vector: ParamVector, path: str | os.PathLike) -> None:
    """Write the checkpoint JSON: name->value mapping plus version.

    Key order encodes parameter order, so keys are not sorted here.
    """
    obj = {"version": vector.version, "values": vector.as_dict()}
    write_text_atomic(path, json.dumps(obj, indent=2) + "\n")


def load_checkpoint(path: str | os.PathLike) -> ParamVector:
    """Read a checkpoint written by save_checkpoint."""
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or "values" not in obj or "version" not in obj:
        raise SchemaError(f"{path}: checkpoint needs 'values' and 'version'")
    values = obj["values"]
    if not isinstance(values, dict):
        raise SchemaError(f"{path}: 'values' must be an object")
    version = obj["version"]
    if not isinstance(version, int) or isinstance(version, bool):
        raise SchemaError(f"{path}: 'version' must be an integer")
    return ParamVector.from_mapping(values, version)
