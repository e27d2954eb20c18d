"""Mixed design spaces: continuous variables with bounds plus categorical factors.

A :class:`DesignSpace` holds ``p`` quantitative variables and ``q`` qualitative
factors.  Points are :class:`MixedPoint` objects carrying ``p`` real coordinates
and ``q`` 1-based level indices.  All types here are immutable value objects and
safe to share across threads.

Quantitative coordinates are unit-scaled to ``[0, 1]`` before any kernel math;
:func:`normalize` / :func:`denormalize` are exact inverses up to round-off.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "QuantSpec",
    "QualSpec",
    "DesignSpace",
    "MixedPoint",
    "Dataset",
    "SpaceBuilder",
    "ValidationError",
    "validate_point",
    "check_point",
    "normalize",
    "denormalize",
]


class ValidationError(ValueError):
    """A point or space definition violates its invariants."""


@dataclass(frozen=True)
class QuantSpec:
    """One quantitative variable with inclusive bounds ``[lower, upper]``."""

    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValidationError(f"variable '{self.name}': bounds must be finite")
        if not self.lower < self.upper:
            raise ValidationError(
                f"variable '{self.name}': lower bound {self.lower} must be strictly "
                f"below upper bound {self.upper}"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class QualSpec:
    """One qualitative factor with at least two uniquely labelled levels."""

    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if len(self.levels) < 2:
            raise ValidationError(
                f"factor '{self.name}': needs at least 2 levels, got {len(self.levels)}; "
                "a single-level factor is constant and carries no information"
            )
        if len(set(self.levels)) != len(self.levels):
            raise ValidationError(f"factor '{self.name}': level labels must be unique")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def index_of(self, label: str) -> int:
        """1-based index of a level label."""
        try:
            return self.levels.index(str(label)) + 1
        except ValueError:
            raise ValidationError(
                f"factor '{self.name}': unknown level {label!r}"
            ) from None


@dataclass(frozen=True)
class DesignSpace:
    """A mixed design space of quantitative variables and qualitative factors."""

    quant: tuple[QuantSpec, ...] = ()
    qual: tuple[QualSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "quant", tuple(self.quant))
        object.__setattr__(self, "qual", tuple(self.qual))
        if self.n_quant + self.n_qual < 1:
            raise ValidationError("design space needs at least one variable")
        names = [v.name for v in self.quant] + [f.name for f in self.qual]
        if len(set(names)) != len(names):
            raise ValidationError(f"variable names must be unique, got {names}")

    @property
    def n_quant(self) -> int:
        return len(self.quant)

    @property
    def n_qual(self) -> int:
        return len(self.qual)

    @property
    def qual_cardinalities(self) -> tuple[int, ...]:
        return tuple(f.n_levels for f in self.qual)

    @property
    def n_level_tuples(self) -> int:
        """Number of distinct qualitative level combinations (1 when q = 0)."""
        n = 1
        for f in self.qual:
            n *= f.n_levels
        return n

    def level_tuples(self) -> Iterable[tuple[int, ...]]:
        """All qualitative level-index tuples in lexicographic order (1-based)."""
        return itertools.product(*(range(1, f.n_levels + 1) for f in self.qual))

    def column_names(self) -> list[str]:
        return [v.name for v in self.quant] + [f.name for f in self.qual]

    # -- array interface (quant columns first, then 1-based level indices) --

    def point_to_row(self, pt: "MixedPoint") -> np.ndarray:
        return np.array(list(pt.x) + list(pt.t), dtype=float)

    def row_to_point(self, row: Sequence[float]) -> "MixedPoint":
        row = np.asarray(row, dtype=float)
        if row.shape != (self.n_quant + self.n_qual,):
            raise ValidationError(
                f"row has {row.shape[0] if row.ndim == 1 else row.shape} entries, "
                f"expected {self.n_quant + self.n_qual}"
            )
        x = tuple(float(v) for v in row[: self.n_quant])
        t = []
        for j, v in enumerate(row[self.n_quant:]):
            iv = int(round(v))
            if abs(v - iv) > 1e-9:
                raise ValidationError(
                    f"factor '{self.qual[j].name}': level index {v} is not an integer"
                )
            t.append(iv)
        return MixedPoint(x=x, t=tuple(t))

    def points_to_arrays(self, points: Sequence["MixedPoint"]) -> tuple[np.ndarray, np.ndarray]:
        """Split points into a float (n, p) array and a 0-based int (n, q) array."""
        n = len(points)
        x = np.array([pt.x for pt in points], dtype=float).reshape(n, self.n_quant)
        t = np.array([pt.t for pt in points], dtype=int).reshape(n, self.n_qual) - 1
        return x, t

    def normalize_arrays(self, points: Sequence["MixedPoint"]) -> tuple[np.ndarray, np.ndarray]:
        """Like :meth:`points_to_arrays` but with quant columns scaled to [0, 1]."""
        x, t = self.points_to_arrays(points)
        if self.n_quant:
            lo = np.array([v.lower for v in self.quant])
            width = np.array([v.width for v in self.quant])
            x = (x - lo) / width
        return x, t

    # -- (de)serialization, used by config and model files --

    def to_dict(self) -> dict:
        return {
            "quant": [
                {"name": v.name, "lower": v.lower, "upper": v.upper} for v in self.quant
            ],
            "qual": [{"name": f.name, "levels": list(f.levels)} for f in self.qual],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DesignSpace":
        return cls(
            quant=tuple(
                QuantSpec(v["name"], float(v["lower"]), float(v["upper"]))
                for v in d.get("quant", ())
            ),
            qual=tuple(QualSpec(f["name"], tuple(f["levels"])) for f in d.get("qual", ())),
        )


@dataclass(frozen=True)
class MixedPoint:
    """One design: ``p`` real coordinates plus ``q`` 1-based level indices."""

    x: tuple[float, ...] = ()
    t: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "t", tuple(int(v) for v in self.t))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed (point, response) pairs; all points belong to one space."""

    points: tuple[MixedPoint, ...]
    responses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        y = np.asarray(self.responses, dtype=float).reshape(-1)
        object.__setattr__(self, "responses", y)
        if len(self.points) != y.shape[0]:
            raise ValidationError(
                f"{len(self.points)} points but {y.shape[0]} responses"
            )
        y.setflags(write=False)

    def __len__(self) -> int:
        return len(self.points)

    def append(self, pt: MixedPoint, y: float) -> "Dataset":
        return Dataset(self.points + (pt,), np.append(self.responses, y))


def validate_point(space: DesignSpace, pt: MixedPoint) -> list[str]:
    """Check a point against its space; returns a list of violations, empty if ok.

    Every out-of-bounds coordinate and invalid level index is reported, not just
    the first.
    """
    violations = []
    if len(pt.x) != space.n_quant:
        violations.append(
            f"point has {len(pt.x)} quantitative coordinates, expected {space.n_quant}"
        )
    else:
        for spec, v in zip(space.quant, pt.x):
            if not math.isfinite(v):
                violations.append(f"variable '{spec.name}': value {v} is not finite")
            elif not spec.lower <= v <= spec.upper:
                violations.append(
                    f"variable '{spec.name}': value {v} outside "
                    f"[{spec.lower}, {spec.upper}]"
                )
    if len(pt.t) != space.n_qual:
        violations.append(
            f"point has {len(pt.t)} level indices, expected {space.n_qual}"
        )
    else:
        for spec, idx in zip(space.qual, pt.t):
            if idx < 1:
                violations.append(
                    f"factor '{spec.name}': level index {idx} is below 1"
                )
            elif idx > spec.n_levels:
                violations.append(
                    f"factor '{spec.name}': level index {idx} exceeds {spec.n_levels}"
                )
    return violations


def check_point(space: DesignSpace, pt: MixedPoint) -> None:
    """Raise :class:`ValidationError` listing every violation, if any."""
    violations = validate_point(space, pt)
    if violations:
        raise ValidationError("; ".join(violations))


def normalize(space: DesignSpace, pt: MixedPoint) -> MixedPoint:
    """Scale quantitative coordinates to ``[0, 1]``; level indices unchanged."""
    check_point(space, pt)
    x = tuple((v - s.lower) / s.width for s, v in zip(space.quant, pt.x))
    return MixedPoint(x=x, t=pt.t)


def denormalize(space: DesignSpace, pt: MixedPoint) -> MixedPoint:
    """Inverse of :func:`normalize`.

    Results are clamped into the bounds: without this, unit coordinates at
    exactly 1.0 can overshoot an upper bound by one ulp when the width is not
    exactly representable.
    """
    x = tuple(
        min(max(s.lower + v * s.width, s.lower), s.upper)
        for s, v in zip(space.quant, pt.x)
    )
    return MixedPoint(x=x, t=pt.t)


class SpaceBuilder:
    """Fluent construction of a :class:`DesignSpace`.

    >>> space = SpaceBuilder().add_quant("x1", -5, 10).add_qual("x2", ["a", "b"]).build()
    """

    def __init__(self):
        self._quant: list[QuantSpec] = []
        self._qual: list[QualSpec] = []

    def add_quant(self, name: str, lower: float, upper: float) -> "SpaceBuilder":
        self._quant.append(QuantSpec(name, float(lower), float(upper)))
        return self

    def add_qual(self, name: str, levels: Sequence[str]) -> "SpaceBuilder":
        self._qual.append(QualSpec(name, tuple(levels)))
        return self

    def build(self) -> DesignSpace:
        return DesignSpace(quant=tuple(self._quant), qual=tuple(self._qual))
