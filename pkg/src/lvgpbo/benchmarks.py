"""Test objectives: two analytic mixed-variable functions and tabular lookup.

The analytic functions are classic two-variable global-optimization surfaces
with the second variable restricted to a small set of levels, exposed as a
quantitative variable plus a qualitative factor.  Tabular objectives wrap a
precomputed table of responses over an all-qualitative space, as produced by
combinatorial screening studies; lookups are exact and never extrapolate.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .engine import Objective
from .space import DesignSpace, MixedPoint, QualSpec, SpaceBuilder, ValidationError

__all__ = [
    "TabularObjective",
    "TabularLoadError",
    "branin_mixed",
    "branin_space",
    "branin_objective",
    "goldstein_price_mixed",
    "goldstein_price_space",
    "goldstein_price_objective",
    "load_tabular",
    "exhaustive_oracle",
    "noisy_wrapper",
    "synthetic_tabular_path",
]

BRANIN_X2_VALUES = (0.0, 5.0, 10.0, 15.0)
GOLDSTEIN_PRICE_X2_VALUES = (-2.0, -1.0, 0.0, 1.0, 2.0)


def branin_mixed(x1: float, level: int) -> float:
    """Branin-Hoo surface with the second coordinate restricted to 4 levels."""
    if not -5.0 <= x1 <= 10.0:
        raise ValueError(f"x1={x1} outside [-5, 10]")
    if not 1 <= level <= 4:
        raise ValueError(f"level={level} outside 1..4")
    x2 = BRANIN_X2_VALUES[level - 1]
    return (
        (x2 - 5.1 / (4 * math.pi**2) * x1**2 + 5.0 / math.pi * x1 - 6.0) ** 2
        + 10.0 * (1.0 - 1.0 / (8.0 * math.pi)) * math.cos(x1)
        + 10.0
    )


def goldstein_price_mixed(x1: float, level: int) -> float:
    """Goldstein-Price surface with the second coordinate restricted to 5 levels."""
    if not -2.0 <= x1 <= 2.0:
        raise ValueError(f"x1={x1} outside [-2, 2]")
    if not 1 <= level <= 5:
        raise ValueError(f"level={level} outside 1..5")
    x2 = GOLDSTEIN_PRICE_X2_VALUES[level - 1]
    a = 1.0 + (x1 + x2 + 1.0) ** 2 * (
        19.0 - 14.0 * x1 + 3.0 * x1**2 - 14.0 * x2 + 6.0 * x1 * x2 + 3.0 * x2**2
    )
    b = 30.0 + (2.0 * x1 - 3.0 * x2) ** 2 * (
        18.0 - 32.0 * x1 + 12.0 * x1**2 + 48.0 * x2 - 36.0 * x1 * x2 + 27.0 * x2**2
    )
    return a * b


def branin_space() -> DesignSpace:
    return (
        SpaceBuilder()
        .add_quant("x1", -5.0, 10.0)
        .add_qual("x2", [str(int(v)) for v in BRANIN_X2_VALUES])
        .build()
    )


def goldstein_price_space() -> DesignSpace:
    return (
        SpaceBuilder()
        .add_quant("x1", -2.0, 2.0)
        .add_qual("x2", [str(int(v)) for v in GOLDSTEIN_PRICE_X2_VALUES])
        .build()
    )


def _branin_point(pt: MixedPoint) -> float:
    return branin_mixed(pt.x[0], pt.t[0])


def _goldstein_price_point(pt: MixedPoint) -> float:
    return goldstein_price_mixed(pt.x[0], pt.t[0])


def branin_objective() -> Objective:
    return Objective(fn=_branin_point, name="branin")


def goldstein_price_objective() -> Objective:
    return Objective(fn=_goldstein_price_point, name="goldstein_price")


class TabularLoadError(ValueError):
    """A tabular file violates the loader's schema or invariants."""


@dataclass(frozen=True, eq=False)
class TabularObjective:
    """Exact lookup over a finite all-qualitative space.

    ``table`` maps full level-index tuples to responses; ``candidates`` keeps
    the file's row order.  Querying a tuple absent from the table is an
    error, never an interpolation.
    """

    space: DesignSpace
    table: dict[tuple[int, ...], float]
    candidates: tuple[MixedPoint, ...]
    columns: tuple[str, ...]
    source: str = ""

    @property
    def n_rows(self) -> int:
        return len(self.candidates)

    @property
    def response_range(self) -> tuple[float, float]:
        values = list(self.table.values())
        return (min(values), max(values))

    def lookup(self, pt: MixedPoint) -> float:
        try:
            return self.table[pt.t]
        except KeyError:
            raise LookupError(
                f"level tuple {pt.t} is not a stored row of this table"
            ) from None

    def objective(self, budget: int | None = None) -> Objective:
        return Objective(fn=self.lookup, budget=budget, name=self.source or "tabular")

    def pool(self, min_response: float | None = None) -> tuple[MixedPoint, ...]:
        """Candidates whose response exceeds ``min_response`` (all when None)."""
        if min_response is None:
            return self.candidates
        return tuple(pt for pt in self.candidates if self.table[pt.t] > min_response)


def load_tabular(
    path,
    factors: Sequence[str],
    response: str,
    levels: Mapping[str, Sequence[str]] | None = None,
) -> TabularObjective:
    """Read a headered delimiter-separated table of qualitative designs.

    ``factors`` names the qualitative columns (in the desired factor order)
    and ``response`` the numeric column.  Factor levels are taken from
    ``levels`` when given (unknown values are then a load error) or inferred
    as the sorted distinct values of each column.  Duplicate tuples,
    non-numeric responses, and unknown levels are reported with their file
    line numbers.
    """
    factors = list(factors)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in [*factors, response] if c not in header]
        if missing:
            raise TabularLoadError(f"{path}: missing columns {missing} in header {header}")
        raw_rows = []
        for line_no, row in enumerate(reader, start=2):
            raw_rows.append((line_no, [row[c] for c in factors], row[response]))
    if not raw_rows:
        raise TabularLoadError(f"{path}: no data rows")

    if levels is not None:
        level_lists = [list(levels[c]) for c in factors]
    else:
        level_lists = [
            sorted({labels[j] for _, labels, _ in raw_rows}) for j in range(len(factors))
        ]
    try:
        specs = tuple(QualSpec(name, tuple(lv)) for name, lv in zip(factors, level_lists))
        space = DesignSpace(qual=specs)
    except ValidationError as err:
        raise TabularLoadError(f"{path}: {err}") from None

    table: dict[tuple[int, ...], float] = {}
    first_line: dict[tuple[int, ...], int] = {}
    candidates = []
    for line_no, labels, resp in raw_rows:
        key = []
        for spec, label in zip(specs, labels):
            if label not in spec.levels:
                raise TabularLoadError(
                    f"{path}:{line_no}: unknown level {label!r} for factor '{spec.name}'"
                )
            key.append(spec.levels.index(label) + 1)
        key = tuple(key)
        try:
            value = float(resp)
        except (TypeError, ValueError):
            raise TabularLoadError(
                f"{path}:{line_no}: non-numeric response {resp!r}"
            ) from None
        if not math.isfinite(value):
            raise TabularLoadError(f"{path}:{line_no}: non-finite response {resp!r}")
        if key in table:
            raise TabularLoadError(
                f"{path}:{line_no}: duplicate of the tuple first seen on line "
                f"{first_line[key]}"
            )
        table[key] = value
        first_line[key] = line_no
        candidates.append(MixedPoint(t=key))
    return TabularObjective(
        space=space,
        table=table,
        candidates=tuple(candidates),
        columns=tuple([*factors, response]),
        source=str(path),
    )


def exhaustive_oracle(obj: TabularObjective) -> tuple[MixedPoint, float]:
    """Full scan of the table; ties resolve to the earliest row."""
    best_pt = None
    best_val = math.inf
    for pt in obj.candidates:
        v = obj.table[pt.t]
        if v < best_val:
            best_pt, best_val = pt, v
    return best_pt, best_val


class _NoisyFn:
    """Adds a seeded Gaussian noise stream to a callback; one draw per call.

    The stream position advances under a lock, so a single wrapper is safe
    inside one concurrently-evaluating campaign; independent campaigns should
    each construct their own wrapper.
    """

    def __init__(self, fn, sd: float, seed):
        self._fn = fn
        self._sd = float(sd)
        self._rng = np.random.default_rng(seed)
        self._lock = threading.Lock()

    def __call__(self, pt: MixedPoint) -> float:
        y = float(self._fn(pt))
        with self._lock:
            eps = self._rng.standard_normal()
        return y + self._sd * eps


def noisy_wrapper(obj: Objective, sd: float, seed) -> Objective:
    """Wrap an objective with i.i.d. zero-mean Gaussian observation noise."""
    if sd < 0:
        raise ValueError(f"noise sd must be >= 0, got {sd}")
    return Objective(
        fn=_NoisyFn(obj.fn, sd, seed),
        noisy=sd > 0 or obj.noisy,
        budget=obj.budget,
        name=obj.name,
    )


def synthetic_tabular_path():
    """Path of the bundled synthetic combinatorial table (240 rows, 5 factors)."""
    return resources.files("lvgpbo").joinpath("data/synthetic_combinatorial.csv")
