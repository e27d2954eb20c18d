"""Sequential optimization loop with an ask-tell interface.

A :class:`Campaign` owns the state of one optimization run: the design
space, the initial design, the growing dataset, and the history of every
evaluation.  ``ask`` hands out the next point to evaluate (first the initial
design, then refit-and-propose); ``tell`` records its response.  :func:`run`
drives the loop against an :class:`Objective` until the iteration budget,
the objective's own evaluation budget, or the candidate set is exhausted.

One root seed is split into independent streams for the initial design, the
likelihood starts, the acquisition starts, and tuple subsampling, so runs
are reproducible bit for bit and changing one setting does not perturb the
others.  A campaign is single-threaded; distinct campaigns are independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .acquisition import AcquisitionConfig, ExhaustedSpaceError, propose_next
from .model import FitConfig, FittedModel, fit
from .space import Dataset, DesignSpace, MixedPoint, check_point

__all__ = [
    "Objective",
    "CampaignConfig",
    "Campaign",
    "HistoryRecord",
    "BudgetExhaustedError",
    "initial_design",
    "maximin_lhs",
    "run",
    "write_history",
    "read_history",
]


class BudgetExhaustedError(RuntimeError):
    """The campaign's iteration budget has been used up."""


@dataclass(frozen=True)
class Objective:
    """A black-box evaluation callback over valid points of a space.

    Callback errors and non-finite values are surfaced as failed evaluations,
    never as crashes of the loop.  ``budget`` optionally caps total calls.
    """

    fn: Callable[[MixedPoint], float]
    noisy: bool = False
    budget: int | None = None
    name: str = ""


@dataclass(frozen=True)
class CampaignConfig:
    """Campaign settings: design sizes, iteration budget, seed, sub-configs.

    ``initial_pool``, when given, replaces the space-filling initial design
    by uniform draws without replacement from that finite pool (the protocol
    for tabular problems).  Above ``refit_full_max_n`` training points, the
    per-iteration refit keeps only the warm start instead of all multistarts.
    """

    n_initial: int = 10
    max_iterations: int = 30
    seed: int | np.random.SeedSequence = 0
    fit: FitConfig = field(default_factory=FitConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    initial_pool: tuple[MixedPoint, ...] | None = None
    refit_full_max_n: int = 100

    def __post_init__(self):
        if self.n_initial < 1:
            raise ValueError("n_initial must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass(frozen=True)
class HistoryRecord:
    """One evaluation: its index, point, outcome, and loop bookkeeping."""

    eval_index: int  # 1-based over all evaluations
    iteration: int  # eval_index - n_initial; <= 0 during the initial design
    point: MixedPoint
    response: float | None
    ok: bool
    incumbent: float | None
    ei: float | None
    fit: dict | None

    def to_dict(self) -> dict:
        return {
            "eval": self.eval_index,
            "iteration": self.iteration,
            "x": list(self.point.x),
            "t": list(self.point.t),
            "response": self.response,
            "ok": self.ok,
            "incumbent": self.incumbent,
            "ei": self.ei,
            "fit": self.fit,
        }


def maximin_lhs(
    n: int,
    dims: int,
    rng: np.random.Generator | int | None = None,
    restarts: int = 50,
) -> np.ndarray:
    """Best-of-``restarts`` Latin hypercube in the unit box.

    Each candidate hypercube places one point per stratum and column (a
    random permutation of stratified cells, jittered within each cell); the
    candidate maximizing the minimum pairwise distance wins.
    """
    if n < 1 or dims < 1:
        raise ValueError("n and dims must be >= 1")
    rng = np.random.default_rng(rng)
    best = None
    best_dist = -np.inf
    for _ in range(max(restarts, 1)):
        cells = np.column_stack([rng.permutation(n) for _ in range(dims)])
        sample = (cells + rng.uniform(size=(n, dims))) / n
        if n == 1:
            return sample
        diff = sample[:, None, :] - sample[None, :, :]
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        dist[np.diag_indices(n)] = np.inf
        d = float(np.min(dist))
        if d > best_dist:
            best, best_dist = sample, d
    return best


def initial_design(
    space: DesignSpace, n0: int, rng: np.random.Generator | int | None = None
) -> list[MixedPoint]:
    """Space-filling initial design: maximin LHS over the quantitative box,
    i.i.d. uniform levels for each qualitative factor."""
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    rng = np.random.default_rng(rng)
    if space.n_quant:
        unit = maximin_lhs(n0, space.n_quant, rng)
        lo = np.array([v.lower for v in space.quant])
        width = np.array([v.width for v in space.quant])
        xs = lo + unit * width
    else:
        xs = np.zeros((n0, 0))
    levels = np.column_stack(
        [rng.integers(1, f.n_levels + 1, size=n0) for f in space.qual]
    ) if space.n_qual else np.zeros((n0, 0), dtype=int)
    return [
        MixedPoint(x=tuple(xs[i]), t=tuple(int(v) for v in levels[i]))
        for i in range(n0)
    ]


@dataclass
class _Pending:
    point: MixedPoint
    ei: float | None
    fit: dict | None
    is_initial: bool


class Campaign:
    """State machine for one sequential optimization run (minimization)."""

    def __init__(
        self,
        space: DesignSpace,
        config: CampaignConfig | None = None,
        initial_points: Sequence[MixedPoint] | None = None,
    ):
        self.space = space
        self.config = config or CampaignConfig()
        seed = self.config.seed
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        init_ss, fit_ss, acq_ss, tuple_ss = seq.spawn(4)
        self._fit_rng = np.random.default_rng(fit_ss)
        self._acq_rng = np.random.default_rng(acq_ss)
        self._tuple_rng = np.random.default_rng(tuple_ss)

        if initial_points is not None:
            self._initial = list(initial_points)
        elif self.config.initial_pool is not None:
            pool = self.config.initial_pool
            if len(pool) < self.config.n_initial:
                raise ValueError(
                    f"initial pool has {len(pool)} points, need {self.config.n_initial}"
                )
            rng = np.random.default_rng(init_ss)
            idx = rng.choice(len(pool), size=self.config.n_initial, replace=False)
            self._initial = [pool[int(i)] for i in idx]
        else:
            self._initial = initial_design(space, self.config.n_initial, np.random.default_rng(init_ss))
        for pt in self._initial:
            check_point(space, pt)

        self.history: list[HistoryRecord] = []
        self._dataset = Dataset((), np.zeros(0))
        self._pending: _Pending | None = None
        self._incumbent: float | None = None
        self._last_theta: np.ndarray | None = None
        self._model: FittedModel | None = None
        self._final_model: FittedModel | None = None

    # -- state introspection ------------------------------------------------

    @property
    def dataset(self) -> Dataset:
        """Successfully evaluated points with raw responses."""
        return self._dataset

    @property
    def incumbent(self) -> float | None:
        return self._incumbent

    @property
    def initial_points(self) -> list[MixedPoint]:
        return list(self._initial)

    @property
    def n_told(self) -> int:
        return len(self.history)

    @property
    def completed_iterations(self) -> int:
        return max(0, len(self.history) - len(self._initial))

    @property
    def model(self) -> FittedModel | None:
        """Model from the most recent proposal refit, if any."""
        return self._model

    # -- ask / tell ---------------------------------------------------------

    def ask(self) -> MixedPoint:
        """Next point to evaluate.

        Hands out untold initial points first; afterwards refits the model on
        all data and maximizes EI.  Repeated asks without an intervening tell
        return the same point.  Raises :class:`BudgetExhaustedError` once
        ``max_iterations`` proposals have been evaluated and
        :class:`ExhaustedSpaceError` when a candidate set is used up.
        """
        if self._pending is not None:
            return self._pending.point
        if len(self.history) < len(self._initial):
            point = self._initial[len(self.history)]
            self._pending = _Pending(point, ei=None, fit=None, is_initial=True)
            return point
        if self.completed_iterations >= self.config.max_iterations:
            raise BudgetExhaustedError(
                f"campaign finished its {self.config.max_iterations} iterations"
            )
        if len(self._dataset) == 0:
            raise RuntimeError("cannot propose: no successful evaluations to fit on")
        model = self._refit()
        self._model = model
        self._last_theta = model.theta
        point, ei = propose_next(
            model,
            self.config.acquisition,
            rng=self._acq_rng,
            rng_tuples=self._tuple_rng,
        )
        self._pending = _Pending(point, ei=ei, fit=model.diagnostics.to_dict(), is_initial=False)
        return point

    def _refit(self) -> FittedModel:
        cfg = self.config.fit
        warm = self._last_theta
        if len(self._dataset) > self.config.refit_full_max_n and warm is not None:
            cfg = replace(cfg, n_starts=0)
        return fit(self._dataset, self.space, cfg, rng=self._fit_rng, warm_start=warm)

    def tell(self, point: MixedPoint, response: float) -> None:
        """Record an evaluation for the pending ask (or the next initial point).

        Non-finite responses are recorded as failures and excluded from the
        model dataset; the loop continues on the remaining points.
        """
        if self._pending is not None:
            if point != self._pending.point:
                raise ValueError("told point does not match the pending ask")
            pending = self._pending
        elif len(self.history) < len(self._initial) and point == self._initial[len(self.history)]:
            pending = _Pending(point, ei=None, fit=None, is_initial=True)
        else:
            raise ValueError(
                "tell must follow an ask for the same point, or supply the next "
                "initial-design point in order"
            )
        check_point(self.space, point)
        y = float(response)
        ok = bool(np.isfinite(y))
        if ok:
            self._dataset = self._dataset.append(point, y)
            if self._incumbent is None or y < self._incumbent:
                self._incumbent = y
        eval_index = len(self.history) + 1
        self.history.append(
            HistoryRecord(
                eval_index=eval_index,
                iteration=eval_index - len(self._initial),
                point=point,
                response=y if ok else None,
                ok=ok,
                incumbent=self._incumbent,
                ei=pending.ei,
                fit=pending.fit,
            )
        )
        self._pending = None
        self._final_model = None

    def final_model(self) -> FittedModel:
        """Model fitted on the complete dataset (cached until the next tell)."""
        if self._final_model is None:
            self._final_model = self._refit()
        return self._final_model


def run(objective: Objective, campaign: Campaign) -> Campaign:
    """Drive ask/tell until the iteration budget, the objective's evaluation
    budget, or the candidate space is exhausted; returns the campaign."""
    evals = 0
    while True:
        if objective.budget is not None and evals >= objective.budget:
            break
        try:
            point = campaign.ask()
        except (BudgetExhaustedError, ExhaustedSpaceError):
            break
        try:
            y = float(objective.fn(point))
        except Exception:
            y = float("nan")
        evals += 1
        campaign.tell(point, y)
    return campaign


def write_history(campaign: Campaign, path) -> None:
    """One JSON record per history row (line-delimited)."""
    with open(path, "w") as fh:
        for rec in campaign.history:
            fh.write(json.dumps(rec.to_dict()) + "\n")


def read_history(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
