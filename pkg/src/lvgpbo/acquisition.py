"""Expected improvement and its maximization over a mixed design space.

For minimization, with ``delta = incumbent - mean``, expected improvement is

    EI = sd * pdf(delta / sd) + delta * cdf(delta / sd)

degenerating to ``max(0, delta)`` as sd -> 0.  The proposal step either scans
an explicit candidate set (tabular problems) or enumerates qualitative level
tuples and runs multi-start bounded ascent over the quantitative box for each
tuple.  EI evaluation is pure; per-tuple searches share the immutable model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from .model import FittedModel, _predict_normalized
from .space import MixedPoint, check_point, denormalize

__all__ = [
    "AcquisitionConfig",
    "ExhaustedSpaceError",
    "expected_improvement",
    "incumbent_value",
    "propose_next",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class ExhaustedSpaceError(RuntimeError):
    """Every candidate has already been sampled; the loop should stop cleanly."""


@dataclass(frozen=True)
class AcquisitionConfig:
    """How to pick the next sample.

    ``kind`` selects the incumbent: "ei" uses the minimum observed response,
    "ei-plugin" the minimum posterior mean over sampled locations (robust
    under noise).  ``candidates`` switches to exhaustive scanning of a finite
    point set.  Spaces with more than ``enumeration_cap`` qualitative tuples
    are subsampled uniformly without replacement.
    """

    kind: str = "ei"
    enumeration_cap: int = 4096
    n_starts: int = 10
    max_fun: int = 200
    candidates: tuple[MixedPoint, ...] | None = None
    exclude_sampled: bool = True
    duplicate_tol: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("ei", "ei-plugin"):
            raise ValueError(f"unknown acquisition kind {self.kind!r}")
        if self.enumeration_cap < 1 or self.n_starts < 1:
            raise ValueError("enumeration_cap and n_starts must be >= 1")


def expected_improvement(mean, sd, incumbent):
    """Expected improvement of a Gaussian prediction on the incumbent.

    Total on sd >= 0; array inputs broadcast.  Always nonnegative.
    """
    mean_arr = np.asarray(mean, dtype=float)
    sd_arr = np.asarray(sd, dtype=float)
    delta = incumbent - mean_arr
    positive = sd_arr > 0
    safe_sd = np.where(positive, sd_arr, 1.0)
    u = delta / safe_sd
    ei = np.where(
        positive,
        sd_arr * np.exp(-0.5 * u * u) / _SQRT_2PI + delta * ndtr(u),
        np.maximum(delta, 0.0),
    )
    ei = np.maximum(ei, 0.0)
    if np.isscalar(mean) and np.isscalar(sd):
        return float(ei)
    return ei


def incumbent_value(model: FittedModel, mode: str = "observed-min") -> float:
    """Reference value EI improves upon.

    "observed-min" is the smallest observed response; "plug-in" is the
    smallest posterior mean over the training locations.
    """
    if mode == "observed-min":
        return float(np.min(model.data.responses))
    if mode == "plug-in":
        xn, tn = model.arrays()
        means, _ = _predict_normalized(model, xn, tn)
        return float(np.min(means))
    raise ValueError(f"unknown incumbent mode {mode!r}")


def _incumbent_for(model: FittedModel, config: AcquisitionConfig) -> float:
    return incumbent_value(model, "plug-in" if config.kind == "ei-plugin" else "observed-min")


def _sampled_mask(model: FittedModel, xq: np.ndarray, tq: np.ndarray, tol: float) -> np.ndarray:
    """True for query rows within ``tol`` of a training point (same level tuple)."""
    xn, tn = model.arrays()
    mask = np.zeros(xq.shape[0], dtype=bool)
    for i in range(xq.shape[0]):
        same_levels = np.all(tn == tq[i], axis=1)
        if not np.any(same_levels):
            continue
        if xq.shape[1] == 0:
            mask[i] = True
        else:
            d = np.sqrt(np.sum((xn[same_levels] - xq[i]) ** 2, axis=1))
            mask[i] = bool(np.min(d) <= tol)
    return mask


def _propose_from_candidates(
    model: FittedModel, config: AcquisitionConfig, incumbent: float
) -> tuple[MixedPoint, float]:
    candidates = list(config.candidates)
    for pt in candidates:
        check_point(model.space, pt)
    xq, tq = model.space.normalize_arrays(candidates)
    keep = np.arange(len(candidates))
    if config.exclude_sampled:
        mask = _sampled_mask(model, xq, tq, config.duplicate_tol)
        keep = keep[~mask]
        if keep.size == 0:
            raise ExhaustedSpaceError(
                f"all {len(candidates)} candidates have been sampled"
            )
    means, variances = _predict_normalized(model, xq[keep], tq[keep])
    sds = np.sqrt(variances)
    ei = expected_improvement(means, sds, incumbent)
    # argmax of EI; ties by higher predictive sd, then lower candidate index
    best_local = min(range(keep.size), key=lambda i: (-ei[i], -sds[i], keep[i]))
    return candidates[int(keep[best_local])], float(ei[best_local])


def _lhs_starts(n: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    cells = np.column_stack([rng.permutation(n) for _ in range(dims)])
    return (cells + rng.uniform(size=(n, dims))) / n


def _enumerate_tuples(model: FittedModel, config, rng_tuples) -> list[tuple[int, ...]]:
    space = model.space
    total = space.n_level_tuples
    if total <= config.enumeration_cap:
        return list(space.level_tuples())
    all_tuples = list(space.level_tuples()) if total <= 4 * config.enumeration_cap else None
    if all_tuples is not None:
        idx = rng_tuples.choice(total, size=config.enumeration_cap, replace=False)
        return [all_tuples[i] for i in sorted(idx)]
    # space too large to materialize: rejection-sample distinct tuples
    seen: set[tuple[int, ...]] = set()
    out = []
    while len(out) < config.enumeration_cap:
        t = tuple(
            int(rng_tuples.integers(1, m + 1)) for m in space.qual_cardinalities
        )
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def _propose_continuous(
    model: FittedModel,
    config: AcquisitionConfig,
    incumbent: float,
    rng: np.random.Generator,
    rng_tuples: np.random.Generator,
) -> tuple[MixedPoint, float]:
    space = model.space
    p = space.n_quant
    tuples = _enumerate_tuples(model, config, rng_tuples)
    results = []  # (ei, sd, order, x_norm, level_tuple)

    order = 0
    for levels in tuples:
        t_row = np.asarray(levels, dtype=int).reshape(1, -1) - 1
        if p == 0:
            mean, var = _predict_normalized(model, np.zeros((1, 0)), t_row)
            sd = math.sqrt(var[0])
            results.append(
                (float(expected_improvement(mean[0], sd, incumbent)), sd, order, np.zeros(0), levels)
            )
            order += 1
            continue

        def neg_ei(x):
            mean, var = _predict_normalized(model, x.reshape(1, -1), t_row)
            return -expected_improvement(float(mean[0]), math.sqrt(max(var[0], 0.0)), incumbent)

        for x0 in _lhs_starts(config.n_starts, p, rng):
            res = minimize(
                neg_ei,
                x0,
                method="L-BFGS-B",
                bounds=[(0.0, 1.0)] * p,
                options={"maxfun": config.max_fun},
            )
            x_best = np.clip(res.x, 0.0, 1.0)
            mean, var = _predict_normalized(model, x_best.reshape(1, -1), t_row)
            sd = math.sqrt(max(var[0], 0.0))
            ei = float(expected_improvement(float(mean[0]), sd, incumbent))
            results.append((ei, sd, order, x_best, levels))
            order += 1

    results.sort(key=lambda r: (-r[0], -r[1], r[2]))
    chosen = results[0]
    if model.params.kernel.nugget == 0.0:
        # deterministic responses: re-sampling an existing point gains nothing
        for cand in results:
            xq = cand[3].reshape(1, -1)
            tq = np.asarray(cand[4], dtype=int).reshape(1, -1) - 1
            if not _sampled_mask(model, xq, tq, config.duplicate_tol)[0]:
                chosen = cand
                break
    ei, _, _, x_norm, levels = chosen
    proposal = denormalize(space, MixedPoint(x=tuple(float(v) for v in x_norm), t=tuple(levels)))
    return proposal, float(ei)


def propose_next(
    model: FittedModel,
    config: AcquisitionConfig | None = None,
    rng: np.random.Generator | int | None = None,
    rng_tuples: np.random.Generator | None = None,
) -> tuple[MixedPoint, float]:
    """Maximize expected improvement; returns the proposal and its EI value.

    With ``config.candidates`` set, every candidate is scored and the argmax
    returned (excluding already-sampled points when configured; an exhausted
    set raises :class:`ExhaustedSpaceError`).  Otherwise qualitative tuples
    are enumerated (or subsampled beyond the cap) and EI is maximized over
    the quantitative box per tuple with multi-start bounded ascent.
    """
    config = config or AcquisitionConfig()
    rng = np.random.default_rng(rng if rng is not None else 0)
    rng_tuples = rng_tuples if rng_tuples is not None else rng
    incumbent = _incumbent_for(model, config)
    if config.candidates is not None:
        return _propose_from_candidates(model, config, incumbent)
    return _propose_continuous(model, config, incumbent, rng, rng_tuples)
