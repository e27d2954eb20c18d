"""Latent-variable GP surrogate: profiled maximum-likelihood fit and prediction.

The model is a constant-mean GP whose correlation function is the mixed
Gaussian kernel from :mod:`lvgpbo.kernel`.  The mean ``mu`` and process
variance ``sigma2`` have closed-form maximum-likelihood estimates given the
correlation matrix, so only the roughness vector, the latent level
coordinates, and (for noisy responses) the nugget are optimized numerically.
The negative profiled log-likelihood being minimized is

    n * ln(sigma2_hat) + ln det(R)

Latent embeddings are identifiability-pinned: level 1 sits at the origin and
level 2 on the nonnegative first axis, leaving 2*m - 3 free coordinates per
m-level factor.  Responses are centered and scaled to unit variance before
fitting and the transform is undone at prediction time.

Two surfaces are provided: free functions (:func:`fit`, :func:`predict`, ...)
operating on :class:`~lvgpbo.space.Dataset`, and the scikit-learn style
:class:`LVGPRegressor` for array-based composition with the wider ecosystem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .kernel import (
    CorrMatrixFactor,
    FactorizationError,
    KernelParams,
    corr_matrix_from_arrays,
    cross_corr_from_arrays,
    factorize,
)
from .space import Dataset, DesignSpace, MixedPoint, QuantSpec, check_point

__all__ = [
    "FitConfig",
    "LVGPParams",
    "FittedModel",
    "FitDiagnostics",
    "FitFailedError",
    "ParamEncoding",
    "SENTINEL",
    "fit",
    "fit_objective",
    "model_from_params",
    "neg_profiled_loglik",
    "neg_loglik_from_params",
    "predict",
    "predict_batch",
    "profiled_mu_sigma2",
    "export_latents",
    "write_latents_csv",
    "LVGPRegressor",
]

SENTINEL = 1e10


class FitFailedError(RuntimeError):
    """Every optimization start failed to produce a valid likelihood."""


@dataclass(frozen=True)
class FitConfig:
    """Settings for maximum-likelihood estimation.

    ``noisy`` switches on nugget estimation; otherwise the nugget is fixed at
    zero.  Roughness and nugget are optimized on a log10 scale within the
    given bounds; latent coordinates are box-bounded by ``latent_bound``.
    """

    n_starts: int = 8
    max_fun: int = 500
    tol: float = 1e-6
    noisy: bool = False
    roughness_log_bounds: tuple[float, float] = (-3.0, 3.0)
    latent_bound: float = 3.0
    nugget_log_bounds: tuple[float, float] = (-8.0, 0.0)
    sigma2_floor: float = 1e-12


@dataclass(frozen=True, eq=False)
class LVGPParams:
    """All model parameters: kernel parameters plus the closed-form mu, sigma2."""

    kernel: KernelParams
    mu: float
    sigma2: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class ProfiledEstimates:
    mu: float
    sigma2: float
    clamped: bool


@dataclass(frozen=True)
class FitDiagnostics:
    """Per-fit record kept in campaign histories; all fields JSON-friendly.

    ``best_nll`` is None for models built without optimization (single-point
    fallback, explicitly supplied parameters).
    """

    n_starts: int
    converged: bool
    best_nll: float | None
    start_nlls: tuple[float, ...]
    warm_start_used: bool
    sigma2_clamped: bool
    interp_error: float | None = None
    min_train_variance: float | None = None

    def to_dict(self) -> dict:
        return {
            "n_starts": self.n_starts,
            "converged": self.converged,
            "best_nll": self.best_nll,
            "start_nlls": list(self.start_nlls),
            "warm_start_used": self.warm_start_used,
            "sigma2_clamped": self.sigma2_clamped,
            "interp_error": self.interp_error,
            "min_train_variance": self.min_train_variance,
        }


class ParamEncoding:
    """Maps between the optimizer's flat vector and :class:`KernelParams`.

    Layout: log10 roughness (p entries), then per qualitative factor the free
    latent coordinates (level 2's first coordinate, then both coordinates of
    levels 3..m), then log10 nugget when it is estimated.
    """

    def __init__(self, n_quant: int, cardinalities: Sequence[int], config: FitConfig):
        self.n_quant = n_quant
        self.cardinalities = tuple(int(m) for m in cardinalities)
        self.config = config
        self.n_latent = sum(2 * m - 3 for m in self.cardinalities)
        self.n_params = n_quant + self.n_latent + (1 if config.noisy else 0)

    def bounds(self) -> list[tuple[float, float]]:
        cfg = self.config
        out = [cfg.roughness_log_bounds] * self.n_quant
        b = cfg.latent_bound
        for m in self.cardinalities:
            out.append((0.0, b))
            out.extend([(-b, b)] * (2 * (m - 2)))
        if cfg.noisy:
            out.append(cfg.nugget_log_bounds)
        return out

    def decode(self, theta: np.ndarray) -> KernelParams:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        roughness = 10.0 ** theta[: self.n_quant]
        latents = []
        k = self.n_quant
        for m in self.cardinalities:
            z = np.zeros((m, 2))
            # level 1 stays at the origin; level 2's second coordinate stays 0
            z[1, 0] = theta[k]
            k += 1
            if m > 2:
                z[2:] = theta[k : k + 2 * (m - 2)].reshape(m - 2, 2)
                k += 2 * (m - 2)
            latents.append(z)
        nugget = float(10.0 ** theta[-1]) if self.config.noisy else 0.0
        return KernelParams(roughness=roughness, latents=tuple(latents), nugget=nugget)

    def encode(self, params: KernelParams) -> np.ndarray:
        """Inverse of :meth:`decode`, clipped into bounds (used for warm starts)."""
        parts = [np.log10(params.roughness)]
        for z in params.latents:
            parts.append([z[1, 0]])
            if z.shape[0] > 2:
                parts.append(z[2:].reshape(-1))
        if self.config.noisy:
            parts.append([np.log10(max(params.nugget, 10.0 ** self.config.nugget_log_bounds[0]))])
        theta = np.concatenate([np.asarray(p, dtype=float).reshape(-1) for p in parts])
        lo, hi = np.array(self.bounds()).T
        return np.clip(theta, lo, hi)

    def random_start(self, rng: np.random.Generator) -> np.ndarray:
        """Log-scale entries uniform in bounds; latent coordinates 0.5 * N(0, 1)."""
        cfg = self.config
        theta = np.empty(self.n_params)
        lo, hi = cfg.roughness_log_bounds
        theta[: self.n_quant] = rng.uniform(lo, hi, self.n_quant)
        k = self.n_quant
        for m in self.cardinalities:
            draws = 0.5 * rng.standard_normal(2 * m - 3)
            draws[0] = abs(draws[0])
            theta[k : k + draws.size] = np.clip(draws, -cfg.latent_bound, cfg.latent_bound)
            k += draws.size
        if cfg.noisy:
            theta[-1] = rng.uniform(*cfg.nugget_log_bounds)
        return theta


def profiled_mu_sigma2(
    data: Dataset, factor: CorrMatrixFactor, sigma2_floor: float = 1e-12
) -> ProfiledEstimates:
    """Closed-form maximum-likelihood mean and process variance.

    Both are computed through triangular solves against the cached Cholesky
    factor; the correlation matrix is never inverted explicitly.  A variance
    that collapses to round-off (constant responses, single point) is clamped
    to ``sigma2_floor`` and flagged.
    """
    return _profiled(factor, np.asarray(data.responses, dtype=float), sigma2_floor)


def _profiled(factor: CorrMatrixFactor, y: np.ndarray, floor: float) -> ProfiledEstimates:
    n = y.shape[0]
    ones = np.ones(n)
    li_one = factor.solve_lower(ones)
    li_y = factor.solve_lower(y)
    denom = float(li_one @ li_one)
    mu = float(li_one @ li_y) / denom
    resid = li_y - mu * li_one
    sigma2 = float(resid @ resid) / n
    clamped = sigma2 < floor
    return ProfiledEstimates(mu=mu, sigma2=max(sigma2, floor), clamped=clamped)


def _nll_arrays(
    xn: np.ndarray, tn: np.ndarray, y: np.ndarray, params: KernelParams, floor: float
) -> tuple[float, ProfiledEstimates | None, CorrMatrixFactor | None]:
    """Negative profiled log-likelihood; sentinel triple when factorization fails."""
    corr = corr_matrix_from_arrays(xn, tn, params)
    try:
        factor = factorize(corr, params.nugget)
    except FactorizationError:
        return SENTINEL, None, None
    est = _profiled(factor, y, floor)
    value = y.shape[0] * math.log(est.sigma2) + factor.log_det
    if not math.isfinite(value):
        return SENTINEL, None, None
    return value, est, factor


def neg_loglik_from_params(
    data: Dataset, space: DesignSpace, params: KernelParams, sigma2_floor: float = 1e-12
) -> float:
    """Negative profiled log-likelihood at explicit kernel parameters.

    Accepts arbitrary (unpinned) latent rows, which makes the isometry
    invariance of the likelihood directly checkable.
    """
    xn, tn = space.normalize_arrays(data.points)
    value, _, _ = _nll_arrays(xn, tn, data.responses, params, sigma2_floor)
    return value


def neg_profiled_loglik(
    theta: np.ndarray, data: Dataset, space: DesignSpace, config: FitConfig | None = None
) -> float:
    """Objective minimized by :func:`fit`, as a function of the encoded vector.

    Total: returns a large finite sentinel (never raises, never NaN) when the
    correlation matrix cannot be factorized at this ``theta``.
    """
    config = config or FitConfig()
    enc = ParamEncoding(space.n_quant, space.qual_cardinalities, config)
    params = enc.decode(np.asarray(theta, dtype=float))
    return neg_loglik_from_params(data, space, params, config.sigma2_floor)


@dataclass(frozen=True, eq=False)
class FittedModel:
    """A fitted surrogate: parameters plus cached factorization and weights.

    ``data`` holds unit-scaled points with the raw (untransformed) responses;
    ``params`` lives on the standardized response scale defined by
    ``y_center`` and ``y_scale``.  ``weights`` solves
    ``R weights = y_std - mu``.
    """

    space: DesignSpace
    data: Dataset
    params: LVGPParams
    factor: CorrMatrixFactor
    weights: np.ndarray
    y_center: float
    y_scale: float
    diagnostics: FitDiagnostics
    theta: np.ndarray | None = None
    config: FitConfig = field(default_factory=FitConfig)
    _xn: np.ndarray | None = None
    _tn: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.data)

    @property
    def mu(self) -> float:
        """Trend on the raw response scale."""
        return self.y_center + self.y_scale * self.params.mu

    @property
    def sigma2(self) -> float:
        """Process variance on the raw response scale."""
        return self.y_scale**2 * self.params.sigma2

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self._xn, self._tn

    def standardized_dataset(self) -> Dataset:
        y = (self.data.responses - self.y_center) / self.y_scale
        return Dataset(self.data.points, y)


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    center = float(np.mean(y))
    scale = float(np.std(y))
    if scale < 1e-12:
        scale = 1.0
    return (y - center) / scale, center, scale


def _normalized_dataset(data: Dataset, space: DesignSpace) -> Dataset:
    for pt in data.points:
        check_point(space, pt)
    xn, tn = space.normalize_arrays(data.points)
    pts = tuple(
        MixedPoint(x=tuple(xn[i]), t=tuple(int(v) + 1 for v in tn[i]))
        for i in range(len(data))
    )
    return Dataset(pts, data.responses)


def _flat_model(data_norm: Dataset, space: DesignSpace, config: FitConfig) -> FittedModel:
    """Single-observation fallback: constant prediction at the observed value."""
    y_std, center, scale = _standardize(data_norm.responses)
    kernel = KernelParams(
        roughness=np.ones(space.n_quant),
        latents=tuple(np.zeros((m, 2)) for m in space.qual_cardinalities),
        nugget=0.0,
    )
    factor = factorize(np.eye(1), 0.0)
    params = LVGPParams(kernel=kernel, mu=float(y_std[0]), sigma2=config.sigma2_floor)
    diag = FitDiagnostics(
        n_starts=0,
        converged=True,
        best_nll=None,
        start_nlls=(),
        warm_start_used=False,
        sigma2_clamped=True,
        interp_error=0.0,
        min_train_variance=0.0,
    )
    xn, tn = space.points_to_arrays(data_norm.points)
    return FittedModel(
        space=space,
        data=data_norm,
        params=params,
        factor=factor,
        weights=np.zeros(1),
        y_center=center,
        y_scale=scale,
        diagnostics=diag,
        theta=None,
        config=config,
        _xn=xn,
        _tn=tn,
    )


def _minimize_start(fun, theta0, bounds, config: FitConfig) -> tuple[float, np.ndarray]:
    res = minimize(
        fun,
        theta0,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxfun": config.max_fun, "ftol": config.tol},
    )
    best_val, best_x = float(res.fun), res.x
    if not res.success and "ABNORMAL" in str(res.message).upper():
        # line search stagnated; polish with a bounded simplex
        res2 = minimize(
            fun,
            best_x,
            method="Nelder-Mead",
            bounds=bounds,
            options={"maxfev": config.max_fun, "fatol": config.tol},
        )
        if float(res2.fun) < best_val:
            best_val, best_x = float(res2.fun), res2.x
    return best_val, np.asarray(best_x, dtype=float)


def _assemble(
    data_norm: Dataset,
    space: DesignSpace,
    kernel: KernelParams,
    config: FitConfig,
    diagnostics_parts: dict,
    theta: np.ndarray | None,
) -> FittedModel:
    xn, tn = space.points_to_arrays(data_norm.points)
    y_std, center, scale = _standardize(data_norm.responses)
    corr = corr_matrix_from_arrays(xn, tn, kernel)
    factor = factorize(corr, kernel.nugget)
    est = _profiled(factor, y_std, config.sigma2_floor)
    weights = factor.solve(y_std - est.mu)
    params = LVGPParams(kernel=kernel, mu=est.mu, sigma2=est.sigma2)

    interp_error = None
    min_train_var = None
    if kernel.nugget == 0.0:
        # interpolation / variance diagnostics at the training points
        means_std = est.mu + corr @ weights
        interp_error = float(np.max(np.abs(means_std - y_std))) * scale
        q = factor.solve_lower(corr)
        var_std = est.sigma2 * np.maximum(1.0 - np.sum(q * q, axis=0), 0.0)
        min_train_var = float(np.min(var_std)) * scale**2

    diag = FitDiagnostics(
        sigma2_clamped=est.clamped,
        interp_error=interp_error,
        min_train_variance=min_train_var,
        **diagnostics_parts,
    )
    return FittedModel(
        space=space,
        data=data_norm,
        params=params,
        factor=factor,
        weights=weights,
        y_center=center,
        y_scale=scale,
        diagnostics=diag,
        theta=theta,
        config=config,
        _xn=xn,
        _tn=tn,
    )


def model_from_params(
    data: Dataset, space: DesignSpace, kernel: KernelParams, config: FitConfig | None = None
) -> FittedModel:
    """Build a model at fixed kernel parameters (mu, sigma2 still profiled)."""
    config = config or FitConfig()
    data_norm = _normalized_dataset(data, space)
    parts = {
        "n_starts": 0,
        "converged": True,
        "best_nll": None,
        "start_nlls": (),
        "warm_start_used": False,
    }
    return _assemble(data_norm, space, kernel, config, parts, theta=None)


def fit(
    data: Dataset,
    space: DesignSpace,
    config: FitConfig | None = None,
    rng: np.random.Generator | int | None = None,
    warm_start: np.ndarray | None = None,
) -> FittedModel:
    """Fit by multi-start bounded minimization of the profiled likelihood.

    ``rng`` drives the random starts (an integer seeds a fresh generator;
    None gives the deterministic default stream).  ``warm_start`` is an
    encoded parameter vector, typically the previous refit's optimum, added
    as an extra start.
    """
    config = config or FitConfig()
    rng = np.random.default_rng(rng if rng is not None else 0)
    n = len(data)
    if n < 1:
        raise ValueError("cannot fit a model without observations")
    data_norm = _normalized_dataset(data, space)
    if n == 1:
        return _flat_model(data_norm, space, config)

    xn, tn = space.points_to_arrays(data_norm.points)
    y_std, _, _ = _standardize(data_norm.responses)
    enc = ParamEncoding(space.n_quant, space.qual_cardinalities, config)
    bounds = enc.bounds()

    def objective(theta):
        params = enc.decode(theta)
        value, _, _ = _nll_arrays(xn, tn, y_std, params, config.sigma2_floor)
        return value

    starts = [enc.random_start(rng) for _ in range(config.n_starts)]
    warm_used = False
    if warm_start is not None and np.asarray(warm_start).shape == (enc.n_params,):
        lo, hi = np.array(bounds).T
        starts.append(np.clip(np.asarray(warm_start, dtype=float), lo, hi))
        warm_used = True
    if not starts:
        raise ValueError("no optimization starts: n_starts is 0 and no warm start given")

    results = [_minimize_start(objective, theta0, bounds, config) for theta0 in starts]
    best_val, best_theta = min(results, key=lambda r: r[0])
    if best_val >= SENTINEL:
        raise FitFailedError(
            f"all {len(starts)} starts failed on n={n} points "
            f"({enc.n_params} free parameters); responses may be degenerate"
        )

    parts = {
        "n_starts": len(starts),
        "converged": True,
        "best_nll": best_val,
        "start_nlls": tuple(float(v) for v, _ in results),
        "warm_start_used": warm_used,
    }
    return _assemble(data_norm, space, enc.decode(best_theta), config, parts, best_theta)


def fit_objective(model: FittedModel):
    """The exact objective :func:`fit` minimized, for probing around the optimum.

    Returns a callable of the encoded parameter vector, evaluated against the
    model's cached normalized inputs and standardized responses.
    """
    enc = ParamEncoding(model.space.n_quant, model.space.qual_cardinalities, model.config)
    xn, tn = model.arrays()
    y_std = (model.data.responses - model.y_center) / model.y_scale

    def objective(theta: np.ndarray) -> float:
        params = enc.decode(np.asarray(theta, dtype=float))
        value, _, _ = _nll_arrays(xn, tn, y_std, params, model.config.sigma2_floor)
        return value

    return objective


def predict(model: FittedModel, query: MixedPoint) -> tuple[float, float]:
    """Posterior mean and variance at one raw-scale point."""
    check_point(model.space, query)
    means, variances = predict_batch(model, [query])
    return float(means[0]), float(variances[0])


def predict_batch(
    model: FittedModel, points: Sequence[MixedPoint], validate: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior mean/variance at raw-scale points."""
    if validate:
        for pt in points:
            check_point(model.space, pt)
    xq, tq = model.space.normalize_arrays(points)
    return _predict_normalized(model, xq, tq)


def _predict_normalized(
    model: FittedModel, xq: np.ndarray, tq: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    xn, tn = model.arrays()
    kernel = model.params.kernel
    rmat = cross_corr_from_arrays(xq, tq, xn, tn, kernel)  # (n_query, n_train)
    mean_std = model.params.mu + rmat @ model.weights
    q = model.factor.solve_lower(rmat.T)
    var_std = model.params.sigma2 * np.maximum(1.0 - np.sum(q * q, axis=0), 0.0)
    mean = model.y_center + model.y_scale * mean_std
    var = model.y_scale**2 * var_std
    return mean, var


def export_latents(model: FittedModel) -> list[tuple[str, str, float, float]]:
    """Estimated latent coordinates, one (factor, level, z1, z2) row per level.

    Row order follows the space's factor and level order, so the pinned rows
    (level 1 at the origin, level 2 on the first axis) come first per factor.
    An all-quantitative model yields an empty table.
    """
    rows = []
    for spec, z in zip(model.space.qual, model.params.kernel.latents):
        for lev, label in enumerate(spec.levels):
            rows.append((spec.name, label, float(z[lev, 0]), float(z[lev, 1])))
    return rows


def write_latents_csv(rows: Sequence[tuple[str, str, float, float]], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["factor", "level", "z1", "z2"])
        for factor, level, z1, z2 in rows:
            writer.writerow([factor, level, repr(z1), repr(z2)])


class LVGPRegressor(RegressorMixin, BaseEstimator):
    """Scikit-learn style interface to the mixed-input GP.

    ``X`` rows are laid out as the space's quantitative columns followed by
    its qualitative columns holding 1-based level indices.  When ``space`` is
    None every column is treated as quantitative with bounds inferred from
    the training data (and bound checks are skipped at prediction time).

    >>> reg = LVGPRegressor(space=my_space).fit(X, y)
    >>> mean, sd = reg.predict(X_new, return_std=True)
    """

    def __init__(
        self,
        space: DesignSpace | None = None,
        noisy: bool = False,
        n_starts: int = 8,
        max_fun: int = 500,
        tol: float = 1e-6,
        random_state: int | None = None,
    ):
        self.space = space
        self.noisy = noisy
        self.n_starts = n_starts
        self.max_fun = max_fun
        self.tol = tol
        self.random_state = random_state

    def _fit_config(self) -> FitConfig:
        return FitConfig(
            n_starts=self.n_starts, max_fun=self.max_fun, tol=self.tol, noisy=self.noisy
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=1, y_numeric=True)
        if self.space is None:
            lo, hi = X.min(axis=0), X.max(axis=0)
            pad = np.where(hi - lo < 1e-12, 0.5, 0.0)
            self.space_ = DesignSpace(
                quant=tuple(
                    QuantSpec(f"x{i}", float(l - p), float(u + p))
                    for i, (l, u, p) in enumerate(zip(lo, hi, pad))
                )
            )
        else:
            self.space_ = self.space
        expected = self.space_.n_quant + self.space_.n_qual
        if X.shape[1] != expected:
            raise ValueError(f"X has {X.shape[1]} columns, space expects {expected}")
        points = tuple(self.space_.row_to_point(row) for row in X)
        dataset = Dataset(points, y)
        self.model_ = fit(
            dataset,
            self.space_,
            self._fit_config(),
            rng=np.random.default_rng(self.random_state),
        )
        self.n_features_in_ = X.shape[1]
        self.mu_ = self.model_.mu
        self.sigma2_ = self.model_.sigma2
        self.roughness_ = self.model_.params.kernel.roughness
        self.nugget_ = self.model_.params.kernel.nugget
        return self

    def predict(self, X, return_std: bool = False):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        points = [self.space_.row_to_point(row) for row in X]
        validate = self.space is not None
        mean, var = predict_batch(self.model_, points, validate=validate)
        if return_std:
            return mean, np.sqrt(var)
        return mean

    def export_latents(self) -> list[tuple[str, str, float, float]]:
        check_is_fitted(self, "model_")
        return export_latents(self.model_)
