"""Correlation function over mixed inputs and the training-matrix factorization.

The correlation between two normalized points is

    exp{ -sum_i phi_i (x_i - x'_i)^2  -  sum_j ||z_j(t_j) - z_j(t'_j)||^2 }

where each qualitative factor's levels are embedded as rows of a (m_j, 2)
latent-coordinate matrix.  With q = 0 this is the anisotropic Gaussian kernel;
with p = 0 it is a Gaussian kernel with unit roughness over the concatenated
latent coordinates.  Alternative correlation families (Matern, power
exponential) would slot in by replacing the three functions below; only the
Gaussian family is implemented.

Everything here is pure and operates on unit-scaled quantitative inputs and
0-based level arrays; :class:`CorrMatrixFactor` is immutable after
construction, so concurrent solves are safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .space import Dataset, MixedPoint

__all__ = [
    "KernelParams",
    "CorrMatrixFactor",
    "FactorizationError",
    "correlation",
    "build_corr_matrix",
    "cross_corr_vector",
    "corr_matrix_from_arrays",
    "cross_corr_from_arrays",
    "embed_arrays",
    "factorize",
]

JITTER_START = 1e-8
JITTER_MAX = 1e-4


class FactorizationError(RuntimeError):
    """Cholesky failed even at maximum jitter.

    With a zero nugget this usually signals pathologically duplicated points.
    """


@dataclass(frozen=True, eq=False)
class KernelParams:
    """Correlation parameters: per-dimension roughness, latent rows, nugget.

    ``roughness`` has one positive entry per quantitative dimension (larger
    means faster correlation decay).  ``latents`` holds one (m_j, 2) float
    array per qualitative factor, rows indexed by 0-based level.  ``nugget``
    is the diagonal inflation for noisy responses (0 for deterministic fits).

    Arbitrary finite latent rows are accepted; the identifiability pinning
    (level 1 at the origin, level 2 on the nonnegative first axis) is a
    property of *estimated* embeddings, enforced by the fit encoding.
    """

    roughness: np.ndarray
    latents: tuple[np.ndarray, ...] = ()
    nugget: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.roughness, dtype=float).reshape(-1)
        object.__setattr__(self, "roughness", r)
        if np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise ValueError(f"roughness entries must be positive and finite, got {r}")
        zs = []
        for j, z in enumerate(self.latents):
            z = np.asarray(z, dtype=float)
            if z.ndim != 2 or z.shape[1] != 2 or z.shape[0] < 2:
                raise ValueError(
                    f"latents[{j}] must have shape (m_j >= 2, 2), got {z.shape}"
                )
            if not np.all(np.isfinite(z)):
                raise ValueError(f"latents[{j}] contains non-finite entries")
            z.setflags(write=False)
            zs.append(z)
        object.__setattr__(self, "latents", tuple(zs))
        if not (np.isfinite(self.nugget) and self.nugget >= 0):
            raise ValueError(f"nugget must be >= 0, got {self.nugget}")
        r.setflags(write=False)

    @property
    def n_quant(self) -> int:
        return self.roughness.shape[0]

    @property
    def n_qual(self) -> int:
        return len(self.latents)


def embed_arrays(x: np.ndarray, t: np.ndarray, params: KernelParams) -> np.ndarray:
    """Map (normalized quant, 0-based level) arrays to weighted feature rows.

    Returns an (n, p + 2q) array whose squared Euclidean row distances equal
    the exponent of the correlation function, i.e. quant columns are scaled by
    sqrt(roughness) and latent coordinates are appended with unit weight.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.atleast_2d(np.asarray(t, dtype=int))
    n = max(x.shape[0], t.shape[0])
    if x.shape != (n, params.n_quant) or t.shape != (n, params.n_qual):
        raise ValueError(
            f"expected shapes ({n}, {params.n_quant}) and ({n}, {params.n_qual}), "
            f"got {x.shape} and {t.shape}"
        )
    cols = [x * np.sqrt(params.roughness)]
    for j, z in enumerate(params.latents):
        lev = t[:, j]
        if np.any(lev < 0) or np.any(lev >= z.shape[0]):
            raise ValueError(f"level index out of range for factor {j}")
        cols.append(z[lev])
    return np.hstack(cols)


def _point_arrays(pt: MixedPoint) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(pt.x, dtype=float).reshape(1, -1)
    t = np.asarray(pt.t, dtype=int).reshape(1, -1) - 1
    return x, t


def correlation(a: MixedPoint, b: MixedPoint, params: KernelParams) -> float:
    """Correlation between two normalized points; symmetric, in (0, 1]."""
    ua = embed_arrays(*_point_arrays(a), params)
    ub = embed_arrays(*_point_arrays(b), params)
    return float(np.exp(-np.sum((ua - ub) ** 2)))


def corr_matrix_from_arrays(x: np.ndarray, t: np.ndarray, params: KernelParams) -> np.ndarray:
    """Dense n-by-n correlation matrix (unit diagonal, no nugget)."""
    u = embed_arrays(x, t, params)
    return np.exp(-cdist(u, u, "sqeuclidean"))


def cross_corr_from_arrays(
    xq: np.ndarray, tq: np.ndarray, x: np.ndarray, t: np.ndarray, params: KernelParams
) -> np.ndarray:
    """(n_query, n_train) matrix of pairwise correlations."""
    uq = embed_arrays(xq, tq, params)
    u = embed_arrays(x, t, params)
    return np.exp(-cdist(uq, u, "sqeuclidean"))


@dataclass(frozen=True, eq=False)
class CorrMatrixFactor:
    """Cholesky factorization of R + (nugget + jitter) * I.

    ``matrix`` is the factorized matrix itself (kept for diagnostics; sizes
    here never exceed a few hundred).  ``log_det`` is its log-determinant and
    ``jitter`` the diagonal inflation that was actually needed beyond the
    nugget (0 when the first attempt succeeded).
    """

    matrix: np.ndarray
    chol: np.ndarray
    log_det: float
    nugget: float
    jitter: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """(R + (nugget + jitter) I)^-1 rhs via the cached factorization."""
        return cho_solve((self.chol, True), rhs, check_finite=False)

    def solve_lower(self, rhs: np.ndarray) -> np.ndarray:
        """L^-1 rhs, where L L^T is the factorized matrix."""
        return solve_triangular(self.chol, rhs, lower=True, check_finite=False)


def factorize(corr: np.ndarray, nugget: float = 0.0) -> CorrMatrixFactor:
    """Factorize ``corr + nugget*I``, escalating jitter geometrically on failure.

    The first attempt uses no jitter; afterwards jitter runs 1e-8, 1e-7, ...
    up to 1e-4 before giving up with :class:`FactorizationError`.
    """
    n = corr.shape[0]
    jitter = 0.0
    while True:
        m = corr.copy()
        m.flat[:: n + 1] += nugget + jitter
        try:
            chol = cholesky(m, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            chol = None
        if chol is not None:
            log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
            return CorrMatrixFactor(
                matrix=m, chol=chol, log_det=log_det, nugget=nugget, jitter=jitter
            )
        if jitter == 0.0:
            jitter = JITTER_START
        elif jitter * 10 <= JITTER_MAX:
            jitter *= 10
        else:
            raise FactorizationError(
                f"correlation matrix (n={n}) not positive definite even with "
                f"jitter {JITTER_MAX:g}; with nugget=0 this usually means "
                "duplicated points"
            )


def _dataset_arrays(data: Dataset, params: KernelParams) -> tuple[np.ndarray, np.ndarray]:
    n = len(data)
    x = np.array([pt.x for pt in data.points], dtype=float).reshape(n, params.n_quant)
    t = np.array([pt.t for pt in data.points], dtype=int).reshape(n, params.n_qual) - 1
    return x, t


def build_corr_matrix(data: Dataset, params: KernelParams) -> CorrMatrixFactor:
    """Assemble and factorize the training correlation matrix.

    ``data`` must hold normalized points.  The nugget from ``params`` is added
    to the diagonal before factorization.
    """
    if len(data) < 1:
        raise ValueError("need at least one point to build a correlation matrix")
    x, t = _dataset_arrays(data, params)
    corr = corr_matrix_from_arrays(x, t, params)
    return factorize(corr, params.nugget)


def cross_corr_vector(query: MixedPoint, data: Dataset, params: KernelParams) -> np.ndarray:
    """Correlations between one normalized query point and every training point."""
    x, t = _dataset_arrays(data, params)
    xq, tq = _point_arrays(query)
    return cross_corr_from_arrays(xq, tq, x, t, params)[0]
