"""Scalar-on-two-functions regression with a bilinear interaction kernel.

The response is modelled as

    y_i = mu + <A, theta_i> + <B, pi_i> + <C theta_i, pi_i> + eps_i

and, after truncating every function at ``K`` orthonormal basis functions,
as a linear model in ``2K + K**2`` columns. Coefficients are estimated by
OLS and then by quasi-generalized least squares with a covariance matrix
built from a variogram fitted to the OLS residuals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular

from .basis import BasisSpec, CoefficientVector, KernelCoefficients, reconstruct_function, reconstruct_kernel
from .variogram import (
    DEFAULT_N_BINS,
    CovarianceMatrix,
    EmpiricalVariogram,
    SiteLocation,
    VariogramModel,
    build_covariance_from_distances,
    coords,
    distance_matrix,
    empirical_variogram_from_distances,
    fit_variogram,
)

ModelId = Literal["M1", "M2", "M3", "M4"]
MODEL_IDS = ("M1", "M2", "M3", "M4")
MODEL_DESCRIPTIONS = {
    "M1": "full: theta + pi + interaction",
    "M2": "additive: theta + pi",
    "M3": "theta only",
    "M4": "pi only",
}
RANK_TOL = 1e-10


class RegressionError(ValueError):
    pass


class RankDeficiencyError(RegressionError):
    def __init__(self, message: str, columns: Sequence[tuple[int, ...]]):
        super().__init__(message)
        self.columns = list(columns)


class SpatialIdentifiabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Dataset:
    """Responses with the truncated expansions of both predictor curves.

    ``theta`` and ``pi`` are ``(n, K)`` coefficient arrays in a shared basis.
    """

    sites: tuple[SiteLocation, ...]
    y: np.ndarray
    theta: np.ndarray
    pi: np.ndarray
    basis: BasisSpec | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        pi = np.atleast_2d(np.asarray(self.pi, dtype=float))
        n = y.size
        if theta.shape[0] != n or pi.shape[0] != n or len(self.sites) != n:
            raise RegressionError("sites, y, theta and pi must have the same number of rows")
        if theta.shape[1] != pi.shape[1]:
            raise RegressionError(f"K mismatch: theta has {theta.shape[1]} coefficients, pi {pi.shape[1]}")
        if self.basis is not None and theta.shape[1] != self.basis.K:
            raise RegressionError("coefficient width differs from basis K")
        if not np.all(np.isfinite(y)):
            raise RegressionError("non-finite response values")
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "pi", pi)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def K(self) -> int:
        return self.theta.shape[1]

    @cached_property
    def distances(self) -> np.ndarray:
        return distance_matrix(coords(self.sites))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        sub = Dataset(tuple(self.sites[i] for i in idx), self.y[idx], self.theta[idx], self.pi[idx], self.basis)
        if "distances" in self.__dict__:
            sub.__dict__["distances"] = self.distances[np.ix_(idx, idx)]
        return sub


def n_columns(K: int, model_id: ModelId = "M1") -> int:
    return {"M1": 2 * K + K * K, "M2": 2 * K, "M3": K, "M4": K}[model_id]


def design_from_coefficients(theta: np.ndarray, pi: np.ndarray, model_id: ModelId = "M1") -> np.ndarray:
    """Columns ``[theta | pi | theta_k * pi_l]`` with row-major ``(k, l)`` ordering."""
    if model_id not in MODEL_IDS:
        raise RegressionError(f"unknown model id {model_id!r}")
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    if theta.shape != pi.shape:
        raise RegressionError(f"K mismatch between theta {theta.shape} and pi {pi.shape}")
    if model_id == "M3":
        return theta.copy()
    if model_id == "M4":
        return pi.copy()
    if model_id == "M2":
        return np.hstack([theta, pi])
    inter = (theta[:, :, None] * pi[:, None, :]).reshape(theta.shape[0], -1)
    return np.hstack([theta, pi, inter])


def column_labels(K: int, model_id: ModelId = "M1") -> list[str]:
    a = [f"a{k + 1}" for k in range(K)]
    b = [f"b{k + 1}" for k in range(K)]
    c = [f"c{k + 1}_{l + 1}" for k in range(K) for l in range(K)]
    return {"M1": a + b + c, "M2": a + b, "M3": a, "M4": b}[model_id]


@dataclass(frozen=True)
class DesignMatrix:
    matrix: np.ndarray
    model_id: ModelId
    K: int

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def labels(self) -> list[str]:
        return column_labels(self.K, self.model_id)


def build_design(dataset: Dataset, model_id: ModelId = "M1") -> DesignMatrix:
    X = design_from_coefficients(dataset.theta, dataset.pi, model_id)
    return DesignMatrix(X, model_id, dataset.K)


@dataclass(frozen=True)
class FittedModel:
    """Estimated intercept and coefficient blocks of one of the nested models.

    ``rss`` is the minimized objective: the raw residual sum of squares for
    OLS and the whitened one for GLS. ``r2`` always uses raw residuals.
    """

    mu: float
    phi: np.ndarray
    phi_cov: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    model_id: ModelId
    K: int
    rss: float
    r2: float
    method: Literal["ols", "gls"] = "ols"
    sigma: CovarianceMatrix | None = None
    variogram: VariogramModel | None = None
    empirical: EmpiricalVariogram | None = None
    basis: BasisSpec | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.residuals.size

    @property
    def p(self) -> int:
        return self.phi.size

    @property
    def a(self) -> np.ndarray:
        K = self.K
        return self.phi[:K].copy() if self.model_id in ("M1", "M2", "M3") else np.zeros(K)

    @property
    def b(self) -> np.ndarray:
        K = self.K
        if self.model_id in ("M1", "M2"):
            return self.phi[K : 2 * K].copy()
        if self.model_id == "M4":
            return self.phi[:K].copy()
        return np.zeros(K)

    @property
    def c(self) -> np.ndarray:
        K = self.K
        if self.model_id == "M1":
            return self.phi[2 * K :].reshape(K, K).copy()
        return np.zeros((K, K))

    @property
    def standard_errors(self) -> np.ndarray:
        """Standard errors of ``(mu, phi)``."""
        return np.sqrt(np.clip(np.diag(self.phi_cov), 0.0, None))

    def with_basis(self, basis: BasisSpec) -> "FittedModel":
        if basis.K != self.K:
            raise RegressionError("basis K differs from model K")
        return replace(self, basis=basis)


def _with_intercept(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _collinear_groups(Z: np.ndarray, dependent: np.ndarray, independent: np.ndarray) -> list[tuple[int, ...]]:
    groups = []
    for j in dependent:
        coef, *_ = np.linalg.lstsq(Z[:, independent], Z[:, j], rcond=None)
        involved = independent[np.abs(coef) > 1e-8 * max(np.abs(coef).max(), 1e-300)]
        groups.append(tuple(sorted(int(i) for i in np.append(involved, j))))
    return groups


def _least_squares(Z: np.ndarray, y: np.ndarray):
    """QR least squares with rank detection; returns ``(beta, R)``.

    Column 0 of ``Z`` is the intercept; reported column indices refer to the
    design matrix without it (intercept reported as -1).
    """
    n, q = Z.shape
    if n < q:
        raise RegressionError(f"need at least as many observations ({n}) as parameters ({q})")
    # Unit-norm columns so the rank test does not depend on predictor units.
    norms = np.linalg.norm(Z, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        shown = [(int(j) - 1,) for j in zero]
        raise RankDeficiencyError(f"all-zero design columns (0-based, -1 = intercept): {shown}", shown)
    Zs = Z / norms
    Q, R, piv = qr(Zs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * diag[0])) if q else 0
    if rank < q:
        groups = _collinear_groups(Zs, piv[rank:], np.sort(piv[:rank]))
        shown = [tuple(i - 1 for i in g) for g in groups]
        raise RankDeficiencyError(
            f"design is rank deficient (rank {rank} < {q}); collinear design columns "
            f"(0-based, -1 = intercept): {shown}",
            shown,
        )
    beta = np.empty(q)
    beta[piv] = solve_triangular(R, Q.T @ y)
    # (Zs^T Zs)^-1 = P R^-1 R^-T P^T, then undo the column scaling.
    Rinv = solve_triangular(R, np.eye(q))
    cov = np.empty((q, q))
    cov[np.ix_(piv, piv)] = Rinv @ Rinv.T
    return beta / norms, cov / np.outer(norms, norms)


def _r2(y: np.ndarray, resid: np.ndarray) -> float:
    tss = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(resid @ resid) / tss if tss > 0 else float("nan")


def _as_matrix(X) -> tuple[np.ndarray, str, int]:
    if isinstance(X, DesignMatrix):
        return X.matrix, X.model_id, X.K
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X, "M1", 0


def ols_fit(X, y) -> FittedModel:
    """Ordinary least squares with an intercept, via pivoted QR."""
    Xm, model_id, K = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    Z = _with_intercept(Xm)
    if len(y) <= Z.shape[1]:
        raise RegressionError(f"need more observations ({len(y)}) than parameters ({Z.shape[1]})")
    beta, unscaled = _least_squares(Z, y)
    fitted = Z @ beta
    resid = y - fitted
    rss = float(resid @ resid)
    s2 = rss / (len(y) - Z.shape[1])
    return FittedModel(
        mu=float(beta[0]), phi=beta[1:], phi_cov=s2 * unscaled, residuals=resid, fitted=fitted,
        model_id=model_id, K=K, rss=rss, r2=_r2(y, resid), method="ols",
    )


def whiten(L: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``L^-1 A`` for a lower Cholesky factor ``L``."""
    return solve_triangular(L, A, lower=True, check_finite=False)


def gls_fit(X, y, sigma) -> FittedModel:
    """Generalized least squares by whitening with the Cholesky factor of ``sigma``.

    ``sigma`` may be a :class:`CovarianceMatrix` or a plain array.
    """
    Xm, model_id, K = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if isinstance(sigma, CovarianceMatrix):
        L = sigma.factor
    else:
        L = np.linalg.cholesky(np.asarray(sigma, dtype=float))
        sigma = CovarianceMatrix(np.asarray(sigma, dtype=float), L)
    Z = _with_intercept(Xm)
    beta, cov = _least_squares(whiten(L, Z), whiten(L, y))
    fitted = Z @ beta
    resid = y - fitted
    wres = whiten(L, resid)
    return FittedModel(
        mu=float(beta[0]), phi=beta[1:], phi_cov=cov, residuals=resid, fitted=fitted,
        model_id=model_id, K=K, rss=float(wres @ wres), r2=_r2(y, resid), method="gls", sigma=sigma,
    )


def estimate_covariance(
    residuals: np.ndarray,
    dist: np.ndarray,
    family: str = "exponential",
    n_bins: int = DEFAULT_N_BINS,
    max_dist: float | None = None,
) -> tuple[EmpiricalVariogram, VariogramModel, CovarianceMatrix]:
    ev = empirical_variogram_from_distances(residuals, dist, n_bins, max_dist)
    model = fit_variogram(ev, family)
    return ev, model, build_covariance_from_distances(model, dist)


def _min_offdiag(dist: np.ndarray) -> float:
    n = dist.shape[0]
    if n < 2:
        return np.inf
    return float(np.min(dist[~np.eye(n, dtype=bool)]))


def qgls_fit(
    dataset: Dataset,
    model_id: ModelId = "M1",
    variogram_family: str = "exponential",
    qgls_iterations: int = 1,
    n_bins: int = DEFAULT_N_BINS,
    max_dist: float | None = None,
) -> FittedModel:
    """OLS pre-fit, variogram of the residuals, then GLS with the plug-in covariance.

    The variogram/GLS step is repeated ``qgls_iterations`` times, each time on
    the residuals of the previous fit.
    """
    if qgls_iterations < 1:
        raise RegressionError("qgls_iterations must be >= 1")
    # The variogram fit amplifies last-bit differences in the OLS residuals,
    # so rows are processed in a canonical order to make the result exactly
    # independent of how the caller ordered them.
    order = _canonical_order(dataset)
    work = dataset.subset(order)
    X = build_design(work, model_id)
    fit = ols_fit(X, work.y)
    dist = work.distances
    for _ in range(qgls_iterations):
        ev, vmodel, sigma = estimate_covariance(fit.residuals, dist, variogram_family, n_bins, max_dist)
        fit = gls_fit(X, work.y, sigma)
    if np.any(order != np.arange(order.size)):
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        sigma = build_covariance_from_distances(vmodel, dataset.distances)
        fit = replace(fit, residuals=fit.residuals[inv], fitted=fit.fitted[inv], sigma=sigma)
    if vmodel.range < _min_offdiag(dist):
        warnings.warn(
            f"fitted variogram range {vmodel.range:.3g} km is below the smallest inter-site "
            "distance; spatial correlation is not identifiable and Sigma is nearly diagonal",
            SpatialIdentifiabilityWarning,
            stacklevel=2,
        )
    return replace(fit, variogram=vmodel, empirical=ev, basis=dataset.basis)


def _canonical_order(dataset: Dataset) -> np.ndarray:
    """Row order sorted by site coordinates, then by the data; ties are identical rows."""
    keys = [dataset.y, *dataset.theta.T[::-1], *dataset.pi.T[::-1]]
    keys += [np.array([s.lat for s in dataset.sites]), np.array([s.lon for s in dataset.sites])]
    return np.lexsort(keys)


def _coeff_array(v) -> np.ndarray:
    return v.coeffs if isinstance(v, CoefficientVector) else np.asarray(v, dtype=float).reshape(-1)


def predict(model: FittedModel, theta, pi) -> float:
    """``mu + a.alpha + b.beta + alpha^T C beta`` for one site."""
    for v in (theta, pi):
        if isinstance(v, CoefficientVector) and model.basis is not None and v.basis != model.basis:
            raise RegressionError("basis of the curve differs from the model's basis")
    alpha, beta = _coeff_array(theta), _coeff_array(pi)
    if alpha.size != model.K or beta.size != model.K:
        raise RegressionError(f"expected {model.K} coefficients per curve")
    return float(model.mu + model.a @ alpha + model.b @ beta + alpha @ model.c @ beta)


def predict_many(model: FittedModel, theta: np.ndarray, pi: np.ndarray) -> np.ndarray:
    X = design_from_coefficients(theta, pi, model.model_id)
    return model.mu + X @ model.phi


@dataclass(frozen=True)
class CoefficientFunctions:
    grid: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def coefficient_functions(model: FittedModel, grid: np.ndarray | None = None) -> CoefficientFunctions:
    """Reconstruct ``A``, ``B`` and the kernel ``C`` on ``grid`` (default 0.1 kyr steps)."""
    if model.basis is None:
        raise RegressionError("model carries no basis; use FittedModel.with_basis")
    basis = model.basis
    if grid is None:
        grid = basis.domain.grid(0.1)
    grid = np.asarray(grid, dtype=float)
    A = reconstruct_function(CoefficientVector(basis, model.a), grid)
    B = reconstruct_function(CoefficientVector(basis, model.b), grid)
    C = reconstruct_kernel(KernelCoefficients(basis, model.c), grid, grid)
    return CoefficientFunctions(grid, A, B, C)
