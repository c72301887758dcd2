"""Leave-one-out cross-validation, nested-model F tests and response-class profiles."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.special import betainc

from .basis import BasisError, BasisSpec, TimeDomain, project_values
from .regression import (
    MODEL_IDS,
    Dataset,
    FittedModel,
    ModelId,
    RegressionError,
    SpatialIdentifiabilityWarning,
    _least_squares,
    _with_intercept,
    build_design,
    estimate_covariance,
    n_columns,
    predict_many,
    whiten,
)
from .variogram import DEFAULT_N_BINS, SiteLocation, VariogramError

P_VALUE_FLOOR = 1e-300
FAMILY_ORDER = ("fourier", "bspline")


class CvError(RuntimeError):
    pass


@dataclass(frozen=True)
class FunctionalData:
    """Responses and both predictor curves sampled on one shared time grid.

    ``theta`` and ``pi`` have shape ``(n, len(grid))``.
    """

    sites: tuple[SiteLocation, ...]
    y: np.ndarray
    grid: np.ndarray
    theta: np.ndarray
    pi: np.ndarray
    domain: TimeDomain = field(default_factory=TimeDomain)

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        for name in ("y", "grid", "theta", "pi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.y.size
        if self.theta.shape != (n, self.grid.size) or self.pi.shape != (n, self.grid.size):
            raise ValueError("curve arrays must have shape (n_sites, n_grid)")
        if len(self.sites) != n:
            raise ValueError("sites and responses differ in length")

    @property
    def n(self) -> int:
        return self.y.size

    def complete_cases(self) -> "FunctionalData":
        """Drop sites with any missing response or curve value."""
        ok = np.isfinite(self.y) & np.all(np.isfinite(self.theta), 1) & np.all(np.isfinite(self.pi), 1)
        if ok.all():
            return self
        idx = np.flatnonzero(ok)
        return FunctionalData(
            tuple(self.sites[i] for i in idx), self.y[idx], self.grid, self.theta[idx], self.pi[idx], self.domain
        )

    def project(self, basis: BasisSpec) -> Dataset:
        return Dataset(
            self.sites,
            self.y,
            project_values(self.grid, self.theta, basis),
            project_values(self.grid, self.pi, basis),
            basis,
        )


@dataclass(frozen=True)
class Candidate:
    basis: BasisSpec
    variogram_family: str | None = "exponential"

    @property
    def label(self) -> str:
        return f"{self.basis.label}/{self.variogram_family or 'identity'}"


# -- leave-one-out ---------------------------------------------------------


def _fold_fit(Z, y, dist, family, n_bins, max_dist):
    beta, _ = _least_squares(Z, y)
    if family is None:
        return beta
    resid = y - Z @ beta
    _, _, sigma = estimate_covariance(resid, dist, family, n_bins, max_dist)
    beta, _ = _least_squares(whiten(sigma.factor, Z), whiten(sigma.factor, y))
    return beta


def loo_errors(
    X: np.ndarray,
    y: np.ndarray,
    dist: np.ndarray | None = None,
    variogram_family: str | None = "exponential",
    mode: Literal["honest", "fast"] = "honest",
    site_ids: Sequence[str] | None = None,
    n_bins: int = DEFAULT_N_BINS,
    max_dist: float | None = None,
) -> np.ndarray:
    """Out-of-fold prediction errors ``y_i - yhat_(-i)`` for design ``X``.

    ``variogram_family=None`` uses an identity covariance (plain OLS folds).
    ``mode='honest'`` re-estimates the variogram within every fold;
    ``mode='fast'`` reuses one covariance estimated on all sites and is an
    approximation.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(y.size, -1) if np.size(X) else np.zeros((y.size, 0))
    n = y.size
    Z = _with_intercept(X)
    if n - 1 < Z.shape[1]:
        raise CvError(
            f"leave-one-out needs n-1 >= parameters: n-1={n - 1}, parameters={Z.shape[1]}"
        )
    if site_ids is None:
        site_ids = [str(i) for i in range(n)]
    full_factor = None
    if variogram_family is not None and mode == "fast":
        beta, _ = _least_squares(Z, y)
        _, _, sigma = estimate_covariance(y - Z @ beta, dist, variogram_family, n_bins, max_dist)
        full_cov = sigma.matrix
    errors = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SpatialIdentifiabilityWarning)
                if variogram_family is not None and mode == "fast":
                    full_factor = np.linalg.cholesky(full_cov[np.ix_(keep, keep)])
                    beta, _ = _least_squares(whiten(full_factor, Z[keep]), whiten(full_factor, y[keep]))
                else:
                    sub = None if dist is None else dist[np.ix_(keep, keep)]
                    beta = _fold_fit(Z[keep], y[keep], sub, variogram_family, n_bins, max_dist)
        except (RegressionError, VariogramError, np.linalg.LinAlgError) as exc:
            raise CvError(f"fold leaving out site {site_ids[i]!r} failed: {exc}") from exc
        errors[i] = y[i] - Z[i] @ beta
    return errors


def loocv_score(
    data: FunctionalData | Dataset,
    candidate: Candidate,
    model_id: ModelId = "M1",
    mode: Literal["honest", "fast"] = "honest",
    return_errors: bool = False,
):
    """Root mean squared leave-one-out prediction error of one candidate."""
    if isinstance(data, FunctionalData):
        data = data.complete_cases()
        dataset = data.project(candidate.basis)
    else:
        dataset = data
        if dataset.basis is not None and dataset.basis != candidate.basis:
            raise CvError("dataset basis differs from candidate basis")
    p = n_columns(dataset.K, model_id) + 1
    if dataset.n - 1 <= p:
        raise CvError(f"candidate {candidate.label}: n-1={dataset.n - 1} does not exceed {p} parameters")
    X = build_design(dataset, model_id).matrix
    errors = loo_errors(
        X, dataset.y, dataset.distances, candidate.variogram_family, mode, [s.site_id for s in dataset.sites]
    )
    rmse = float(np.sqrt(np.mean(errors**2)))
    return (rmse, errors) if return_errors else rmse


@dataclass(frozen=True)
class CvConfig:
    bases: Sequence[BasisSpec]
    variogram_families: Sequence[str | None] = ("exponential",)
    model_id: ModelId = "M1"
    mode: Literal["honest", "fast"] = "honest"

    def __post_init__(self):
        if not self.bases or not self.variogram_families:
            raise ValueError("candidate lists must be nonempty")

    def candidates(self) -> list[Candidate]:
        return [Candidate(b, f) for b in self.bases for f in self.variogram_families]


@dataclass(frozen=True)
class CvScore:
    candidate: Candidate
    rmse_pred: float
    errors: np.ndarray | None
    failure: str | None = None


@dataclass(frozen=True)
class CvResult:
    scores: list[CvScore]
    winner: int

    @property
    def best(self) -> CvScore:
        return self.scores[self.winner]


def _tie_key(i: int, score: CvScore):
    b = score.candidate.basis
    fam = FAMILY_ORDER.index(b.family) if b.family in FAMILY_ORDER else len(FAMILY_ORDER)
    return (score.rmse_pred, b.K, fam, i)


def select_model(data: FunctionalData, cfg: CvConfig) -> CvResult:
    """Score every candidate by LOOCV; ties go to smaller ``K``, then family order."""
    scores = []
    for cand in cfg.candidates():
        try:
            rmse, errors = loocv_score(data, cand, cfg.model_id, cfg.mode, return_errors=True)
            scores.append(CvScore(cand, rmse, errors))
        except (CvError, BasisError, RegressionError, VariogramError) as exc:
            scores.append(CvScore(cand, float("inf"), None, str(exc)))
    ok = [i for i, s in enumerate(scores) if s.failure is None]
    if not ok:
        raise CvError("all CV candidates failed: " + "; ".join(f"{s.candidate.label}: {s.failure}" for s in scores))
    winner = min(ok, key=lambda i: _tie_key(i, scores[i]))
    return CvResult(scores, winner)


# -- F tests -----------------------------------------------------------------


def f_sf(F: float, df1: float, df2: float) -> float:
    """Upper tail ``P(F(df1, df2) > F)`` via the regularized incomplete beta function."""
    if df1 <= 0 or df2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if np.isnan(F):
        return float("nan")
    if F <= 0:
        return 1.0
    if np.isinf(F):
        return 0.0
    return float(betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * F)))


COMPARISONS = (("M3", "M2"), ("M4", "M2"), ("M2", "M1"))


@dataclass(frozen=True)
class AnovaRow:
    comparison: str
    df_extra: int
    df_resid: int
    rss_reduced: float
    rss_full: float
    F: float
    p_value: float


@dataclass(frozen=True)
class AnovaTable:
    rows: list[AnovaRow]
    rss: dict[str, float]
    n: int
    variogram: object = None


def nested_anova(
    dataset: Dataset,
    variogram_family: str | None = "exponential",
    sigma=None,
    n_bins: int = DEFAULT_N_BINS,
    max_dist: float | None = None,
) -> AnovaTable:
    """F tests M3 vs M2, M4 vs M2 and M2 vs M1 on commonly whitened data.

    One covariance, estimated from the OLS residuals of M1 (or supplied via
    ``sigma``), whitens all four models so that their residual sums of
    squares are comparable. ``variogram_family=None`` means identity.
    """
    y = dataset.y
    n = dataset.n
    vmodel = None
    if sigma is not None:
        L = getattr(sigma, "factor", None)
        if L is None:
            L = np.linalg.cholesky(np.asarray(sigma, dtype=float))
    elif variogram_family is None:
        L = None
    else:
        Z1 = _with_intercept(build_design(dataset, "M1").matrix)
        beta, _ = _least_squares(Z1, y)
        _, vmodel, cov = estimate_covariance(y - Z1 @ beta, dataset.distances, variogram_family, n_bins, max_dist)
        L = cov.factor
    yw = y if L is None else whiten(L, y)
    rss, npar = {}, {}
    for mid in MODEL_IDS:
        Z = _with_intercept(build_design(dataset, mid).matrix)
        Zw = Z if L is None else whiten(L, Z)
        beta, _ = _least_squares(Zw, yw)
        r = yw - Zw @ beta
        rss[mid] = float(r @ r)
        npar[mid] = Z.shape[1]
    rows = []
    for reduced, full in COMPARISONS:
        df1 = npar[full] - npar[reduced]
        df2 = n - npar[full]
        diff = max(rss[reduced] - rss[full], 0.0)
        if rss[full] <= 0:
            F, p = float("inf"), 0.0
        else:
            F = (diff / df1) / (rss[full] / df2)
            p = f_sf(F, df1, df2)
        rows.append(AnovaRow(f"{reduced} vs {full}", df1, df2, rss[reduced], rss[full], F, max(p, P_VALUE_FLOOR)))
    return AnovaTable(rows, rss, n, vmodel)


# -- response classes --------------------------------------------------------

DEFAULT_CLASS_EDGES = (0.24, 0.26, 0.28)


def class_labels(edges: Sequence[float]) -> list[str]:
    e = list(edges)
    labels = [f"<={e[0]:g}"]
    labels += [f"]{lo:g};{hi:g}]" for lo, hi in zip(e[:-1], e[1:])]
    labels.append(f">{e[-1]:g}")
    return labels


@dataclass(frozen=True)
class ClassProfiles:
    grid: np.ndarray
    labels: list[str]
    counts: np.ndarray
    assignment: np.ndarray
    theta_mean: np.ndarray
    pi_mean: np.ndarray
    theta_global: np.ndarray
    pi_global: np.ndarray
    empty: list[str]


def response_class_profiles(
    dataset: Dataset,
    model: FittedModel,
    class_edges: Sequence[float] = DEFAULT_CLASS_EDGES,
    grid: np.ndarray | None = None,
) -> ClassProfiles:
    """Mean predictor curves per class of predicted response.

    Classes are right-closed: ``(-inf, e0], (e0, e1], ..., (e_last, inf)``.
    Empty classes get NaN curves and are listed in ``empty``.
    """
    edges = np.asarray(class_edges, dtype=float)
    if edges.size == 0 or np.any(np.diff(edges) <= 0):
        raise ValueError("class edges must be nonempty and strictly ascending")
    basis = dataset.basis or model.basis
    if basis is None:
        raise RegressionError("dataset has no basis to reconstruct curves on")
    if grid is None:
        grid = basis.domain.grid(0.1)
    pred = predict_many(model, dataset.theta, dataset.pi)
    cls = np.searchsorted(edges, pred, side="left")
    labels = class_labels(edges)
    E = basis.evaluate(grid)
    n_cls = edges.size + 1
    theta_mean = np.full((n_cls, len(grid)), np.nan)
    pi_mean = np.full((n_cls, len(grid)), np.nan)
    counts = np.bincount(cls, minlength=n_cls)
    for k in range(n_cls):
        if counts[k]:
            theta_mean[k] = E @ dataset.theta[cls == k].mean(axis=0)
            pi_mean[k] = E @ dataset.pi[cls == k].mean(axis=0)
    empty = [labels[k] for k in range(n_cls) if counts[k] == 0]
    return ClassProfiles(
        np.asarray(grid, dtype=float), labels, counts, cls, theta_mean, pi_mean,
        E @ dataset.theta.mean(axis=0), E @ dataset.pi.mean(axis=0), empty,
    )
