"""Empirical variograms, parametric variogram fits and residual covariance matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.linalg import cho_factor
from scipy.optimize import least_squares

EARTH_RADIUS_KM = 6371.0
FAMILIES = ("exponential", "gaussian", "spherical")
DEFAULT_N_BINS = 15
N_JITTER = 3
JITTER_SCALE = 1e-10

Family = Literal["exponential", "gaussian", "spherical"]


class VariogramError(ValueError):
    pass


class CovarianceError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SiteLocation:
    site_id: str
    lon: float
    lat: float

    def __post_init__(self):
        if not (-180.0 <= self.lon <= 180.0) or not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"site {self.site_id!r}: invalid coordinates ({self.lon}, {self.lat})")


def coords(sites: Sequence[SiteLocation]) -> np.ndarray:
    """``(n, 2)`` array of (lon, lat) in degrees."""
    return np.array([[s.lon, s.lat] for s in sites], dtype=float).reshape(-1, 2)


def haversine(lon1, lat1, lon2, lat2) -> np.ndarray:
    """Great-circle distance in km; broadcasts like numpy."""
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(v, dtype=float)) for v in (lon1, lat1, lon2, lat2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def great_circle_distance(p: SiteLocation, q: SiteLocation) -> float:
    return float(haversine(p.lon, p.lat, q.lon, q.lat))


def distance_matrix(xy: np.ndarray, xy2: np.ndarray | None = None) -> np.ndarray:
    xy = np.asarray(xy, dtype=float)
    xy2 = xy if xy2 is None else np.asarray(xy2, dtype=float)
    d = haversine(xy[:, None, 0], xy[:, None, 1], xy2[None, :, 0], xy2[None, :, 1])
    if xy2 is xy:
        np.fill_diagonal(d, 0.0)
    return d


@dataclass(frozen=True)
class EmpiricalVariogram:
    """Binned Matheron semivariances.

    ``bin_centers`` holds the mean pair lag of populated bins and the bin
    midpoint of empty ones; ``gamma_hat`` is NaN where ``pair_counts == 0``.
    """

    bin_centers: np.ndarray
    gamma_hat: np.ndarray
    pair_counts: np.ndarray
    max_dist: float

    @property
    def populated(self) -> np.ndarray:
        return self.pair_counts > 0


def _binned_semivariance(lags: np.ndarray, sqdiff: np.ndarray, n_bins: int, max_dist: float):
    keep = lags <= max_dist
    lags, sqdiff = lags[keep], sqdiff[keep]
    if lags.size == 0:
        raise VariogramError(f"no pairs within max_dist={max_dist}; empty variogram")
    # Canonical summation order, so the result does not depend on site order.
    order = np.lexsort((sqdiff, lags))
    lags, sqdiff = lags[order], sqdiff[order]
    idx = np.minimum((lags / max_dist * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=sqdiff, minlength=n_bins)
    lag_sums = np.bincount(idx, weights=lags, minlength=n_bins)
    edges = np.linspace(0.0, max_dist, n_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.where(counts > 0, sums / (2.0 * counts), np.nan)
        centers = np.where(counts > 0, lag_sums / np.maximum(counts, 1), centers)
    return EmpiricalVariogram(centers, gamma, counts, float(max_dist))


def default_max_dist(dist: np.ndarray) -> float:
    """Half the largest pairwise distance."""
    return 0.5 * float(np.max(dist))


def empirical_variogram_from_distances(
    values: np.ndarray, dist: np.ndarray, n_bins: int = DEFAULT_N_BINS, max_dist: float | None = None
) -> EmpiricalVariogram:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        raise VariogramError("need at least two values for a variogram")
    iu, ju = np.triu_indices(n, k=1)
    lags = dist[iu, ju]
    if max_dist is None:
        max_dist = default_max_dist(lags)
    if max_dist <= 0:
        raise VariogramError("max_dist must be positive")
    return _binned_semivariance(lags, (values[iu] - values[ju]) ** 2, n_bins, max_dist)


def empirical_variogram(
    residuals: Sequence[float],
    sites: Sequence[SiteLocation],
    n_bins: int = DEFAULT_N_BINS,
    max_dist: float | None = None,
) -> EmpiricalVariogram:
    """Matheron estimator on equal-width bins over ``[0, max_dist]`` (km).

    With ``max_dist=None`` the bins extend to half the largest pairwise
    distance.
    """
    if len(residuals) != len(sites):
        raise VariogramError("residuals and sites differ in length")
    return empirical_variogram_from_distances(residuals, distance_matrix(coords(sites)), n_bins, max_dist)


@dataclass(frozen=True)
class VariogramModel:
    family: Family
    nugget: float
    partial_sill: float
    range: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise VariogramError(f"unknown variogram family {self.family!r}")
        if self.nugget < 0 or self.partial_sill <= 0 or self.range <= 0:
            raise VariogramError(
                f"invalid variogram parameters nugget={self.nugget}, "
                f"partial_sill={self.partial_sill}, range={self.range}"
            )

    @property
    def sill(self) -> float:
        return self.nugget + self.partial_sill

    def structure(self, h) -> np.ndarray:
        """Unit-sill structured part, without nugget, for ``h >= 0``."""
        r = np.asarray(h, dtype=float) / self.range
        if self.family == "exponential":
            return -np.expm1(-r)
        if self.family == "gaussian":
            return -np.expm1(-(r**2))
        return np.where(r < 1.0, 1.5 * r - 0.5 * r**3, 1.0)

    def __call__(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        if np.any(h < 0):
            raise VariogramError("negative lag distance")
        g = self.nugget + self.partial_sill * self.structure(h)
        return np.where(h > 0, g, 0.0)

    def covariance(self, h) -> np.ndarray:
        """Covariance between two *distinct* observations at lag ``h``.

        The nugget is treated as micro-scale variance, so it is removed at
        every off-diagonal position including coincident locations.
        """
        return self.partial_sill * (1.0 - self.structure(h))

    def to_dict(self) -> dict:
        return {"family": self.family, "nugget": self.nugget, "partial_sill": self.partial_sill, "range": self.range}


def variogram_value(model: VariogramModel, h: float) -> float:
    return float(model(h))


def _start_points(gamma: np.ndarray, max_dist: float) -> list[tuple[float, float, float]]:
    sill = float(np.max(gamma))
    if sill <= 0:
        sill = 1.0
    g0 = float(gamma[0])
    nug = min(max(g0 * 0.5, 0.0), 0.9 * sill)
    return [
        (nug, sill - nug, max_dist / 3),
        (1e-3 * sill, sill, max_dist / 10),
        (0.25 * sill, 0.75 * sill, max_dist / 2),
        (0.5 * sill, 0.5 * sill, max_dist),
        (0.05 * sill, 0.95 * sill, 2 * max_dist),
    ]


def fit_variogram(
    ev: EmpiricalVariogram, family: Family = "exponential"
) -> VariogramModel:
    """Weighted least-squares fit with Cressie weights ``N_b / gamma(h_b)**2``.

    Five deterministic starts, each polished by a bounded trust-region
    solver; the best objective wins.
    """
    if family not in FAMILIES:
        raise VariogramError(f"unknown variogram family {family!r}")
    mask = ev.populated
    if mask.sum() < 3:
        raise VariogramError(f"need >= 3 populated bins, got {int(mask.sum())}")
    h = ev.bin_centers[mask]
    g = ev.gamma_hat[mask]
    w = np.sqrt(ev.pair_counts[mask].astype(float))
    scale = float(np.max(g))
    if scale <= 0:
        # Constant data: no structure, but keep the contract c1 > 0.
        return VariogramModel(family, 0.0, np.finfo(float).tiny, ev.max_dist)
    amax = 3.0 * ev.max_dist
    tiny = 1e-12

    gs = g / scale

    def shape_and_slope(a):
        r = h / a
        if family == "exponential":
            e = np.exp(-r)
            return 1.0 - e, e, r
        if family == "gaussian":
            e = np.exp(-(r**2))
            return 1.0 - e, 2.0 * r * e, r
        inside = r < 1.0
        return np.where(inside, 1.5 * r - 0.5 * r**3, 1.0), np.where(inside, 1.5 - 1.5 * r**2, 0.0), r

    # Parameters are (c0, c1) / scale and a; residuals w * (g / gamma - 1).
    def resid(x):
        c0, c1, a = x
        gm = np.maximum(c0 + c1 * shape_and_slope(a)[0], tiny)
        return w * (gs / gm - 1.0)

    def jac(x):
        c0, c1, a = x
        s, ds, r = shape_and_slope(a)
        gm = np.maximum(c0 + c1 * s, tiny)
        f = -w * gs / gm**2
        return np.column_stack([f, f * s, f * c1 * ds * (-r / a)])

    lower = [0.0, tiny, tiny * amax]
    upper = [np.inf, np.inf, amax]
    best = None
    for c0, c1, a in _start_points(g, ev.max_dist):
        x0 = np.clip([c0 / scale + 1e-6, c1 / scale, min(a, 0.99 * amax)], lower, upper)
        try:
            sol = least_squares(resid, x0, jac=jac, bounds=(lower, upper), method="trf",
                                x_scale="jac", xtol=1e-10, ftol=1e-10, gtol=1e-10, max_nfev=300)
        except (ValueError, FloatingPointError):
            continue
        if not np.isfinite(sol.cost):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise VariogramError("variogram fit failed from every starting point")
    c0, c1, a = best.x
    return VariogramModel(family, float(c0 * scale), float(max(c1 * scale, np.finfo(float).tiny)), float(a))


def covariance_from_distances(model: VariogramModel, dist: np.ndarray) -> np.ndarray:
    sigma = model.covariance(dist)
    np.fill_diagonal(sigma, model.sill)
    return sigma


def cholesky_with_jitter(sigma: np.ndarray, scale: float, what: str = "covariance"):
    """Lower Cholesky factor, retrying with diagonal jitter ``1e-10 * scale``."""
    a = np.array(sigma, dtype=float)
    for attempt in range(N_JITTER + 1):
        try:
            c, _ = cho_factor(a, lower=True, check_finite=False)
            if np.all(np.isfinite(c)):
                return np.tril(c), attempt
        except np.linalg.LinAlgError:
            pass
        if attempt < N_JITTER:
            a[np.diag_indices_from(a)] += JITTER_SCALE * scale
    raise CovarianceError(
        f"{what} matrix is not positive definite after {N_JITTER} jitter attempts "
        "(duplicate sites with zero nugget or an invalid model?)"
    )


@dataclass(frozen=True)
class CovarianceMatrix:
    matrix: np.ndarray
    factor: np.ndarray
    jitter_attempts: int = 0


def build_covariance_from_distances(model: VariogramModel, dist: np.ndarray) -> CovarianceMatrix:
    sigma = covariance_from_distances(model, dist)
    L, attempts = cholesky_with_jitter(sigma, model.sill)
    if attempts:
        sigma = sigma + np.eye(len(sigma)) * JITTER_SCALE * model.sill * attempts
    return CovarianceMatrix(sigma, L, attempts)


def build_covariance(model: VariogramModel, sites: Sequence[SiteLocation]) -> CovarianceMatrix:
    """``Sigma_ij = sill - gamma(d_ij)`` with the sill on the diagonal."""
    if len(sites) < 1:
        raise VariogramError("need at least one site")
    return build_covariance_from_distances(model, distance_matrix(coords(sites)))
