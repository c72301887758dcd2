"""Ordinary kriging in space-time with a separable exponential covariance.

Used to bring irregularly dated climate records onto a regular time grid at
the response sites.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .basis import SampledCurve
from .variogram import (
    N_JITTER,
    JITTER_SCALE,
    SiteLocation,
    VariogramError,
    _binned_semivariance,
    fit_variogram,
    haversine,
)

DEFAULT_NEIGHBORS = 20
_CHUNK = 256


class KrigingError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SpaceTimeRecord:
    site: SiteLocation
    time: float
    value: float


@dataclass(frozen=True)
class RecordSet:
    """Column-oriented store of space-time records of one variable."""

    site_id: np.ndarray
    lon: np.ndarray
    lat: np.ndarray
    time: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, f)) for f in ("site_id", "lon", "lat", "time", "value")]
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1:
            raise ValueError("record columns must be 1-d and equally long")
        for name, a in zip(("lon", "lat", "time", "value"), arrays[1:]):
            a = a.astype(float)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite {name} in records")
            object.__setattr__(self, name, a)
        object.__setattr__(self, "site_id", arrays[0].astype(str))

    def __len__(self) -> int:
        return self.value.size

    @classmethod
    def from_records(cls, records: Iterable[SpaceTimeRecord]) -> "RecordSet":
        records = list(records)
        return cls(
            np.array([r.site.site_id for r in records], dtype=str),
            np.array([r.site.lon for r in records], dtype=float),
            np.array([r.site.lat for r in records], dtype=float),
            np.array([r.time for r in records], dtype=float),
            np.array([r.value for r in records], dtype=float),
        )

    def subset(self, mask) -> "RecordSet":
        return RecordSet(self.site_id[mask], self.lon[mask], self.lat[mask], self.time[mask], self.value[mask])


def as_record_set(records) -> RecordSet:
    return records if isinstance(records, RecordSet) else RecordSet.from_records(records)


@dataclass(frozen=True)
class SeparableCovariance:
    sigma2: float
    range_s: float
    range_t: float
    nugget: float = 0.0

    def __post_init__(self):
        if self.sigma2 <= 0 or self.range_s <= 0 or self.range_t <= 0 or self.nugget < 0:
            raise ValueError(f"invalid separable covariance {self}")

    def __call__(self, h, u) -> np.ndarray:
        """Covariance of the noise-free field at spatial lag ``h`` (km) and time lag ``u``."""
        return self.sigma2 * np.exp(-np.asarray(h) / self.range_s - np.abs(np.asarray(u)) / self.range_t)

    def to_dict(self) -> dict:
        return {"sigma2": self.sigma2, "range_s": self.range_s, "range_t": self.range_t, "nugget": self.nugget}


@dataclass(frozen=True)
class KrigingConfig:
    covariance: SeparableCovariance
    grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 15.0, 151))
    n_neighbors: int = DEFAULT_NEIGHBORS

    def __post_init__(self):
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))


def _pair_blocks(n: int):
    for start in range(0, n, _CHUNK):
        stop = min(n, start + _CHUNK)
        yield start, stop


def fit_separable_covariance(
    records, n_bins: int = 15, n_time_bins: int = 30, time_quantile: float = 0.1
) -> SeparableCovariance:
    """Fit the separable model from two marginal empirical variograms.

    The spatial margin uses pairs of distinct sites whose time lag is at or
    below the ``time_quantile`` quantile of all such lags; the temporal margin
    uses pairs from the same site. An exponential model is fitted to each.

    Same-site pairs sit at zero spatial lag, so the nugget is taken from the
    temporal margin alone; the spatial intercept also absorbs the temporal
    decorrelation of the near-simultaneous pairs. ``sigma2`` is the mean of
    the two fitted total sills minus that nugget.
    """
    rs = as_record_set(records)
    n = len(rs)
    if n < 30:
        raise VariogramError(f"need >= 30 records, got {n}")
    sites, site_idx = np.unique(rs.site_id, return_inverse=True)
    if sites.size < 2 or np.unique(rs.time).size < 2:
        raise VariogramError("need records at >= 2 sites and >= 2 distinct times")
    if np.ptp(rs.value) == 0:
        raise VariogramError("degenerate covariance: all record values are equal")

    # First pass: time-lag distribution of cross-site pairs and lag maxima.
    span = float(np.ptp(rs.time)) or 1.0
    hist_bins = 100_000
    lag_hist = np.zeros(hist_bins, dtype=np.int64)
    max_h = 0.0
    max_u_same = 0.0
    for a, b in _pair_blocks(n):
        u = np.abs(rs.time[a:b, None] - rs.time[None, :])
        same = site_idx[a:b, None] == site_idx[None, :]
        upper = np.arange(a, b)[:, None] < np.arange(n)[None, :]
        cross = upper & ~same
        idx = np.minimum((u[cross] / span * hist_bins).astype(int), hist_bins - 1)
        lag_hist += np.bincount(idx, minlength=hist_bins)
        if np.any(upper & same):
            max_u_same = max(max_u_same, float(u[upper & same].max()))
        h = haversine(rs.lon[a:b, None], rs.lat[a:b, None], rs.lon[None, :], rs.lat[None, :])
        if np.any(cross):
            max_h = max(max_h, float(h[cross].max()))
    if lag_hist.sum() == 0 or max_h <= 0:
        raise VariogramError("no cross-site pairs for the spatial margin")
    if max_u_same <= 0:
        raise VariogramError("no same-site pairs for the temporal margin")
    cdf = np.cumsum(lag_hist) / lag_hist.sum()
    u_cut = (np.searchsorted(cdf, time_quantile) + 1) * span / hist_bins

    # Second pass: accumulate marginal lag / squared-difference samples.
    hs, ds, us, dt = [], [], [], []
    for a, b in _pair_blocks(n):
        u = np.abs(rs.time[a:b, None] - rs.time[None, :])
        same = site_idx[a:b, None] == site_idx[None, :]
        upper = np.arange(a, b)[:, None] < np.arange(n)[None, :]
        sq = (rs.value[a:b, None] - rs.value[None, :]) ** 2
        sp = upper & ~same & (u <= u_cut)
        if np.any(sp):
            h = haversine(rs.lon[a:b, None], rs.lat[a:b, None], rs.lon[None, :], rs.lat[None, :])
            hs.append(h[sp])
            ds.append(sq[sp])
        tp = upper & same
        us.append(u[tp])
        dt.append(sq[tp])
    ev_s = _binned_semivariance(np.concatenate(hs), np.concatenate(ds), n_bins, 0.5 * max_h)
    ev_t = _binned_semivariance(np.concatenate(us), np.concatenate(dt), n_time_bins, 0.5 * max_u_same)
    if ev_s.populated.sum() < 3 or ev_t.populated.sum() < 3:
        raise VariogramError("insufficient pairs in a marginal variogram")
    ms = fit_variogram(ev_s, "exponential")
    mt = fit_variogram(ev_t, "exponential")
    nugget = mt.nugget
    sigma2 = 0.5 * (ms.sill + mt.sill) - nugget
    if not sigma2 > 1e-9 * max(ms.sill, mt.sill, 1e-300):
        raise VariogramError("degenerate covariance: no structured variance in the records")
    return SeparableCovariance(sigma2, ms.range, mt.range, nugget)


def _neighbors(d: np.ndarray, m: int) -> np.ndarray:
    """Indices of the ``m`` smallest entries per row, ordered by (distance, index)."""
    n = d.shape[-1]
    if m >= n:
        return np.broadcast_to(np.arange(n), d.shape[:-1] + (n,)).copy()
    part = np.argpartition(d, m - 1, axis=-1)[..., :m]
    part.sort(axis=-1)
    order = np.argsort(np.take_along_axis(d, part, axis=-1), axis=-1, kind="stable")
    return np.take_along_axis(part, order, axis=-1)


def _data_cov(cov: SeparableCovariance, rs: RecordSet, idx: np.ndarray) -> np.ndarray:
    lon, lat, t = rs.lon[idx], rs.lat[idx], rs.time[idx]
    h = haversine(lon[..., :, None], lat[..., :, None], lon[..., None, :], lat[..., None, :])
    C = cov(h, t[..., :, None] - t[..., None, :])
    m = idx.shape[-1]
    C[..., np.arange(m), np.arange(m)] += cov.nugget
    return C


def _ok_from_solutions(u, v, c):
    """Weights and variance term given ``u = C^-1 c`` and ``v = C^-1 1``."""
    mu = (u.sum(-1) - 1.0) / v.sum(-1)
    w = u - mu[..., None] * v
    return w, mu


def ordinary_kriging_weights(C: np.ndarray, c: np.ndarray, scale: float):
    """Solve one ordinary-kriging system; returns ``(weights, lagrange)``."""
    m = C.shape[0]
    ones = np.ones(m)
    A = C.copy()
    for attempt in range(N_JITTER + 1):
        try:
            L = np.linalg.cholesky(A)
            break
        except np.linalg.LinAlgError:
            if attempt == N_JITTER:
                raise KrigingError(
                    "singular kriging system after jitter retries (duplicate records with zero nugget?)"
                ) from None
            A[np.diag_indices(m)] += JITTER_SCALE * scale
    rhs = np.column_stack([c, ones])
    sol = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    return _ok_from_solutions(sol[:, 0], sol[:, 1], c)


def krige_point(
    records,
    cfg: KrigingConfig,
    target_site: SiteLocation,
    target_time: float,
    return_weights: bool = False,
):
    """Ordinary-kriging prediction and variance at one space-time point."""
    rs = as_record_set(records)
    if len(rs) < 1:
        raise KrigingError("no records to krige from")
    cov = cfg.covariance
    h = haversine(target_site.lon, target_site.lat, rs.lon, rs.lat)
    u = rs.time - target_time
    d = np.hypot(h / cov.range_s, u / cov.range_t)
    idx = _neighbors(d[None, :], min(cfg.n_neighbors, len(rs)))[0]
    C = _data_cov(cov, rs, idx)
    c = cov(h[idx], u[idx])
    w, mu = ordinary_kriging_weights(C, c, cov.sigma2 + cov.nugget)
    pred = float(w @ rs.value[idx])
    var = max(float(cov.sigma2 - w @ c - mu), 0.0)
    if return_weights:
        return pred, var, idx, w
    return pred, var


def _krige_site(rs: RecordSet, cfg: KrigingConfig, site: SiteLocation):
    cov = cfg.covariance
    grid = cfg.grid
    h = haversine(site.lon, site.lat, rs.lon, rs.lat)
    U = rs.time[None, :] - grid[:, None]
    d = np.hypot(h[None, :] / cov.range_s, U / cov.range_t)
    m = min(cfg.n_neighbors, len(rs))
    idx = _neighbors(d, m)
    C = _data_cov(cov, rs, idx)
    c = cov(h[idx], np.take_along_axis(U, idx, axis=1))
    rhs = np.stack([c, np.ones_like(c)], axis=-1)
    try:
        L = np.linalg.cholesky(C)
        sol = np.linalg.solve(np.swapaxes(L, -1, -2), np.linalg.solve(L, rhs))
        w, mu = _ok_from_solutions(sol[..., 0], sol[..., 1], c)
    except np.linalg.LinAlgError:
        # Fall back to per-point solves with the jitter policy.
        w = np.empty_like(c)
        mu = np.empty(len(grid))
        for k in range(len(grid)):
            w[k], mu[k] = ordinary_kriging_weights(C[k], c[k], cov.sigma2 + cov.nugget)
    pred = np.einsum("ij,ij->i", w, rs.value[idx])
    var = np.maximum(cov.sigma2 - np.einsum("ij,ij->i", w, c) - mu, 0.0)
    return pred, var


def krige_curves(records, cfg: KrigingConfig, target_sites: Sequence[SiteLocation]) -> dict[str, SampledCurve]:
    """Kriged curve on ``cfg.grid`` for every target site.

    Kriging variances are kept in ``curve.meta['kriging_variance']``.
    """
    rs = as_record_set(records)
    if len(rs) < 1:
        raise KrigingError("no records to krige from")
    out = {}
    for site in target_sites:
        pred, var = _krige_site(rs, cfg, site)
        out[site.site_id] = SampledCurve(site.site_id, cfg.grid.copy(), pred, {"kriging_variance": var})
    return out
