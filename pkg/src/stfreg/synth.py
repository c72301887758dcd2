"""Synthetic climate records and responses with known coefficient functions.

Sites are drawn uniformly over a Europe-like box. Temperature and
precipitation histories are Gaussian fields with separable exponential
covariance around a deglacial mean trend; responses follow one of the nested
models with (optionally) spatially correlated noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, TimeDomain, project_values
from .regression import Dataset, design_from_coefficients
from .selection import FunctionalData
from .variogram import SiteLocation, distance_matrix

SCENARIOS = ("M1_known_ABC", "M2_no_interaction", "pure_noise")
LON_RANGE = (-10.0, 30.0)
LAT_RANGE = (35.0, 60.0)

# Shapes of the true coefficient functions in the Fourier basis of order 2.
_A_SHAPE = np.array([0.3, 1.0, -0.6, 0.5, 0.4])
_B_SHAPE = np.array([-0.4, 0.7, 0.5, -0.6, 0.3])
_C_SHAPE = np.outer([1.0, -0.5, 0.8, 0.3, -0.6], [0.6, 1.0, -0.4, 0.5, 0.2]) + np.outer(
    [0.2, 0.9, 0.1, -0.7, 0.5], [-0.8, 0.3, 0.9, 0.1, -0.5]
)


@dataclass(frozen=True)
class FieldParams:
    """Separable Gaussian field around a logistic deglacial trend."""

    sd: float
    range_s: float
    range_t: float
    nugget_sd: float
    trend_amplitude: float
    trend_midpoint: float
    trend_width: float

    def trend(self, t: np.ndarray) -> np.ndarray:
        return -self.trend_amplitude / (1.0 + np.exp((t - self.trend_midpoint) / self.trend_width))


TEMPERATURE = FieldParams(sd=1.5, range_s=300.0, range_t=2.5, nugget_sd=0.3,
                          trend_amplitude=1.5, trend_midpoint=6.0, trend_width=1.2)
PRECIPITATION = FieldParams(sd=80.0, range_s=300.0, range_t=2.0, nugget_sd=15.0,
                            trend_amplitude=30.0, trend_midpoint=5.0, trend_width=1.5)


@dataclass(frozen=True)
class SynthConfig:
    scenario: str = "M1_known_ABC"
    n_response_sites: int = 389
    n_climate_sites: int = 216
    domain: TimeDomain = field(default_factory=TimeDomain)
    true_order: int = 2
    grid_step: float = 0.1
    mu: float = 0.26
    signal_sd: float = 0.02
    noise_ratio: float = 0.25
    noise_range: float | None = 300.0
    noise_nugget_fraction: float = 0.2
    mean_sample_spacing: float = 0.3
    missing_fraction: float = 0.05
    temperature: FieldParams = TEMPERATURE
    precipitation: FieldParams = PRECIPITATION

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.n_response_sites < 1 or self.n_climate_sites < 0:
            raise ValueError("site counts must be positive")

    @property
    def basis(self) -> BasisSpec:
        return BasisSpec("fourier", self.true_order, self.domain)


@dataclass
class Truth:
    scenario: str
    basis: BasisSpec
    mu: float
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    noise_sd: float
    noise_nugget: float
    noise_partial_sill: float
    noise_range: float | None
    grid: np.ndarray
    response_sites: list[SiteLocation]
    theta_coeffs: np.ndarray
    pi_coeffs: np.ndarray

    def functions(self, grid: np.ndarray | None = None):
        grid = self.grid if grid is None else grid
        E = self.basis.evaluate(grid)
        return E @ self.a, E @ self.b, E @ self.c @ E.T

    def dataset(self, y: np.ndarray) -> Dataset:
        return Dataset(self.response_sites, y, self.theta_coeffs, self.pi_coeffs, self.basis)

    def to_dict(self) -> dict:
        A, B, C = self.functions()
        return {
            "scenario": self.scenario,
            "basis": self.basis.to_dict(),
            "mu": self.mu,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "noise": {
                "sd": self.noise_sd,
                "family": "exponential",
                "nugget": self.noise_nugget,
                "partial_sill": self.noise_partial_sill,
                "range": self.noise_range,
            },
            "grid": self.grid.tolist(),
            "A": A.tolist(),
            "B": B.tolist(),
            "C": C.tolist(),
            "sites": [
                {"site_id": s.site_id, "theta": t.tolist(), "pi": p.tolist()}
                for s, t, p in zip(self.response_sites, self.theta_coeffs, self.pi_coeffs)
            ],
        }


@dataclass
class SyntheticData:
    climate_rows: list[dict]
    response_rows: list[dict]
    truth: Truth
    curves: FunctionalData
    y_clean: np.ndarray


def random_sites(rng: np.random.Generator, n: int, prefix: str) -> list[SiteLocation]:
    lon = rng.uniform(*LON_RANGE, n)
    lat = rng.uniform(*LAT_RANGE, n)
    return [SiteLocation(f"{prefix}{i:04d}", float(x), float(y)) for i, (x, y) in enumerate(zip(lon, lat))]


def _chol(C: np.ndarray) -> np.ndarray:
    return np.linalg.cholesky(C + 1e-10 * np.trace(C) / len(C) * np.eye(len(C)))


def simulate_field(
    rng: np.random.Generator, p: FieldParams, Ls: np.ndarray, t: np.ndarray
) -> np.ndarray:
    """Noise-free field values, shape ``(n_sites, len(t))``."""
    Lt = _chol(np.exp(-np.abs(t[:, None] - t[None, :]) / p.range_t))
    Z = Ls @ rng.standard_normal((Ls.shape[0], t.size)) @ Lt.T
    return p.trend(t)[None, :] + p.sd * Z


def _spatial_factor(sites, range_s):
    return _chol(np.exp(-distance_matrix(np.array([[s.lon, s.lat] for s in sites])) / range_s))


def _spatial_noise(rng, cfg: SynthConfig, sites, sd: float) -> tuple[np.ndarray, float, float]:
    n = len(sites)
    if cfg.noise_range is None or sd == 0:
        return sd * rng.standard_normal(n), sd**2, 0.0
    nug = cfg.noise_nugget_fraction * sd**2
    ps = sd**2 - nug
    L = _spatial_factor(sites, cfg.noise_range)
    eps = np.sqrt(ps) * (L @ rng.standard_normal(n)) + np.sqrt(nug) * rng.standard_normal(n)
    return eps, nug, ps


def _true_blocks(cfg: SynthConfig, theta: np.ndarray, pi: np.ndarray):
    """Scale A, B, C so each active term has equal spread and the total sd is ``signal_sd``."""
    K = cfg.basis.K
    a = np.zeros(K)
    b = np.zeros(K)
    c = np.zeros((K, K))
    if cfg.scenario == "pure_noise":
        return a, b, c
    terms = [theta @ _A_SHAPE, pi @ _B_SHAPE]
    if cfg.scenario == "M1_known_ABC":
        terms.append(np.einsum("ik,kl,il->i", theta, _C_SHAPE, pi))
    sds = [np.std(t) for t in terms]
    scales = [1.0 / s for s in sds]
    total = sum(sc * t for sc, t in zip(scales, terms))
    overall = cfg.signal_sd / np.std(total)
    a = _A_SHAPE * scales[0] * overall
    b = _B_SHAPE * scales[1] * overall
    if cfg.scenario == "M1_known_ABC":
        c = _C_SHAPE * scales[2] * overall
    return a, b, c


def _record_rows(rng, cfg: SynthConfig, sites, t_fine, temp, prec) -> list[dict]:
    rows = []
    d = cfg.domain
    for i, s in enumerate(sites):
        length = rng.uniform(1.0, d.length)
        start = d.t_max - length
        in_range = np.flatnonzero(t_fine >= start - 1e-12)
        n_obs = max(3, int(round(length / cfg.mean_sample_spacing)))
        pick = np.sort(rng.choice(in_range, size=min(n_obs, in_range.size), replace=False))
        t_noise = cfg.temperature.nugget_sd * rng.standard_normal(pick.size)
        p_noise = cfg.precipitation.nugget_sd * rng.standard_normal(pick.size)
        missing = rng.uniform(size=(pick.size, 2)) < cfg.missing_fraction
        missing[missing.all(axis=1)] = [False, True]
        for j, k in enumerate(pick):
            rows.append({
                "site_id": s.site_id,
                "lon": s.lon,
                "lat": s.lat,
                "age_kyr_bp": round(float(d.t_max - t_fine[k]), 9),
                "temperature": None if missing[j, 0] else float(temp[i, k] + t_noise[j]),
                "precipitation": None if missing[j, 1] else float(prec[i, k] + p_noise[j]),
            })
    return rows


def generate(cfg: SynthConfig, rng: np.random.Generator) -> SyntheticData:
    """Simulate one dataset; every random draw comes from ``rng``."""
    d = cfg.domain
    grid = d.grid(cfg.grid_step)
    # Fine simulation grid is the response grid refined twofold.
    t_fine = d.grid(cfg.grid_step / 2)
    response_sites = random_sites(rng, cfg.n_response_sites, "R")
    climate_sites = random_sites(rng, cfg.n_climate_sites, "P")
    all_sites = response_sites + climate_sites
    nr = len(response_sites)

    temp = simulate_field(rng, cfg.temperature, _spatial_factor(all_sites, cfg.temperature.range_s), t_fine)
    prec = simulate_field(rng, cfg.precipitation, _spatial_factor(all_sites, cfg.precipitation.range_s), t_fine)
    theta_grid = temp[:nr, ::2]
    pi_grid = prec[:nr, ::2]

    basis = cfg.basis
    theta = project_values(grid, theta_grid, basis)
    pi = project_values(grid, pi_grid, basis)
    a, b, c = _true_blocks(cfg, theta, pi)
    X = design_from_coefficients(theta, pi, "M1")
    y_clean = cfg.mu + X @ np.concatenate([a, b, c.ravel()])
    noise_sd = cfg.noise_ratio * cfg.signal_sd
    eps, nug, ps = _spatial_noise(rng, cfg, response_sites, noise_sd)
    y = y_clean + eps

    climate_rows = _record_rows(rng, cfg, climate_sites, t_fine, temp[nr:], prec[nr:])
    response_rows = [
        {"site_id": s.site_id, "lon": s.lon, "lat": s.lat, "h_index": float(np.clip(v, 0.0, 1.0))}
        for s, v in zip(response_sites, y)
    ]
    truth = Truth(
        cfg.scenario, basis, cfg.mu, a, b, c, noise_sd, nug, ps,
        cfg.noise_range if cfg.noise_range is not None and noise_sd > 0 else None,
        grid, response_sites, theta, pi,
    )
    curves = FunctionalData(response_sites, y, grid, theta_grid, pi_grid, d)
    return SyntheticData(climate_rows, response_rows, truth, curves, y_clean)
