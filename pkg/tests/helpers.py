"""Simulation helpers shared by the test modules."""

import numpy as np

from stfreg.kriging import RecordSet
from stfreg.variogram import SiteLocation, coords, distance_matrix


def make_sites(rng, n, lon=(-10.0, 30.0), lat=(35.0, 60.0), prefix="S"):
    return [
        SiteLocation(f"{prefix}{i:04d}", float(x), float(y))
        for i, (x, y) in enumerate(zip(rng.uniform(*lon, n), rng.uniform(*lat, n)))
    ]


def gaussian_field(rng, sites, partial_sill, range_km, nugget=0.0):
    D = distance_matrix(coords(sites))
    C = partial_sill * np.exp(-D / range_km) + (nugget + 1e-10) * np.eye(len(sites))
    return np.linalg.cholesky(C) @ rng.standard_normal(len(sites))


def separable_records(rng, n_sites=40, n_times=12, sigma2=1.0, range_s=400.0, range_t=2.0, nugget=0.0):
    lon = rng.uniform(-10, 30, n_sites)
    lat = rng.uniform(35, 60, n_sites)
    t = np.sort(rng.uniform(0, 15, n_times))
    D = distance_matrix(np.c_[lon, lat])
    Ls = np.linalg.cholesky(np.exp(-D / range_s) + 1e-10 * np.eye(n_sites))
    Lt = np.linalg.cholesky(np.exp(-np.abs(t[:, None] - t[None]) / range_t) + 1e-10 * np.eye(n_times))
    Z = np.sqrt(sigma2) * Ls @ rng.standard_normal((n_sites, n_times)) @ Lt.T
    Z = Z + np.sqrt(nugget) * rng.standard_normal(Z.shape)
    sid = np.repeat([f"P{i:03d}" for i in range(n_sites)], n_times)
    return RecordSet(sid, np.repeat(lon, n_times), np.repeat(lat, n_times), np.tile(t, n_sites), Z.ravel())
