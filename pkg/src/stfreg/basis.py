"""Orthonormal bases on a time interval, curve projection and reconstruction.

Two families are available: a real Fourier basis (constant, then sine/cosine
pairs) and cubic B-splines with uniform interior knots, orthonormalized by
Gram-Schmidt under trapezoid quadrature so every family can be treated as
orthonormal downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from scipy.interpolate import BSpline

SPLINE_DEGREE = 3
QUADRATURE_NODES = 10_000
_DOMAIN_TOL = 1e-9


class BasisError(ValueError):
    """Raised for invalid basis indices, domains or degenerate projections."""


@dataclass(frozen=True)
class TimeDomain:
    """Closed interval ``[t_min, t_max]`` (kyr, oriented toward the present)."""

    t_min: float = 0.0
    t_max: float = 15.0

    def __post_init__(self):
        if not (np.isfinite(self.t_min) and np.isfinite(self.t_max)):
            raise BasisError("time domain bounds must be finite")
        if self.t_max <= self.t_min:
            raise BasisError(f"t_max ({self.t_max}) must exceed t_min ({self.t_min})")

    @property
    def length(self) -> float:
        return self.t_max - self.t_min

    def grid(self, step: float = 0.1) -> np.ndarray:
        """Regular grid including both end points."""
        if step <= 0:
            raise BasisError("grid step must be positive")
        n = int(round(self.length / step))
        return np.linspace(self.t_min, self.t_max, n + 1)

    def check(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tol = _DOMAIN_TOL * max(1.0, self.length)
        if np.any(~np.isfinite(t)) or np.any(t < self.t_min - tol) or np.any(t > self.t_max + tol):
            raise BasisError(f"time values outside domain [{self.t_min}, {self.t_max}]")
        return np.clip(t, self.t_min, self.t_max)


@dataclass(frozen=True)
class SampledCurve:
    """Irregular samples of one predictor curve at one site."""

    site_id: str
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise BasisError("times and values must be 1-d arrays of equal length")
        if times.size < 1:
            raise BasisError("a curve needs at least one sample")
        if np.any(np.diff(times) <= 0):
            raise BasisError(f"sample times of curve {self.site_id!r} are not strictly ascending")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise BasisError(f"curve {self.site_id!r} contains non-finite samples")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class BasisSpec:
    """Truncated orthonormal basis.

    Parameters
    ----------
    family : {'fourier', 'bspline'}
        Basis family.
    order : int
        Fourier: number of harmonic pairs ``m`` so that ``K = 2m + 1``.
        B-spline: number of interior knots ``m`` so that ``K = m + 4``.
    domain : TimeDomain
        Interval on which the functions are orthonormal.
    """

    family: Literal["fourier", "bspline"] = "fourier"
    order: int = 5
    domain: TimeDomain = field(default_factory=TimeDomain)

    def __post_init__(self):
        if self.family not in ("fourier", "bspline"):
            raise BasisError(f"unknown basis family {self.family!r}")
        if int(self.order) != self.order or self.order < 0:
            raise BasisError("basis order must be a non-negative integer")

    @property
    def K(self) -> int:
        if self.family == "fourier":
            return 2 * self.order + 1
        return self.order + SPLINE_DEGREE + 1

    @property
    def label(self) -> str:
        return f"{self.family}:{self.order}"

    @classmethod
    def parse(cls, text: str, domain: TimeDomain | None = None) -> "BasisSpec":
        """Build a spec from ``'family:order'``, e.g. ``'fourier:5'``."""
        try:
            family, order = text.split(":")
            order = int(order)
        except ValueError:
            raise BasisError(f"cannot parse basis descriptor {text!r}; expected 'family:order'") from None
        return cls(family.strip(), order, domain or TimeDomain())

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "order": self.order,
            "K": self.K,
            "t_min": self.domain.t_min,
            "t_max": self.domain.t_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        return cls(d["family"], int(d["order"]), TimeDomain(float(d["t_min"]), float(d["t_max"])))

    # B-spline machinery; cached per (frozen) instance.
    @cached_property
    def _spline_knots(self) -> np.ndarray:
        d = self.domain
        inner = np.linspace(d.t_min, d.t_max, self.order + 2)
        return np.concatenate(
            [np.full(SPLINE_DEGREE, d.t_min), inner, np.full(SPLINE_DEGREE, d.t_max)]
        )

    def _raw_splines(self, t: np.ndarray) -> np.ndarray:
        # design_matrix handles the right end point (t == t_max) correctly.
        return BSpline.design_matrix(t, self._spline_knots, SPLINE_DEGREE).toarray()

    @cached_property
    def _orthonormalizer(self) -> np.ndarray:
        """Upper-triangular ``M`` such that ``raw @ M`` is orthonormal."""
        nodes = quadrature_nodes(self.domain)
        w = trapezoid_weights(nodes)
        raw = self._raw_splines(nodes)
        K = raw.shape[1]
        # Modified Gram-Schmidt in the weighted inner product; track the
        # coefficient transform so arbitrary points can be evaluated.
        M = np.eye(K)
        Q = raw.copy()
        for k in range(K):
            for j in range(k):
                r = np.sum(w * Q[:, j] * Q[:, k])
                Q[:, k] -= r * Q[:, j]
                M[:, k] -= r * M[:, j]
            norm = np.sqrt(np.sum(w * Q[:, k] ** 2))
            Q[:, k] /= norm
            M[:, k] /= norm
        return M

    def evaluate(self, t) -> np.ndarray:
        """Matrix ``E`` with ``E[j, k] = e_{k+1}(t_j)``, shape ``(len(t), K)``."""
        t = self.domain.check(t)
        if self.family == "fourier":
            T = self.domain.length
            x = (t - self.domain.t_min) / T
            E = np.empty((t.size, self.K))
            E[:, 0] = 1.0 / np.sqrt(T)
            amp = np.sqrt(2.0 / T)
            for j in range(1, self.order + 1):
                E[:, 2 * j - 1] = amp * np.sin(2 * np.pi * j * x)
                E[:, 2 * j] = amp * np.cos(2 * np.pi * j * x)
            return E
        return self._raw_splines(t) @ self._orthonormalizer


def quadrature_nodes(domain: TimeDomain, n: int = QUADRATURE_NODES) -> np.ndarray:
    return np.linspace(domain.t_min, domain.t_max, n)


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.empty_like(nodes)
    dx = np.diff(nodes)
    w[0] = dx[0] / 2
    w[-1] = dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2
    return w


def gram_matrix(spec: BasisSpec, n_nodes: int = QUADRATURE_NODES) -> np.ndarray:
    """Trapezoid-quadrature Gram matrix of the basis."""
    nodes = quadrature_nodes(spec.domain, n_nodes)
    E = spec.evaluate(nodes)
    w = trapezoid_weights(nodes)
    return E.T @ (w[:, None] * E)


def basis_eval(spec: BasisSpec, k: int, t: float) -> float:
    """Value of the ``k``-th basis function (1-based) at time ``t``."""
    if not 1 <= k <= spec.K:
        raise BasisError(f"basis index {k} out of range 1..{spec.K}")
    return float(spec.evaluate([t])[0, k - 1])


@dataclass(frozen=True)
class CoefficientVector:
    basis: BasisSpec
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if coeffs.size != self.basis.K:
            raise BasisError(f"expected {self.basis.K} coefficients, got {coeffs.size}")
        object.__setattr__(self, "coeffs", coeffs)


@dataclass(frozen=True)
class KernelCoefficients:
    """Coefficients ``c[k, l]``; the first index pairs with theta, the second with pi."""

    basis: BasisSpec
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        K = self.basis.K
        if coeffs.shape != (K, K):
            raise BasisError(f"expected a {K}x{K} kernel coefficient matrix, got {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)


def _lstsq_coeffs(E: np.ndarray, values: np.ndarray, what: str) -> np.ndarray:
    n, K = E.shape
    if n < K:
        raise BasisError(f"{what}: {n} samples cannot determine {K} coefficients (rank deficient)")
    coeffs, _, rank, sv = np.linalg.lstsq(E, values, rcond=None)
    if rank < K or sv[-1] <= 1e-10 * sv[0]:
        raise BasisError(f"{what}: singular projection design (rank {rank} < {K})")
    return coeffs


def project_curve(curve: SampledCurve, spec: BasisSpec) -> CoefficientVector:
    """Discrete least-squares coefficients of ``curve`` on ``spec``."""
    E = spec.evaluate(curve.times)
    return CoefficientVector(spec, _lstsq_coeffs(E, curve.values, f"curve {curve.site_id!r}"))


def project_values(times: np.ndarray, values: np.ndarray, spec: BasisSpec) -> np.ndarray:
    """Project many curves sharing one sample grid.

    ``values`` has shape ``(n_curves, len(times))``; returns ``(n_curves, K)``.
    """
    E = spec.evaluate(times)
    values = np.atleast_2d(np.asarray(values, dtype=float))
    return _lstsq_coeffs(E, values.T, "shared grid").T


def reconstruct_function(cv: CoefficientVector, grid: Sequence[float]) -> np.ndarray:
    return cv.basis.evaluate(grid) @ cv.coeffs


def reconstruct_kernel(kc: KernelCoefficients, grid_t, grid_u) -> np.ndarray:
    """Surface ``C(t, u)`` with rows indexed by ``grid_t`` and columns by ``grid_u``."""
    Et = kc.basis.evaluate(grid_t)
    Eu = kc.basis.evaluate(grid_u)
    return Et @ kc.coeffs @ Eu.T
