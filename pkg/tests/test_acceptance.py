"""Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line with the measured
quantity and runtime, then asserts. Run with ``pytest tests/test_acceptance.py``.
"""

import hashlib
import sys
import time
import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from stfreg.basis import BasisSpec, TimeDomain, gram_matrix, trapezoid_weights
from stfreg.cli import main
from stfreg.kriging import KrigingConfig, SeparableCovariance, krige_point
from stfreg.regression import (
    SpatialIdentifiabilityWarning,
    build_design,
    coefficient_functions,
    design_from_coefficients,
    gls_fit,
    n_columns,
    ols_fit,
    qgls_fit,
)
from stfreg.selection import CvConfig, f_sf, nested_anova, select_model
from stfreg.synth import SynthConfig, generate, random_sites
from stfreg.variogram import (
    SiteLocation,
    coords,
    distance_matrix,
    empirical_variogram_from_distances,
    fit_variogram,
)

from helpers import separable_records
from oracles import normal_equations_mp

ROOT = Path(__file__).resolve().parents[1]
T15 = TimeDomain(0.0, 15.0)


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            status = "PASS" if ok else "FAIL"
            print(f"\n[{status}] {name}: {detail}; runtime {elapsed:.2f} s (limit {limit:g} s)")
        assert ok, f"{name}: {detail}; runtime {elapsed:.2f} s"

    return emit


@contextmanager
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SpatialIdentifiabilityWarning)
        yield


def test_design_matrix_dimension(report):
    t0 = time.perf_counter()
    got = {}
    for K in (1, 2, 5, 11):
        rng = np.random.default_rng(K)
        X = design_from_coefficients(rng.normal(size=(4, K)), rng.normal(size=(4, K)), "M1")
        got[K] = (X.shape[1], n_columns(K))
    ok = all(a == b == 2 * K + K * K for K, (a, b) in got.items())
    ok = ok and got[2][0] == 8 and got[5][0] == 35 and got[11][0] == 143
    detail = ", ".join(f"K={K}: {a} columns" for K, (a, _) in got.items())
    report("design-matrix dimension", ok, detail, time.perf_counter() - t0, 1.0)


def test_basis_orthonormality(report):
    t0 = time.perf_counter()
    specs = [BasisSpec("fourier", m, T15) for m in range(1, 9)]
    specs += [BasisSpec("bspline", m, T15) for m in (0, 2, 5, 8)]
    dev = {s.label: float(np.max(np.abs(gram_matrix(s) - np.eye(s.K)))) for s in specs}
    worst = max(dev, key=dev.get)
    report(
        "basis orthonormality", dev[worst] < 1e-6,
        f"max |G - I| = {dev[worst]:.2e} ({worst}) over {len(specs)} bases", time.perf_counter() - t0, 5.0,
    )


def test_ols_gls_correctness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    sizes = [(50, 3), (60, 10), (120, 8), (200, 20), (300, 35), (400, 35), (400, 3), (90, 35)]
    rel, ident = [], []
    for n, p in sizes:
        X = rng.normal(size=(n, p)) * rng.uniform(0.1, 10.0, p)
        y = X @ rng.normal(size=p) + rng.normal(size=n)
        fit = ols_fit(X, y)
        got = np.concatenate([[fit.mu], fit.phi])
        ref = normal_equations_mp(X, y)
        rel.append(np.linalg.norm(got - ref) / np.linalg.norm(ref))
        g = gls_fit(X, y, np.eye(n))
        ident.append(np.max(np.abs(np.concatenate([[g.mu - fit.mu], g.phi - fit.phi]))))
    ok = max(rel) < 1e-6 and max(ident) < 1e-10
    detail = f"max relative error vs oracle {max(rel):.2e}; max |GLS(I) - OLS| {max(ident):.2e}"
    report("OLS/GLS correctness", ok, detail, time.perf_counter() - t0, 10.0)


def test_kriging_exactness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    rs = separable_records(rng, n_sites=60, n_times=20, nugget=0.0)
    cfg = KrigingConfig(SeparableCovariance(1.0, 400.0, 2.0, 0.0), n_neighbors=20)
    err, wsum = [], []
    for i in rng.choice(len(rs), 100, replace=False):
        site = SiteLocation(str(rs.site_id[i]), float(rs.lon[i]), float(rs.lat[i]))
        pred, _, _, w = krige_point(rs, cfg, site, rs.time[i], return_weights=True)
        err.append(abs(pred - rs.value[i]))
        wsum.append(abs(w.sum() - 1.0))
    for _ in range(100):
        site = SiteLocation("t", float(rng.uniform(-10, 30)), float(rng.uniform(35, 60)))
        _, _, _, w = krige_point(rs, cfg, site, float(rng.uniform(0, 15)), return_weights=True)
        wsum.append(abs(w.sum() - 1.0))
    ok = max(err) < 1e-8 and max(wsum) < 1e-10
    detail = f"max |pred - obs| {max(err):.2e} at 100 data points; max |sum w - 1| {max(wsum):.2e} over 200 solves"
    report("kriging exactness", ok, detail, time.perf_counter() - t0, 5.0)


def test_variogram_recovery(report):
    t0 = time.perf_counter()
    nugget, sill, rng_km = 0.1, 1.0, 300.0
    rng = np.random.default_rng(5)
    hits, rows = 0, []
    for _ in range(10):
        sites = random_sites(rng, 300, "S")
        D = distance_matrix(coords(sites))
        C = (sill - nugget) * np.exp(-D / rng_km) + nugget * np.eye(len(sites))
        z = np.linalg.cholesky(C) @ rng.standard_normal(len(sites))
        m = fit_variogram(empirical_variogram_from_distances(z, D), "exponential")
        errs = np.abs([m.nugget / nugget - 1, m.sill / sill - 1, m.range / rng_km - 1])
        rows.append(errs)
        hits += bool(np.all(errs <= 0.25))
    med = np.median(rows, axis=0)
    detail = (
        f"{hits}/10 replicates with nugget, sill and range all within 25% "
        f"(median rel. errors {med[0]:.2f}, {med[1]:.2f}, {med[2]:.2f})"
    )
    report("variogram recovery", hits >= 8, detail, time.perf_counter() - t0, 60.0)


def _relative_l2(fit, truth, grid):
    w = trapezoid_weights(grid)
    cf = coefficient_functions(fit, grid)
    A, B, C = truth.functions(grid)
    l2 = lambda f: np.sqrt(w @ f**2)  # noqa: E731
    l2s = lambda F: np.sqrt(w @ F**2 @ w)  # noqa: E731
    return l2(cf.A - A) / l2(A), l2(cf.B - B) / l2(B), l2s(cf.C - C) / l2s(C)


def test_coefficient_recovery(report):
    t0 = time.perf_counter()
    grid = T15.grid(0.05)
    med = {}
    with _quiet():
        for n in (400, 800):
            errs = []
            for r in range(10):
                sd = generate(SynthConfig("M1_known_ABC", n_response_sites=n, n_climate_sites=0),
                              np.random.default_rng([6, n, r]))
                fit = qgls_fit(sd.truth.dataset(sd.curves.y), "M1", "exponential")
                errs.append(_relative_l2(fit, sd.truth, grid))
            med[n] = np.median(errs, axis=0)
    a, b, c = med[400]
    ok = a < 0.15 and b < 0.15 and c < 0.30 and np.all(med[800] < med[400])
    detail = (
        f"median rel. L2 error n=400: A {a:.3f}, B {b:.3f}, C {c:.3f}; "
        f"n=800: A {med[800][0]:.3f}, B {med[800][1]:.3f}, C {med[800][2]:.3f}"
    )
    report("end-to-end coefficient recovery", ok, detail, time.perf_counter() - t0, 300.0)


def test_gls_efficiency(report):
    t0 = time.perf_counter()
    se_ols, se_gls = [], []
    with _quiet():
        for r in range(200):
            cfg = SynthConfig("M1_known_ABC", n_response_sites=150, n_climate_sites=0, noise_range=500.0)
            sd = generate(cfg, np.random.default_rng([7, r]))
            T = sd.truth
            phi = np.concatenate([T.a, T.b, T.c.ravel()])
            ds = T.dataset(sd.curves.y)
            se_ols.append(np.sum((ols_fit(build_design(ds), ds.y).phi - phi) ** 2))
            se_gls.append(np.sum((qgls_fit(ds).phi - phi) ** 2))
    mo, mg = float(np.mean(se_ols)), float(np.mean(se_gls))
    detail = f"phi-block MSE over 200 replicates: GLS {mg:.3e} vs OLS {mo:.3e} (ratio {mg / mo:.3f})"
    report("GLS efficiency", mg <= mo, detail, time.perf_counter() - t0, 300.0)


def test_f_test_calibration(report):
    t0 = time.perf_counter()
    rejections = 0
    for r in range(500):
        cfg = SynthConfig("M2_no_interaction", n_response_sites=150, n_climate_sites=0, noise_range=None)
        sd = generate(cfg, np.random.default_rng([8, r]))
        table = nested_anova(sd.truth.dataset(sd.curves.y), variogram_family=None)
        rejections += table.rows[2].p_value < 0.05
    rate = rejections / 500
    tail = f_sf(4.10, 2, 10)
    ok = 0.02 <= rate <= 0.09 and abs(tail - 0.05) < 5e-3
    detail = f"M2-vs-M1 rejection rate {rate:.3f} at alpha 0.05 over 500 replicates; P(F(2,10) > 4.10) = {tail:.5f}"
    report("F-test calibration", ok, detail, time.perf_counter() - t0, 300.0)


def test_cv_selection(report):
    t0 = time.perf_counter()
    picks = []
    with _quiet():
        for r in range(20):
            sd = generate(SynthConfig("M1_known_ABC", n_response_sites=200, n_climate_sites=0),
                          np.random.default_rng([9, r]))
            cfg = CvConfig([BasisSpec("fourier", m, T15) for m in (1, 2, 4)], ["exponential"], "M1", "honest")
            picks.append(select_model(sd.curves, cfg).best.candidate.basis.K)
    share = np.mean(np.array(picks) == 5)
    counts = {K: picks.count(K) for K in (3, 5, 9)}
    detail = f"K=5 chosen in {share:.0%} of 20 replicates (picks {counts})"
    report("CV selection", share >= 0.8, detail, time.perf_counter() - t0, 600.0)


def _digest_dir(path: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(path.iterdir())}


def test_determinism(report, tmp_path, capsys):
    t0 = time.perf_counter()
    config = ROOT / "configs" / "synthetic.json"
    digests, codes = [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        codes.append(main(["run", "--config", str(config), "--output_dir", str(out)]))
        digests.append(_digest_dir(out))
    capsys.readouterr()
    same = digests[0] == digests[1] and codes == [0, 0]
    detail = f"{len(digests[0])} artifacts, exit codes {codes}, byte-identical: {digests[0] == digests[1]}"
    report("determinism", same and len(digests[0]) >= 11, detail, time.perf_counter() - t0, 120.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
