"""End-to-end batch pipeline: ingest, krige, project, select, fit, test, report."""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import shutil
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .basis import BasisError, BasisSpec
from .config import ConfigError, PipelineConfig
from .io import IngestError, read_climate, read_response, write_climate, write_response, write_table
from .kriging import KrigingConfig, KrigingError, fit_separable_covariance, krige_curves
from .regression import RegressionError, coefficient_functions, qgls_fit
from .selection import CvConfig, CvError, FunctionalData, nested_anova, response_class_profiles, select_model
from .synth import SynthConfig, generate
from .variogram import VariogramError

log = logging.getLogger("stfreg")

EXIT_OK, EXIT_CONFIG, EXIT_INGEST, EXIT_NUMERIC = 0, 2, 3, 4
NUMERICAL_ERRORS = (np.linalg.LinAlgError, VariogramError, RegressionError, CvError, KrigingError, BasisError)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException, exit_code: int):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = exit_code


@dataclass
class RunState:
    cfg: PipelineConfig
    staging: Path
    artifacts: list[str] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.staging / name


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, StageError):
            return False
        if isinstance(exc, (IngestError, FileNotFoundError)):
            raise StageError(self.name, exc, EXIT_INGEST) from exc
        if isinstance(exc, ConfigError):
            raise StageError(self.name, exc, EXIT_CONFIG) from exc
        if isinstance(exc, NUMERICAL_ERRORS):
            raise StageError(self.name, exc, EXIT_NUMERIC) from exc
        return False


def stage(name: str) -> _Stage:
    return _Stage(name)


# -- stages ------------------------------------------------------------------


def ingest(cfg: PipelineConfig):
    with stage("ingest"):
        climate = read_climate(Path(cfg.climate_path), cfg.domain)
        response = read_response(Path(cfg.response_path))
        if climate.n_dropped:
            log.warning("dropped %d climate rows outside [%g, %g] kyr", climate.n_dropped, cfg.t_min, cfg.t_max)
    return climate, response


def interpolate(state: RunState, climate, response) -> FunctionalData:
    cfg = state.cfg
    grid = cfg.domain.grid(cfg.grid_step)
    with stage("krige"):
        curves, covs = {}, {}
        for variable, records in (("temperature", climate.temperature), ("precipitation", climate.precipitation)):
            cov = fit_separable_covariance(records)
            covs[variable] = cov.to_dict()
            kcfg = KrigingConfig(cov, grid, cfg.n_neighbors)
            curves[variable] = krige_curves(records, kcfg, response.sites)
        rows = []
        for variable in ("temperature", "precipitation"):
            for site in response.sites:
                c = curves[variable][site.site_id]
                var = c.meta["kriging_variance"]
                rows.extend((site.site_id, t, v, kv, variable) for t, v, kv in zip(c.times, c.values, var))
        write_table(state.path("interpolated_curves.csv"), "interpolated_curves", rows)
        state.manifest["kriging_covariance"] = covs
        theta = np.array([curves["temperature"][s.site_id].values for s in response.sites])
        pi = np.array([curves["precipitation"][s.site_id].values for s in response.sites])
        data = FunctionalData(response.sites, response.h_index, grid, theta, pi, cfg.domain).complete_cases()
        state.manifest["n_sites_complete"] = data.n
    return data


def cross_validate(state: RunState, data: FunctionalData):
    cfg = state.cfg
    with stage("cv"):
        cv_cfg = CvConfig(cfg.basis_specs(), cfg.variogram_families, "M1", cfg.cv_mode)
        result = select_model(data, cv_cfg)
        rows = []
        for s in result.scores:
            b = s.candidate.basis
            if s.failure:
                log.warning("candidate %s failed: %s", s.candidate.label, s.failure)
            rows.append((s.candidate.label, b.K, b.family, s.candidate.variogram_family, s.rmse_pred))
        write_table(state.path("cv_report.csv"), "cv_report", rows)
        best = result.best
        state.manifest["cv"] = {"mode": cfg.cv_mode, "winner": best.candidate.label, "rmse_pred": best.rmse_pred}
    return best.candidate


def fit_and_report(state: RunState, data: FunctionalData, basis: BasisSpec, family: str):
    cfg = state.cfg
    dataset = data.project(basis)
    with stage("fit"):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model = qgls_fit(dataset, "M1", family, cfg.qgls_iterations, cfg.n_bins)
        for w in caught:
            log.warning("%s", w.message)
        model_doc = {
            "basis": basis.to_dict(),
            "model_id": model.model_id,
            "mu": model.mu,
            "a": model.a.tolist(),
            "b": model.b.tolist(),
            "c": model.c.ravel().tolist(),
            "c_layout": "row-major K x K, first index theta, second index pi",
            "standard_errors": model.standard_errors.tolist(),
            "variogram": model.variogram.to_dict(),
            "qgls_iterations": cfg.qgls_iterations,
            "rss": model.rss,
            "r2": model.r2,
            "n": model.n,
            "K": model.K,
        }
        state.path("model.json").write_text(json.dumps(model_doc, indent=2) + "\n")

    with stage("coefficient_functions"):
        cf = coefficient_functions(model, cfg.domain.grid(cfg.grid_step))
        write_table(state.path("coefficient_functions.csv"), "coefficient_functions", zip(cf.grid, cf.A, cf.B))
        write_table(
            state.path("kernel_surface.csv"),
            "kernel_surface",
            ((t, u, cf.C[i, j]) for i, t in enumerate(cf.grid) for j, u in enumerate(cf.grid)),
        )

    with stage("variogram"):
        ev, vm = model.empirical, model.variogram
        rows = (
            (h, g, int(n), float(vm(h)) if n else float("nan"))
            for h, g, n in zip(ev.bin_centers, ev.gamma_hat, ev.pair_counts)
        )
        write_table(state.path("variogram.csv"), "variogram", rows)

    with stage("anova"):
        table = nested_anova(dataset, family, n_bins=cfg.n_bins)
        write_table(
            state.path("anova.csv"), "anova",
            ((r.comparison, r.df_extra, r.df_resid, r.F, r.p_value) for r in table.rows),
        )

    with stage("observed_predicted"):
        write_table(
            state.path("observed_predicted.csv"), "observed_predicted",
            zip((s.site_id for s in dataset.sites), dataset.y, model.fitted, model.residuals),
        )

    with stage("class_profiles"):
        prof = response_class_profiles(dataset, model, cfg.class_edges, cfg.domain.grid(cfg.grid_step))
        if prof.empty:
            log.warning("empty response classes: %s", ", ".join(prof.empty))
        rows = []
        for label, th, pi_ in [*zip(prof.labels, prof.theta_mean, prof.pi_mean), ("all", prof.theta_global, prof.pi_global)]:
            rows.extend((label, "temperature", t, v) for t, v in zip(prof.grid, th))
            rows.extend((label, "precipitation", t, v) for t, v in zip(prof.grid, pi_))
        write_table(state.path("class_profiles.csv"), "class_profiles", rows)
        state.manifest["class_counts"] = dict(zip(prof.labels, prof.counts.tolist()))
    state.manifest["fit"] = {"basis": basis.label, "variogram_family": family, "r2": model.r2}
    return model, table


def write_sites(state: RunState, climate, response):
    rows = [(s.site_id, s.lon, s.lat, "response") for s in response.sites]
    rows += [(s.site_id, s.lon, s.lat, "climate") for s in climate.sites]
    write_table(state.path("sites.csv"), "sites", rows)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(state: RunState, command: str):
    cfg_doc = state.cfg.to_dict()
    cfg_doc.pop("output_dir")
    doc = {
        "command": command,
        "config": cfg_doc,
        "config_hash": state.cfg.digest(),
        "versions": {
            "stfreg": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        **state.manifest,
        "artifacts": {name: _sha256(state.staging / name) for name in sorted(state.artifacts)},
    }
    (state.staging / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _execute(cfg: PipelineConfig, command: str, body) -> Path:
    """Run ``body(state)`` in a staging directory and publish only on success."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    staging = out / f".staging-{command}"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir()
    state = RunState(cfg, staging)
    try:
        body(state)
        _write_manifest(state, command)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    for name in [*state.artifacts, "manifest.json"]:
        (staging / name).replace(out / name)
    shutil.rmtree(staging)
    return out


def run_pipeline(cfg: PipelineConfig, command: str = "run") -> Path:
    """Run the pipeline (or its prefix for the debugging verbs); returns the output directory.

    ``command`` is one of ``run``, ``krige``, ``cv`` or ``anova``; ``anova``
    skips cross-validation and uses the first configured basis and family.
    """
    try:
        cfg.validate(run_mode=True)
    except ConfigError as exc:
        raise StageError("config", exc, EXIT_CONFIG) from exc

    def body(state: RunState):
        climate, response = ingest(cfg)
        data = interpolate(state, climate, response)
        if command == "krige":
            return
        if command == "anova":
            dataset = data.project(cfg.basis_specs()[0])
            with stage("anova"):
                table = nested_anova(dataset, cfg.variogram_families[0], n_bins=cfg.n_bins)
                write_table(
                    state.path("anova.csv"), "anova",
                    ((r.comparison, r.df_extra, r.df_resid, r.F, r.p_value) for r in table.rows),
                )
            return
        cand = cross_validate(state, data)
        if command == "cv":
            return
        fit_and_report(state, data, cand.basis, cand.variogram_family)
        write_sites(state, climate, response)

    return _execute(cfg, command, body)


def synthesize(cfg: PipelineConfig) -> Path:
    """Write a synthetic climate file, response file and truth file."""
    try:
        scfg = SynthConfig(
            scenario=cfg.scenario,
            n_response_sites=cfg.n_response_sites,
            n_climate_sites=cfg.n_climate_sites,
            domain=cfg.domain,
            grid_step=cfg.grid_step,
        )
    except ValueError as exc:
        raise StageError("config", exc, EXIT_CONFIG) from exc
    rng = np.random.default_rng(cfg.seed)

    def body(state: RunState):
        with stage("synth"):
            sd = generate(scfg, rng)
            write_climate(state.path("climate.csv"), sd.climate_rows)
            write_response(state.path("response.csv"), sd.response_rows)
            truth = sd.truth.to_dict()
            truth["seed"] = cfg.seed
            state.path("truth.json").write_text(json.dumps(truth) + "\n")
        state.manifest["seed"] = cfg.seed

    return _execute(cfg, "synth", body)


def summarize(out: Path, stream=None):
    """Short human-readable summary (6 significant digits)."""
    stream = stream or sys.stdout
    manifest = json.loads((out / "manifest.json").read_text())
    model_path = out / "model.json"
    print(f"outputs in {out}", file=stream)
    if "cv" in manifest:
        print(f"cv winner: {manifest['cv']['winner']} (rmse_pred {manifest['cv']['rmse_pred']:.6g})", file=stream)
    if model_path.exists():
        m = json.loads(model_path.read_text())
        v = m["variogram"]
        print(f"mu {m['mu']:.6g}  R2 {m['r2']:.6g}  n {m['n']}  K {m['K']}", file=stream)
        print(
            f"variogram {v['family']}: nugget {v['nugget']:.6g}, partial sill {v['partial_sill']:.6g}, "
            f"range {v['range']:.6g} km",
            file=stream,
        )
    anova = out / "anova.csv"
    if anova.exists():
        from .io import read_table

        for r in read_table(anova, "anova"):
            print(f"{r['comparison']}: F({r['df1']}, {r['df2']}) = {r['F']:.6g}, p = {r['p_value']:.6g}", file=stream)
