"""CSV ingestion and plot-ready table output."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .basis import TimeDomain
from .kriging import RecordSet
from .variogram import SiteLocation

CLIMATE_COLUMNS = ("site_id", "lon", "lat", "age_kyr_bp", "temperature", "precipitation")
RESPONSE_COLUMNS = ("site_id", "lon", "lat", "h_index")

# Output table schemas: column -> parser.
_F, _I, _S = float, int, str
SCHEMAS: dict[str, dict[str, type]] = {
    "interpolated_curves": {"site_id": _S, "time_kyr": _F, "value": _F, "kriging_variance": _F, "variable": _S},
    "cv_report": {"candidate": _S, "K": _I, "basis_family": _S, "variogram_family": _S, "rmse_pred": _F},
    "coefficient_functions": {"t": _F, "A": _F, "B": _F},
    "kernel_surface": {"t": _F, "u": _F, "C": _F},
    "variogram": {"bin_center_km": _F, "gamma_hat": _F, "pair_count": _I, "gamma_fitted": _F},
    "anova": {"comparison": _S, "df1": _I, "df2": _I, "F": _F, "p_value": _F},
    "observed_predicted": {"site_id": _S, "observed": _F, "predicted": _F, "residual": _F},
    "class_profiles": {"class_label": _S, "variable": _S, "time": _F, "mean_value": _F},
    "sites": {"site_id": _S, "lon": _F, "lat": _F, "role": _S},
}


class IngestError(ValueError):
    pass


def fmt(x) -> str:
    """Round-trippable text for table cells; floats get 17 significant digits."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def write_table(path: Path, name: str, rows: Iterable[Sequence]) -> Path:
    columns = list(SCHEMAS[name])
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"{name}: row has {len(row)} cells, expected {len(columns)}")
            w.writerow([fmt(v) for v in row])
    return path


def read_table(path: Path, name: str) -> list[dict]:
    """Parse a table written by :func:`write_table`, checking its header."""
    schema = SCHEMAS[name]
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(schema):
            raise IngestError(f"{path}: header {header} does not match {list(schema)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(schema):
                raise IngestError(f"{path}:{lineno}: expected {len(schema)} cells")
            out.append({k: parse(v) for (k, parse), v in zip(schema.items(), row)})
    return out


def _open_checked(path: Path, columns: Sequence[str]):
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"{path}: file not found")
    fh = path.open(newline="", encoding="utf-8")
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        fh.close()
        raise IngestError(f"{path}: empty file")
    missing = [c for c in columns if c not in reader.fieldnames]
    if missing:
        fh.close()
        raise IngestError(f"{path}: missing columns {missing}; expected {list(columns)}")
    return fh, reader


def _number(path, lineno, row, key, required=True):
    text = (row.get(key) or "").strip()
    if not text:
        if required:
            raise IngestError(f"{path}:{lineno}: missing value for {key!r}")
        return None
    try:
        v = float(text)
    except ValueError:
        raise IngestError(f"{path}:{lineno}: {key!r} is not a number: {text!r}") from None
    if not math.isfinite(v):
        raise IngestError(f"{path}:{lineno}: {key!r} is not finite")
    return v


def _site(path, lineno, row) -> SiteLocation:
    sid = (row.get("site_id") or "").strip()
    if not sid:
        raise IngestError(f"{path}:{lineno}: empty site_id")
    lon = _number(path, lineno, row, "lon")
    lat = _number(path, lineno, row, "lat")
    if not (-180 <= lon <= 180 and -90 <= lat <= 90):
        raise IngestError(f"{path}:{lineno}: invalid coordinates ({lon}, {lat})")
    return SiteLocation(sid, lon, lat)


@dataclass
class ClimateData:
    temperature: RecordSet
    precipitation: RecordSet
    sites: list[SiteLocation]
    n_rows: int
    n_dropped: int


def _record_set(rows: list[tuple[SiteLocation, float, float]]) -> RecordSet:
    return RecordSet(
        np.array([s.site_id for s, _, _ in rows], dtype=str),
        np.array([s.lon for s, _, _ in rows], dtype=float),
        np.array([s.lat for s, _, _ in rows], dtype=float),
        np.array([t for _, t, _ in rows], dtype=float),
        np.array([v for _, _, v in rows], dtype=float),
    )


def read_climate(path: Path, domain: TimeDomain | None = None) -> ClimateData:
    """Read climate records, mapping ages to ``t = t_max - age``.

    Rows falling outside the time domain are dropped and counted.
    """
    domain = domain or TimeDomain()
    fh, reader = _open_checked(path, CLIMATE_COLUMNS)
    temp, prec, sites = [], [], {}
    n_rows = dropped = 0
    with fh:
        for lineno, row in enumerate(reader, start=2):
            n_rows += 1
            site = _site(path, lineno, row)
            prev = sites.setdefault(site.site_id, site)
            if (prev.lon, prev.lat) != (site.lon, site.lat):
                raise IngestError(f"{path}:{lineno}: site {site.site_id!r} has inconsistent coordinates")
            age = _number(path, lineno, row, "age_kyr_bp")
            if age < 0:
                raise IngestError(f"{path}:{lineno}: negative age {age}")
            tv = _number(path, lineno, row, "temperature", required=False)
            pv = _number(path, lineno, row, "precipitation", required=False)
            if tv is None and pv is None:
                raise IngestError(f"{path}:{lineno}: row has neither temperature nor precipitation")
            t = domain.t_max - age
            if t < domain.t_min or t > domain.t_max:
                dropped += 1
                continue
            if tv is not None:
                temp.append((site, t, tv))
            if pv is not None:
                prec.append((site, t, pv))
    if n_rows == 0:
        raise IngestError(f"{path}: no data rows")
    return ClimateData(_record_set(temp), _record_set(prec), list(sites.values()), n_rows, dropped)


@dataclass
class ResponseData:
    sites: list[SiteLocation]
    h_index: np.ndarray


def read_response(path: Path) -> ResponseData:
    fh, reader = _open_checked(path, RESPONSE_COLUMNS)
    sites, values, seen = [], [], set()
    with fh:
        for lineno, row in enumerate(reader, start=2):
            site = _site(path, lineno, row)
            if site.site_id in seen:
                raise IngestError(f"{path}:{lineno}: duplicate site_id {site.site_id!r}")
            seen.add(site.site_id)
            h = _number(path, lineno, row, "h_index")
            if not 0.0 <= h <= 1.0:
                raise IngestError(f"{path}:{lineno}: h_index {h} of site {site.site_id!r} outside [0, 1]")
            sites.append(site)
            values.append(h)
    if not sites:
        raise IngestError(f"{path}: no data rows")
    return ResponseData(sites, np.array(values))


def write_climate(path: Path, rows: Iterable[dict]) -> Path:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLIMATE_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in CLIMATE_COLUMNS])
    return Path(path)


def write_response(path: Path, rows: Iterable[dict]) -> Path:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESPONSE_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in RESPONSE_COLUMNS])
    return Path(path)
