"""Result files: CSV with provenance header comments, JSON records, plot data.

Every CSV starts with ``#`` comment lines carrying the config hash and the
master seed, followed by a header row and the payload.  Floats are written
with ``repr`` so equal results give byte-identical payloads.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__

__all__ = ["Provenance", "write_csv", "write_json", "emit_plot_data", "read_csv_payload"]


class Provenance:
    """Config hash and master seed stamped on every output."""

    def __init__(self, config_hash: str, master_seed: int, experiment: str = ""):
        self.config_hash = config_hash
        self.master_seed = int(master_seed)
        self.experiment = experiment

    def header(self) -> list[str]:
        lines = [f"config_hash = {self.config_hash}", f"master_seed = {self.master_seed}"]
        if self.experiment:
            lines.append(f"experiment = {self.experiment}")
        return lines

    def metadata(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "experiment": self.experiment,
            "version": __version__,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        }


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], prov: Provenance,
              extra_header: Sequence[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in list(prov.header()) + list(extra_header):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv_payload(path) -> str:
    """The CSV text without its comment header."""
    return "".join(line for line in Path(path).read_text().splitlines(True) if not line.startswith("#"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, payload: dict, prov: Provenance) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"metadata": prov.metadata(), **_jsonable(payload)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return path


# --- plot data -----------------------------------------------------------------------


class IncompleteRecord(ValueError):
    """The record lacks what the plot needs (e.g. no fitted parameters)."""


def emit_plot_data(record, out_dir, prov: Provenance, stem: str | None = None) -> Path:
    """Tidy CSV for external plotting.

    * tail fit: ``lambda, empirical_log_survival, fitted_log_survival``
    * scaling study: ``alpha, t_star, censored, fit_value``
    * identity check: ``t, dE_dt_fd, rhs_quadrature, rel_err``

    Empirical and fitted values are separate columns; rows with zero
    empirical survival have an empty empirical entry.
    """
    from .blowup import ScalingStudy
    from .identity import IdentityRecord
    from .montecarlo import TailEstimate

    out_dir = Path(out_dir)
    if isinstance(record, TailEstimate):
        if record.c is None:
            raise IncompleteRecord("tail fit has no slope (too few samples above the window)")
        emp = [math.log(p) if p > 0 else None for p in record.survival]
        fit = record.fitted_log_survival()
        rows = zip(record.lambdas, emp, fit)
        return write_csv(out_dir / f"{stem or 'tail_fit'}_plot.csv",
                         ("lambda", "empirical_log_survival", "fitted_log_survival"), rows, prov,
                         [f"fit: log P = {record.log_C!r} - {record.c!r} * lambda^2", f"r_squared = {record.r_squared!r}"])
    if isinstance(record, ScalingStudy):
        if not math.isfinite(record.beta):
            raise IncompleteRecord("scaling study has no fitted exponent")
        rows = [(a, m.t_star, m.censored, float(record.fit_value(a)))
                for a, m in zip(record.alphas, record.measurements)]
        return write_csv(out_dir / f"{stem or 'scaling'}_plot.csv",
                         ("alpha", "t_star", "censored", "fit_value"), rows, prov,
                         [f"fit: t_star = exp({record.intercept!r}) * alpha^{record.beta!r}",
                          f"target_exponent = {record.target!r}"])
    if isinstance(record, IdentityRecord):
        if not record.complete:
            raise IncompleteRecord("identity record is empty")
        rows = zip(record.t, record.dE_dt_fd, record.rhs_quadrature, record.rel_err)
        return write_csv(out_dir / f"{stem or 'identity'}_plot.csv",
                         ("t", "dE_dt_fd", "rhs_quadrature", "rel_err"), rows, prov,
                         [f"scale = {record.scale!r}"])
    raise TypeError(f"no plot layout for {type(record).__name__}")
