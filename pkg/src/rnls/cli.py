"""Command-line runner: ``rnls <experiment> --config FILE [--out DIR] ...``.

Exit status: 0 on success, 2 when the config fails validation (a JSON error
list goes to stderr before any compute), 3 when a run aborts (a partial
manifest is written).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, config_hash, load_config
from .outputs import Provenance, emit_plot_data, write_csv, write_json

__all__ = ["main", "run", "build_parser"]


# --- shared builders ----------------------------------------------------------------------


def _grid(cfg: ExperimentConfig):
    from .grid import make_grid

    return make_grid(cfg.grid.d, cfg.grid.n, cfg.grid.L)


def _profile(cfg: ExperimentConfig, grid):
    from .grid import Field, GridError, load_snapshot
    from .randomization import make_rough_data

    dc = cfg.data
    if dc.kind == "zero":
        return Field.zeros(grid)
    if dc.kind == "rough":
        return make_rough_data(grid, dc.s_target, dc.phase_seed, amplitude=dc.amplitude)
    if dc.kind == "file":
        f = load_snapshot(dc.path)
        if f.grid != grid:
            raise GridError(f"{dc.path}: snapshot grid {f.grid} differs from config grid {grid}")
        return Field(grid, f.physical_values())
    w = dc.width
    return Field.from_function(grid, lambda *x: dc.amplitude * np.exp(-sum(xi**2 for xi in x) / (2 * w * w)))


def _rand_cfg(cfg: ExperimentConfig):
    from .randomization import RandomizationConfig

    r = cfg.randomization
    return RandomizationConfig(r.window, r.distribution, cfg.seed)


def _evo_cfg(cfg: ExperimentConfig):
    from .evolution import EvolutionConfig

    e = cfg.evolution
    return EvolutionConfig(e.dt, e.t_end, e.snapshot_stride, e.blowup_threshold, e.dealias, e.cfl, e.diagnostics)


# --- experiments ------------------------------------------------------------------------------


def _run_randomize(cfg, out: Path, prov, workers, written):
    from .grid import save_snapshot
    from .norms import lebesgue_norm, sobolev_norm
    from .randomization import randomize

    grid = _grid(cfg)
    phi = _profile(cfg, grid)
    rc = _rand_cfg(cfg)
    s_list = cfg.norms.s
    rows = []
    first = cfg.randomization.sample
    for i in range(first, first + cfg.randomization.samples):
        f = randomize(phi, rc, i)
        path = out / "samples" / f"phi_omega_{i:06d}.rnls"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_snapshot(f, path)
        written.append(path)
        rows.append([i, lebesgue_norm(f, 2)] + [sobolev_norm(f, s) for s in s_list])
    cols = ["sample", "l2_norm"] + [f"h{s:g}_norm" for s in s_list]
    written.append(write_csv(out / "randomize.csv", cols, rows, prov))


def _run_evolve(cfg, out: Path, prov, workers, written):
    from .evolution import Forcing, NonlinearitySpec, evolve, write_snapshots
    from .grid import Field
    from .norms import lebesgue_norm, sobolev_norm
    from .randomization import randomize

    grid = _grid(cfg)
    phi = _profile(cfg, grid)
    rc = _rand_cfg(cfg)
    nl = cfg.nonlinearity
    spec = None if nl.kind == "none" else NonlinearitySpec(nl.kind, grid.d, nl.sign, nl.lam)
    forcing = None
    if cfg.forcing.eps > 0:
        forcing = Forcing(randomize(phi, rc, cfg.randomization.sample), cfg.forcing.eps)
        initial = Field.zeros(grid)
    elif cfg.randomization.enabled:
        initial = randomize(phi, rc, cfg.randomization.sample)
    else:
        initial = phi
    traj = evolve(initial, spec, _evo_cfg(cfg), forcing, store_snapshots=cfg.evolution.save_snapshots)
    cols = ("t", "mass", "energy", "modified_energy", "sup_norm")
    rows = zip(traj.times, *(traj.series[c] for c in cols[1:]))
    written.append(write_csv(out / "series.csv", cols, rows, prov, [f"status = {traj.status}"]))
    if cfg.evolution.save_snapshots:
        written.extend(write_snapshots(traj, out / "snapshots"))
    final = traj.final()
    written.append(write_json(out / "summary.json", {
        "status": traj.status.kind, "t_star": traj.status.t_star, "reason": traj.status.reason,
        "steps": traj.steps, "t_final": traj.t_final,
        "final": {"l2_norm": lebesgue_norm(final, 2), "h1_norm": sobolev_norm(final, 1.0),
                  "sup_norm": lebesgue_norm(final, math.inf)},
    }, prov))
    if traj.status.kind == "aborted":
        raise RuntimeError(f"evolution aborted: {traj.status.reason}")


def _run_ensemble(cfg, out: Path, prov, workers, written):
    from .montecarlo import (EnsembleSpec, HsNorm, L2NormSquared, StrichartzNorm, TailFitError,
                             run_ensemble, tail_fit)

    grid = _grid(cfg)
    phi = _profile(cfg, grid)
    rc = _rand_cfg(cfg)
    e = cfg.ensemble
    if e.statistic == "hs_norm":
        stat = HsNorm(phi, rc, s=e.s)
    elif e.statistic == "l2_norm_squared":
        stat = L2NormSquared(phi, rc)
    else:
        stat = StrichartzNorm(phi, rc, q=e.q, r=e.r, T=e.T, n_times=e.n_times)
    spec = EnsembleSpec(e.m, cfg.seed, stat, first_sample=cfg.randomization.sample)
    res = run_ensemble(spec, workers)
    written.append(write_csv(out / "samples.csv", ("sample", "value"), zip(res.indices, res.samples), prov,
                             [f"statistic = {spec.name}"]))
    fit_doc, fit = None, None
    try:
        fit = tail_fit(res.valid())
        fit_doc = {"log_C": fit.log_C, "c": fit.c, "r_squared": fit.r_squared, "se_log_C": fit.se_log_C,
                   "se_c": fit.se_c, "scale": fit.scale, "lambdas": fit.lambdas,
                   "survival": fit.survival, "used": fit.used}
    except TailFitError as exc:
        fit_doc = {"error": str(exc)}
    written.append(write_json(out / "ensemble.json", {
        "statistic": spec.name, "m": spec.m, "samples": res.samples, "failed": res.failed,
        "errors": res.errors, "fit": fit_doc}, prov))
    if fit is not None and fit.c is not None:
        written.append(emit_plot_data(fit, out, prov))
    if res.failed:
        raise RuntimeError(f"{len(res.failed)} samples failed: {res.failed[:10]}")


def _run_blowup(cfg, out: Path, prov, workers, written):
    from .blowup import BlowupDataSpec, InsufficientData, fit_scaling, measure_scan
    from .randomization import randomize

    grid = _grid(cfg)
    b = cfg.blowup
    template = BlowupDataSpec(grid.d, b.k, b.delta0, b.orientation, 1.0, b.eps, b.lam)
    phi_omega = None
    if b.eps > 0:
        phi_omega = randomize(_profile(cfg, grid), _rand_cfg(cfg), cfg.randomization.sample)
    meas = measure_scan(template, b.alphas, grid, _evo_cfg(cfg), phi_omega, b.check_dt, workers)
    cols = ("alpha", "t_star", "censored", "t_star_2theta", "t_star_half_dt", "steps")
    rows = [(m.alpha, m.t_star, m.censored, m.t_star_2theta, m.t_star_half_dt, m.steps) for m in meas]
    written.append(write_csv(out / "blowup.csv", cols, rows, prov))
    record = {"alphas": b.alphas, "t_star": [m.t_star for m in meas],
              "censored": [m.censored for m in meas],
              "theta_shift": [m.theta_shift for m in meas], "dt_shift": [m.dt_shift for m in meas],
              "target_exponent": float(template.target_exponent)}
    try:
        study = fit_scaling(b.alphas, meas, float(template.target_exponent), b.tolerance)
    except InsufficientData as exc:
        record["fit"] = {"error": str(exc)}
        written.append(write_json(out / "blowup.json", record, prov))
        raise
    record["fit"] = {"beta": study.beta, "beta_se": study.beta_se, "band": study.band,
                     "intercept": study.intercept, "meets_bound": study.meets_bound,
                     "strictly_decreasing": study.strictly_decreasing,
                     "theta_robust": study.theta_robust, "dt_robust": study.dt_robust,
                     "local_slopes": study.local_slopes()}
    written.append(write_json(out / "blowup.json", record, prov))
    written.append(emit_plot_data(study, out, prov))


def _run_norms(cfg, out: Path, prov, workers, written):
    from .grid import load_snapshot
    from .norms import energy, lebesgue_norm, mass, sobolev_norm

    rows = []
    for p in cfg.norms.inputs:
        f = load_snapshot(p)
        name = Path(p).name
        for r in cfg.norms.r:
            rows.append((f"{name}:L{r:g}", lebesgue_norm(f, r)))
        for s in cfg.norms.s:
            rows.append((f"{name}:H{s:g}", sobolev_norm(f, s)))
        rows.append((f"{name}:mass", mass(f)))
        if f.grid.d >= 3:
            rows.append((f"{name}:energy", energy(f)))
    written.append(write_csv(out / "norms.csv", ("label", "value"), rows, prov))


def _run_identity(cfg, out: Path, prov, workers, written):
    from .identity import run_identity_check
    from .randomization import randomize

    grid = _grid(cfg)
    phi_omega = randomize(_profile(cfg, grid), _rand_cfg(cfg), cfg.randomization.sample)
    rec = run_identity_check(phi_omega, cfg.forcing.eps, _evo_cfg(cfg), cfg.identity.sign)
    written.append(emit_plot_data(rec, out, prov))
    written.append(write_json(out / "identity.json", {
        "max_rel_err": rec.max_rel_err, "scale": rec.scale, "mass_sup": rec.mass_sup,
        "mass_bound": 4 * rec.forcing_mass, "mass_bound_holds": rec.mass_bound_holds,
        "status": rec.trajectory.status.kind}, prov))


RUNNERS = {
    "randomize": _run_randomize,
    "evolve": _run_evolve,
    "ensemble": _run_ensemble,
    "blowup-scan": _run_blowup,
    "norms": _run_norms,
    "identity-check": _run_identity,
}


def run(cfg: ExperimentConfig, out: Path, workers: Optional[int] = None) -> int:
    """Execute a validated config, writing artifacts and ``manifest.json`` under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(cfg)
    prov = Provenance(h, cfg.seed, cfg.experiment)
    (out / "config.json").write_text(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    written: list[Path] = []
    status, error = "complete", None
    try:
        RUNNERS[cfg.experiment](cfg, out, prov, workers, written)
    except Exception as exc:
        status, error = "aborted", f"{type(exc).__name__}: {exc}"
    write_json(out / "manifest.json", {
        "status": status, "error": error,
        "files": [str(p.relative_to(out)) for p in written]}, prov)
    if error:
        print(f"rnls: {cfg.experiment} aborted: {error}", file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rnls", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("run",):
        p = sub.add_parser(name, help="run the experiment named in the config" if name == "run" else f"{name} experiment")
        p.add_argument("--config", required=True, help="key-value config file")
        p.add_argument("--out", help="output directory (default rnls-out/<experiment>-<hash>)")
        p.add_argument("--workers", type=int, default=None, help="worker processes (default $RNLS_WORKERS or 1)")
        p.add_argument("--seed-override", type=int, default=None, help="replace the config's master seed")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    experiment = None if args.command == "run" else args.command
    try:
        cfg = load_config(args.config, experiment, args.seed_override)
        if args.workers is not None and args.workers < 1:
            raise ConfigError([{"loc": "--workers", "msg": "must be at least 1"}])
    except ConfigError as exc:
        print(json.dumps({"errors": exc.errors}, indent=2), file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path("rnls-out") / f"{cfg.experiment}-{config_hash(cfg)}"
    return run(cfg, out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
