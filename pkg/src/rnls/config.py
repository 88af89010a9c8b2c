"""Experiment configuration: a plain key-value text format plus validation.

Grammar (one entry per line)::

    # comment                      blank lines and '#' comments are ignored
    experiment = evolve            top-level key
    grid.d = 3                     section.key = value
    blowup.alphas = 1, 2.5, 6      lists are comma separated

Values are parsed by the schema below (ints, floats including ``inf``,
booleans ``true``/``false``, complex numbers such as ``1+0.5j``).  Unknown
keys are errors.  :func:`validate` additionally checks every precondition of
the modules an experiment will call, so invalid setups fail before any
compute.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "EXPERIMENTS",
    "parse_text",
    "load_config",
    "validate",
    "config_hash",
]

EXPERIMENTS = ("randomize", "evolve", "ensemble", "blowup-scan", "norms", "identity-check")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` is a list of ``{"loc", "msg"}`` dicts."""

    def __init__(self, errors: list[dict]):
        self.errors = errors
        super().__init__("; ".join(f"{e['loc']}: {e['msg']}" for e in errors))


def _split_list(v):
    if isinstance(v, str):
        v = v.strip()
        return [] if not v else [s.strip() for s in v.split(",")]
    return v


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSection(_Section):
    d: int = 3
    n: int = 32
    L: Optional[float] = None


class DataSection(_Section):
    """Deterministic profile ``phi`` (before randomization)."""

    kind: Literal["gaussian", "rough", "zero", "file"] = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    s_target: float = 0.8
    phase_seed: int = 0
    path: Optional[str] = None


class RandomizationSection(_Section):
    enabled: bool = False
    window: Literal["cube", "tent", "smooth"] = "cube"
    distribution: Literal["gaussian", "rademacher-complex"] = "gaussian"
    sample: int = 0
    samples: int = 1


class NonlinearitySection(_Section):
    kind: Literal["none", "gauge", "modulus"] = "none"
    sign: int = 1
    lam: complex = complex(1.0, 0.0)


class EvolutionSection(_Section):
    dt: float = 0.01
    t_end: float = 1.0
    snapshot_stride: int = 10
    blowup_threshold: float = 1e3
    dealias: Optional[bool] = None
    cfl: Optional[float] = None
    diagnostics: bool = True
    save_snapshots: bool = False


class ForcingSection(_Section):
    eps: float = 0.0


class EnsembleSection(_Section):
    m: int = 1000
    statistic: Literal["hs_norm", "l2_norm_squared", "strichartz"] = "hs_norm"
    s: float = 0.0
    q: float = 4.0
    r: float = 4.0
    T: float = 1.0
    n_times: int = 65


class BlowupSection(_Section):
    k: float = 1.0
    delta0: Optional[float] = None
    orientation: Literal["A1", "A2"] = "A2"
    alphas: List[float] = [1.0, 1.585, 2.512, 3.981, 6.310, 10.0]
    eps: float = 0.0
    lam: complex = complex(1.0, 0.0)
    check_dt: bool = True
    tolerance: float = 0.25

    @field_validator("alphas", mode="before")
    @classmethod
    def _lists(cls, v):
        return _split_list(v)


class NormsSection(_Section):
    inputs: List[str] = []
    r: List[float] = [2.0, 4.0, math.inf]
    s: List[float] = [0.0, 1.0]

    @field_validator("inputs", "r", "s", mode="before")
    @classmethod
    def _lists(cls, v):
        return _split_list(v)


class IdentitySection(_Section):
    """Forced residual run ``v(0) = 0`` checked against the energy-derivative identity."""

    sign: int = 1


class ExperimentConfig(_Section):
    experiment: Literal["randomize", "evolve", "ensemble", "blowup-scan", "norms", "identity-check"]
    seed: int = 0
    grid: GridSection = GridSection()
    data: DataSection = DataSection()
    randomization: RandomizationSection = RandomizationSection()
    nonlinearity: NonlinearitySection = NonlinearitySection()
    evolution: EvolutionSection = EvolutionSection()
    forcing: ForcingSection = ForcingSection()
    ensemble: EnsembleSection = EnsembleSection()
    blowup: BlowupSection = BlowupSection()
    norms: NormsSection = NormsSection()
    identity: IdentitySection = IdentitySection()

    @field_validator("nonlinearity", "blowup", mode="before")
    @classmethod
    def _complex_lam(cls, v):
        if isinstance(v, dict) and isinstance(v.get("lam"), str):
            v = dict(v)
            v["lam"] = complex(v["lam"].replace(" ", ""))
        return v


# --- parsing -------------------------------------------------------------------------


def parse_text(text: str, source: str = "<config>") -> dict:
    """Key-value text to a nested dict of strings."""
    out: dict[str, Any] = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append({"loc": f"{source}:{lineno}", "msg": f"expected 'key = value', got {raw.strip()!r}"})
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        parts = key.split(".")
        if not all(parts) or len(parts) > 2:
            errors.append({"loc": f"{source}:{lineno}", "msg": f"bad key {key!r}"})
            continue
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                errors.append({"loc": f"{source}:{lineno}", "msg": f"{p!r} is not a section"})
                break
        else:
            if parts[-1] in node:
                errors.append({"loc": f"{source}:{lineno}", "msg": f"duplicate key {key!r}"})
            node[parts[-1]] = value
    if errors:
        raise ConfigError(errors)
    return out


def _model(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError([
            {"loc": ".".join(str(p) for p in e["loc"]) or "<root>", "msg": e["msg"]}
            for e in exc.errors()
        ]) from None
    except ValueError as exc:  # e.g. a malformed complex literal
        raise ConfigError([{"loc": "<root>", "msg": str(exc)}]) from None


def load_config(path, experiment: Optional[str] = None, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Read, parse and schema-check a config file.

    ``experiment`` (from the CLI subcommand) fills a missing ``experiment``
    key and must agree with a present one.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([{"loc": str(path), "msg": f"cannot read config: {exc.strerror}"}]) from None
    raw = parse_text(text, str(path))
    if experiment is not None:
        given = raw.setdefault("experiment", experiment)
        if given != experiment:
            raise ConfigError([{"loc": "experiment",
                                "msg": f"config declares {given!r} but subcommand is {experiment!r}"}])
    if seed_override is not None:
        raw["seed"] = str(seed_override)
    cfg = _model(raw)
    validate(cfg)
    return cfg


# --- semantic validation ---------------------------------------------------------------


def _check(errors: list, loc: str, fn):
    try:
        return fn()
    except (ValueError, TypeError) as exc:
        errors.append({"loc": loc, "msg": str(exc)})
        return None


def validate(cfg: ExperimentConfig) -> None:
    """Run every module precondition the experiment depends on.

    Raises :class:`ConfigError` listing all failures.
    """
    from .blowup import BlowupDataSpec, make_v0
    from .evolution import EvolutionConfig, NonlinearitySpec
    from .grid import make_grid
    from .randomization import RandomizationConfig, _check_resolution

    errors: list[dict] = []
    kind = cfg.experiment
    if not 0 <= cfg.seed < 2**64:
        errors.append({"loc": "seed", "msg": "seed must be an integer in [0, 2^64)"})
    grid = None
    if kind != "norms":
        grid = _check(errors, "grid", lambda: make_grid(cfg.grid.d, cfg.grid.n, cfg.grid.L))
    d = cfg.grid.d

    uses_random = (
        kind in ("ensemble", "identity-check")
        or (kind == "randomize")
        or (kind == "evolve" and (cfg.randomization.enabled or cfg.forcing.eps > 0))
        or (kind == "blowup-scan" and cfg.blowup.eps > 0)
    )
    if uses_random:
        _check(errors, "randomization", lambda: RandomizationConfig(
            cfg.randomization.window, cfg.randomization.distribution, cfg.seed))
        if grid is not None:
            _check(errors, "grid.L", lambda: _check_resolution(grid))
        if cfg.randomization.sample < 0 or cfg.randomization.samples < 1:
            errors.append({"loc": "randomization.samples", "msg": "need sample >= 0 and samples >= 1"})
    if kind != "norms" and kind != "blowup-scan":
        dc = cfg.data
        if dc.kind == "rough" and not 0 < dc.s_target < 1:
            errors.append({"loc": "data.s_target", "msg": "s_target must lie in (0, 1)"})
        if dc.kind == "file" and not dc.path:
            errors.append({"loc": "data.path", "msg": "data.kind = file needs data.path"})
        elif dc.kind == "file" and not Path(dc.path).is_file():
            errors.append({"loc": "data.path", "msg": f"missing file {dc.path}"})
        if dc.kind == "gaussian" and not dc.width > 0:
            errors.append({"loc": "data.width", "msg": "width must be positive"})
    if kind in ("evolve", "identity-check", "blowup-scan"):
        ev = cfg.evolution
        _check(errors, "evolution", lambda: EvolutionConfig(
            ev.dt, ev.t_end, ev.snapshot_stride, ev.blowup_threshold, ev.dealias, ev.cfl, ev.diagnostics))
    if kind == "evolve" and cfg.nonlinearity.kind != "none":
        nl = cfg.nonlinearity
        _check(errors, "nonlinearity", lambda: NonlinearitySpec(nl.kind, d, nl.sign, nl.lam))
    if kind in ("evolve", "identity-check") and cfg.forcing.eps < 0:
        errors.append({"loc": "forcing.eps", "msg": "eps must be non-negative"})
    if kind == "identity-check":
        _check(errors, "grid.d", lambda: NonlinearitySpec.gauge(d, cfg.identity.sign))
        if cfg.forcing.eps <= 0:
            errors.append({"loc": "forcing.eps", "msg": "identity-check needs eps > 0"})
    if kind == "ensemble":
        e = cfg.ensemble
        if e.m < 2:
            errors.append({"loc": "ensemble.m", "msg": "need m >= 2"})
        if e.statistic == "strichartz" and not (math.isfinite(e.q) and math.isfinite(e.r) and e.T > 0):
            errors.append({"loc": "ensemble", "msg": "strichartz statistic needs finite q, r and T > 0"})
    if kind == "blowup-scan":
        b = cfg.blowup
        spec = _check(errors, "blowup", lambda: BlowupDataSpec(
            d, b.k, b.delta0, b.orientation, 1.0, b.eps, b.lam))
        if spec is not None and grid is not None:
            _check(errors, "blowup", lambda: make_v0(spec, grid))
        if len(b.alphas) < 5:
            errors.append({"loc": "blowup.alphas", "msg": "need at least 5 alpha values"})
        if any(not a > 0 for a in b.alphas):
            errors.append({"loc": "blowup.alphas", "msg": "alphas must be positive"})
    if kind == "norms":
        if not cfg.norms.inputs:
            errors.append({"loc": "norms.inputs", "msg": "no snapshot files given"})
        for p in cfg.norms.inputs:
            if not Path(p).is_file():
                errors.append({"loc": "norms.inputs", "msg": f"missing file {p}"})
        if any(r < 1 for r in cfg.norms.r):
            errors.append({"loc": "norms.r", "msg": "Lebesgue exponents must be >= 1"})
    if errors:
        raise ConfigError(errors)


def _canonical(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON of the validated config (first 16 hex digits)."""
    payload = json.dumps(_canonical(cfg.model_dump()), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
