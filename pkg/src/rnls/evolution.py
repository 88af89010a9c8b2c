"""Split-step evolution of the energy-critical NLS and its forced variants.

The equation is written ``i u_t + Laplacian u = N(u + z)`` where ``z`` is an
optional free evolution ``z(t) = eps * S(t) phi`` and

* gauge kind:   ``N(w) = mu |w|^(4/(d-2)) w`` with ``mu = +1`` defocusing,
* modulus kind: ``N(w) = lam |w|^((d+2)/(d-2))`` with complex ``lam``.

One step is the Strang composition ``S(h/2) o NL(h) o S(h/2)``.  The linear
part is the exact multiplier ``exp(-i |xi|^2 t)``; the nonlinear part solves
``w_t = -i N(w + z)`` pointwise with ``z`` frozen at the step midpoint.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Literal, Optional, Sequence

import numpy as np

from .grid import PHYSICAL, Field, GridError, GridSpec, fftn, ifftn, save_snapshot

__all__ = [
    "NonlinearitySpec",
    "EvolutionConfig",
    "Forcing",
    "Status",
    "Trajectory",
    "linear_flow",
    "linear_flow_values",
    "nonlinear_substep",
    "nonlinearity",
    "dealias_mask",
    "evolve",
    "rescale_dilation",
    "write_series_csv",
]

COMPLETED = "completed"
BLEWUP = "blewup"
ABORTED = "aborted"


# --- nonlinearity and run settings ------------------------------------------------------


@dataclass(frozen=True)
class NonlinearitySpec:
    """Which nonlinearity to evolve.

    Parameters
    ----------
    kind : {"gauge", "modulus"}
    d : int
        Spatial dimension; sets the exponents.  Must be at least 3.
    sign : {+1, -1}
        Gauge kind only.  ``+1`` is defocusing.
    lam : complex
        Modulus kind only.  Must be nonzero.
    """

    kind: Literal["gauge", "modulus"]
    d: int
    sign: int = 1
    lam: complex = 1.0

    def __post_init__(self):
        if self.kind not in ("gauge", "modulus"):
            raise ValueError(f"kind must be 'gauge' or 'modulus', got {self.kind!r}")
        if int(self.d) != self.d or not 3 <= self.d <= 6:
            raise ValueError(f"nonlinear runs need d in 3..6, got {self.d!r}")
        if self.kind == "gauge" and self.sign not in (1, -1):
            raise ValueError("gauge sign must be +1 or -1")
        if self.kind == "modulus" and complex(self.lam) == 0:
            raise ValueError("modulus coefficient must be nonzero")
        object.__setattr__(self, "lam", complex(self.lam))

    @classmethod
    def gauge(cls, d: int, sign: int = 1) -> NonlinearitySpec:
        return cls("gauge", d, sign=sign)

    @classmethod
    def modulus(cls, d: int, lam: complex = 1.0) -> NonlinearitySpec:
        return cls("modulus", d, lam=lam)

    @property
    def gauge_power(self) -> float:
        return 4.0 / (self.d - 2)

    @property
    def modulus_power(self) -> float:
        return (self.d + 2) / (self.d - 2)

    @property
    def growth_power(self) -> float:
        """Exponent ``a`` with ``|N(w)| = c |w|^(a+1)``; sets the stiffness."""
        return self.gauge_power if self.kind == "gauge" else self.modulus_power - 1.0


def nonlinearity(w: np.ndarray, spec: NonlinearitySpec) -> np.ndarray:
    """``N(w)`` pointwise, with ``N(0) = 0``."""
    mod = np.abs(w)
    if spec.kind == "gauge":
        return spec.sign * mod**spec.gauge_power * w
    return spec.lam * mod**spec.modulus_power


@dataclass(frozen=True)
class EvolutionConfig:
    """Step control and diagnostics for :func:`evolve`.

    Parameters
    ----------
    dt : float
        Nominal step.  With ``cfl`` set, each step is
        ``min(dt, cfl / max|v+z|^a)`` with ``a`` the growth power.
    t_end : float
    snapshot_stride : int
        Steps between stored snapshots.
    blowup_threshold : float
        ``Theta``: blowup is declared when ``sup|v| > Theta * sup|v(0)|``.
    dealias : bool or None
        2/3-rule truncation of the nonlinear increment.  ``None`` turns it
        on for the modulus kind only.
    cfl : float or None
        Enables the adaptive step.
    diagnostics : bool
        Record energy and modified energy every step (one extra transform
        per step).  Mass and sup norm are always recorded.
    """

    dt: float
    t_end: float
    snapshot_stride: int = 1
    blowup_threshold: float = 1e3
    dealias: Optional[bool] = None
    cfl: Optional[float] = None
    diagnostics: bool = True
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not self.dt > 0 or not math.isfinite(self.dt):
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be a positive integer")
        if not self.blowup_threshold > 1:
            raise ValueError("blowup_threshold must exceed 1")
        if self.cfl is not None and not self.cfl > 0:
            raise ValueError("cfl must be positive")

    def uses_dealias(self, spec: Optional[NonlinearitySpec]) -> bool:
        if self.dealias is None:
            return spec is not None and spec.kind == "modulus"
        return bool(self.dealias)


# --- linear flow and forcing --------------------------------------------------


def linear_flow_values(grid: GridSpec, hat: np.ndarray, t: float) -> np.ndarray:
    """Spectral coefficients of ``S(t)`` applied to ``hat``."""
    return np.exp(-1j * t * grid.k2) * hat


def linear_flow(phi: Field, t: float) -> Field:
    """Free Schrodinger flow ``S(t) = exp(i t Laplacian)``, in ``phi``'s representation."""
    out = linear_flow_values(phi.grid, phi.spectral_values(), t)
    if phi.space == PHYSICAL:
        return Field(phi.grid, ifftn(out), PHYSICAL)
    return phi.with_values(out)


@dataclass(frozen=True, eq=False)
class Forcing:
    """The free evolution ``z(t) = eps * S(t) phi``, exact at any time."""

    phi: Field
    eps: float = 1.0

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError("forcing amplitude must be non-negative")
        object.__setattr__(self, "_hat", self.phi.spectral_values())

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid

    def spectral_at(self, t: float) -> np.ndarray:
        return self.eps * linear_flow_values(self.grid, self._hat, t)

    def at(self, t: float) -> np.ndarray:
        """Physical samples of ``z(t)``."""
        if self.eps == 0:
            return np.zeros(self.grid.shape, np.complex128)
        return ifftn(self.spectral_at(t))

    def field_at(self, t: float) -> Field:
        return Field(self.grid, self.at(t), PHYSICAL)


# --- nonlinear substep --------------------------------------------------------


def _rk4_scaled(v: np.ndarray, h: float, c: complex,
                modulus: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """One RK4 step of ``y' = c * modulus(y)`` with ``modulus`` real-valued.

    Stages are kept real and scaled by ``c`` only when added to ``y``.
    """
    hc = h * c
    m1 = modulus(v)
    m2 = modulus(v + (0.5 * hc) * m1)
    m3 = modulus(v + (0.5 * hc) * m2)
    m4 = modulus(v + hc * m3)
    m2 += m3
    m2 *= 2.0
    m2 += m1
    m2 += m4
    return v + (hc / 6.0) * m2


def _substep_values(v: np.ndarray, h: float, spec: NonlinearitySpec,
                    z: Optional[np.ndarray]) -> np.ndarray:
    if spec.kind == "gauge":
        # |w| is constant along w_t = -i mu |w|^a w, so the flow is a phase.
        w = v if z is None else v + z
        w = np.exp(-1j * spec.sign * h * np.abs(w) ** spec.gauge_power) * w
        return w if z is None else w - z
    c, p = -1j * spec.lam, spec.modulus_power
    if z is None:
        return _rk4_scaled(v, h, c, lambda y: np.abs(y) ** p)
    return _rk4_scaled(v, h, c, lambda y: np.abs(y + z) ** p)


def nonlinear_substep(u: Field, dt: float, spec: NonlinearitySpec,
                      z_t: Optional[Field] = None) -> Field:
    """Advance ``u_t = -i N(u + z_t)`` by ``dt`` pointwise, ``z_t`` frozen.

    The gauge kind is solved exactly (the flow of the frozen ODE is a phase
    rotation of ``u + z_t``); the modulus kind takes one RK4 step.
    """
    if u.space != PHYSICAL:
        raise GridError("nonlinear_substep expects a physical-space field")
    z = None
    if z_t is not None:
        u._check_compatible(z_t)
        z = z_t.values
    return u.with_values(_substep_values(u.values, dt, spec, z))


def dealias_mask(grid: GridSpec) -> np.ndarray:
    """Keep modes with ``|m| < n/3`` along every axis."""
    m = np.abs(np.fft.fftfreq(grid.n, d=1.0 / grid.n))
    keep = (m < grid.n / 3.0).astype(float)
    out = np.ones((1,) * grid.d)
    for j in range(grid.d):
        out = out * grid.axis(keep, j)
    return np.broadcast_to(out, grid.shape)


# --- trajectory ----------------------------------------------------------------


@dataclass(frozen=True)
class Status:
    kind: Literal["completed", "blewup", "aborted"]
    t_star: Optional[float] = None
    reason: str = ""

    def __str__(self):
        if self.kind == BLEWUP:
            return f"blewup({self.t_star:.6g})"
        if self.kind == ABORTED:
            return f"aborted({self.reason})"
        return COMPLETED


@dataclass
class Trajectory:
    """Time series and snapshots of one run.

    ``times`` holds every recorded step (starting at 0); ``series`` maps
    ``mass``, ``energy``, ``modified_energy`` and ``sup_norm`` to arrays of the
    same length.  Energies are NaN when diagnostics are off.
    """

    grid: GridSpec
    times: np.ndarray
    series: dict
    snapshot_times: list
    snapshots: list
    status: Status
    steps: int = 0

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def final(self) -> Field:
        return self.snapshots[-1]


Observer = Callable[[float, np.ndarray, Optional[np.ndarray]], None]


def _sup(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def evolve(initial: Field, spec: Optional[NonlinearitySpec], cfg: EvolutionConfig,
           forcing: Optional[Forcing] = None, observers: Sequence[Observer] = (),
           store_snapshots: bool = True) -> Trajectory:
    """Evolve ``initial`` to ``cfg.t_end`` (or until blowup / abort).

    Parameters
    ----------
    initial : Field
        ``v(0)``.  The returned snapshots are physical-space fields.
    spec : NonlinearitySpec or None
        ``None`` evolves the free equation.
    forcing : Forcing or None
        Enters only through ``N(v + z)``.
    observers : sequence of callables
        Each is called as ``obs(t, v, z)`` with physical arrays at every
        step boundary including ``t = 0``; ``z`` is None when unforced.
        Arrays are read-only views valid only during the call.
    store_snapshots : bool
        When False only the final state is kept.

    Notes
    -----
    Blowup is declared at the first step boundary where
    ``sup|v| > Theta * max(sup|v(0)|, sup|z(0)|)``; ``t_star`` is that time.
    """
    from .norms import _energy_values, _mass_values

    grid = initial.grid
    if forcing is not None and forcing.grid != grid:
        raise GridError("forcing lives on a different grid")
    if forcing is not None and forcing.eps == 0:
        forcing = None
    dealias = cfg.uses_dealias(spec)
    mask = dealias_mask(grid) if (dealias and spec is not None) else None
    # |xi|^2 takes few distinct values, so the half-step propagator is
    # exponentiated on those and gathered (same numbers, far fewer exp calls).
    k2_values, k2_index = np.unique(grid.k2, return_inverse=True)
    k2_index = k2_index.reshape(grid.shape)

    v = np.array(initial.physical_values(), dtype=np.complex128)
    vhat = fftn(v)
    t = 0.0
    z0 = forcing.at(0.0) if forcing is not None else None
    ref = max(_sup(v), _sup(z0) if z0 is not None else 0.0)
    threshold = cfg.blowup_threshold * ref

    times: list[float] = []
    rows: dict[str, list[float]] = {k: [] for k in ("mass", "energy", "modified_energy", "sup_norm")}
    snap_t: list[float] = []
    snaps: list[Field] = []

    def record(t_now, v_now, z_now):
        v_now.flags.writeable = False
        times.append(t_now)
        rows["mass"].append(_mass_values(grid, v_now))
        rows["sup_norm"].append(_sup(v_now))
        if cfg.diagnostics and spec is not None:
            sign = spec.sign if spec.kind == "gauge" else 1
            e = _energy_values(grid, v_now, None, sign)
            rows["energy"].append(e)
            rows["modified_energy"].append(
                e if z_now is None else _energy_values(grid, v_now, z_now, sign)
            )
        else:
            rows["energy"].append(math.nan)
            rows["modified_energy"].append(math.nan)
        for obs in observers:
            obs(t_now, v_now, z_now)

    def snapshot(t_now, v_now):
        if store_snapshots:
            snap_t.append(t_now)
            snaps.append(Field(grid, v_now, PHYSICAL))

    record(0.0, v, z0)
    snapshot(0.0, v)
    last_good = v
    z_now = z0
    status = Status(COMPLETED)
    steps = 0
    growth = spec.growth_power if spec is not None else 0.0
    while t < cfg.t_end * (1 - 1e-14):
        if steps >= cfg.max_steps:
            status = Status(ABORTED, reason="step budget exhausted")
            break
        h = cfg.dt
        if cfg.cfl is not None and spec is not None:
            peak = rows["sup_norm"][-1] if forcing is None else _sup(v + z_now)
            if peak > 0:
                h = min(h, cfg.cfl / peak**growth)
        h = min(h, cfg.t_end - t)
        half = np.exp(-0.5j * h * k2_values)[k2_index]
        vhat = half * vhat
        if spec is not None:
            w = ifftn(vhat)
            zm = forcing.at(t + 0.5 * h) if forcing is not None else None
            with np.errstate(over="ignore", invalid="ignore"):
                w_new = _substep_values(w, h, spec, zm)
            if mask is None:
                vhat = fftn(w_new)
            else:
                vhat = vhat + mask * fftn(w_new - w)
        vhat = half * vhat
        t += h
        steps += 1
        v = ifftn(vhat)
        if not np.isfinite(v).all():
            status = Status(ABORTED, reason=f"non-finite values at t={t:.6g}")
            break
        last_good = v
        z_now = forcing.at(t) if forcing is not None else None
        record(t, v, z_now)
        if ref > 0 and rows["sup_norm"][-1] > threshold:
            status = Status(BLEWUP, t_star=t)
            break
        if steps % cfg.snapshot_stride == 0 or t >= cfg.t_end * (1 - 1e-14):
            snapshot(t, v)

    if store_snapshots:
        if snap_t[-1] != times[-1]:
            snapshot(times[-1], last_good)
    else:
        snap_t, snaps = [times[-1]], [Field(grid, last_good, PHYSICAL)]
    series = {k: np.asarray(vals) for k, vals in rows.items()}
    return Trajectory(grid, np.asarray(times), series, snap_t, snaps, status, steps)


# --- symmetry -------------------------------------------------------------------


def rescale_dilation(u0: Field, mu: int = 2) -> Field:
    """Energy-critical dilation ``mu^((d-2)/2) u0(mu x)`` on the grid of side ``L/mu``.

    The same samples serve on the shrunken box, so the map is exact on the
    grid.  ``mu`` must be a positive integer.
    """
    if int(mu) != mu or mu < 1:
        raise GridError(f"dilation factor must be a positive integer, got {mu!r}")
    g = u0.grid
    if mu == 1:
        return u0
    grid = GridSpec(g.d, g.n, g.L / mu)
    return Field(grid, mu ** ((g.d - 2) / 2) * u0.physical_values(), PHYSICAL)


# --- export -----------------------------------------------------------------------


def write_series_csv(traj: Trajectory, path, header: Iterable[str] = ()) -> None:
    """CSV columns ``t, mass, energy, modified_energy, sup_norm``.

    ``header`` lines are written first as ``# ...`` comments.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(f"# status = {traj.status}\n")
        w = csv.writer(fh, lineterminator="\n")
        cols = ("mass", "energy", "modified_energy", "sup_norm")
        w.writerow(("t",) + cols)
        for i, t in enumerate(traj.times):
            w.writerow([repr(float(t))] + [repr(float(traj.series[c][i])) for c in cols])


def write_snapshots(traj: Trajectory, directory, prefix: str = "snap") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for i, f in enumerate(traj.snapshots):
        p = directory / f"{prefix}_{i:05d}.rnls"
        save_snapshot(f, p)
        out.append(p)
    return out
