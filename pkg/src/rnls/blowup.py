"""Blowup-adapted data, test-function functionals and blowup-time scaling.

The residual equation here is ``i v_t + Laplacian v = lam |v + z|^p`` with
``p = (d+2)/(d-2)``, ``v(0) = alpha v0`` and ``z = eps S(t) phi``.  Pairing it
with a real test function ``psi`` and taking real parts gives

    Re(lam) I - alpha II = III_1 + III_2

with ``I = int int |v+z|^p psi``, ``II = Im int v0 psi(0)``,
``III_1 = Im int int v d_t psi`` and ``III_2 = Re int int v Laplacian psi``.
The test functions are ``psi = (eta(t/T) theta(|x|/sqrt(T)))^ell`` built from
quintic smoothsteps.  Time derivatives are taken in closed form; the spatial
Laplacian is closed-form or spectral (see :meth:`TestFunctionSpec.space_factor`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from scipy import stats

from .evolution import BLEWUP, EvolutionConfig, Forcing, NonlinearitySpec, Trajectory, evolve
from .grid import PHYSICAL, Field, GridError, GridSpec, fftn, ifftn
from .montecarlo import ordered_map, resolve_workers
from .norms import kappa, scaling_exponent
from .projections import smoothstep, smoothstep_d1, smoothstep_d2

__all__ = [
    "BlowupDataSpec",
    "TestFunctionSpec",
    "SeparableTestFunction",
    "WeakAccumulator",
    "WeakFunctionals",
    "BlowupMeasurement",
    "ScalingStudy",
    "InsufficientData",
    "make_v0",
    "weak_functionals",
    "weak_residual",
    "measure_blowup_time",
    "scaling_study",
    "measure_scan",
    "fit_scaling",
    "cutoff",
]


class InsufficientData(ValueError):
    """Too few uncensored blowup times for a fit."""


# --- data --------------------------------------------------------------------------------


def cutoff(r):
    """``chi(r)``: 1 for ``r <= 1``, 0 for ``r >= 2``, quintic smoothstep between."""
    return 1.0 - smoothstep(np.asarray(r, float) - 1.0)


@dataclass(frozen=True)
class BlowupDataSpec:
    """Singular data ``alpha v0`` and perturbation size for the residual equation.

    Parameters
    ----------
    d : int
    k : float
        Singularity exponent, ``0 < k < d/2 - 1``.
    delta0 : float or None
        Mollification radius; ``None`` means ``2 dx`` on the grid used.
    orientation : {"A1", "A2"}
        ``A2``: ``-Re(lam) Im v0 >= |x|^-k`` on the unit ball (needs
        ``Re lam != 0``); ``A1``: ``Im(lam) Re v0 >= |x|^-k`` (needs
        ``Im lam != 0``).
    alpha : float
    eps : float
    lam : complex
    """

    d: int = 5
    k: float = 1.0
    delta0: Optional[float] = None
    orientation: Literal["A1", "A2"] = "A2"
    alpha: float = 1.0
    eps: float = 0.0
    lam: complex = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or not 3 <= self.d <= 6:
            raise ValueError(f"d must be in 3..6, got {self.d!r}")
        if not 0 < self.k < self.d / 2 - 1:
            raise ValueError(f"need 0 < k < d/2 - 1 = {self.d / 2 - 1:g}, got k = {self.k!r}")
        if self.delta0 is not None and not self.delta0 > 0:
            raise ValueError("delta0 must be positive")
        if self.orientation not in ("A1", "A2"):
            raise ValueError("orientation must be 'A1' or 'A2'")
        lam = complex(self.lam)
        object.__setattr__(self, "lam", lam)
        if self.orientation == "A2" and lam.real == 0:
            raise ValueError("orientation A2 needs Re(lam) != 0")
        if self.orientation == "A1" and lam.imag == 0:
            raise ValueError("orientation A1 needs Im(lam) != 0")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.eps >= 0:
            raise ValueError("eps must be non-negative")

    @property
    def kappa(self) -> Fraction:
        return kappa(self.d, Fraction(self.k).limit_denominator(10**6))

    @property
    def target_exponent(self) -> Fraction:
        return scaling_exponent(self.d, Fraction(self.k).limit_denominator(10**6))

    def nonlinearity(self) -> NonlinearitySpec:
        return NonlinearitySpec.modulus(self.d, self.lam)

    def resolved_delta0(self, grid: GridSpec) -> float:
        return 2 * grid.dx if self.delta0 is None else self.delta0


def make_v0(spec: BlowupDataSpec, grid: GridSpec) -> Field:
    """``v0 = c chi(|x|) max(|x|, delta0)^-k`` with ``c = -i/Re(lam)`` (A2) or ``1/Im(lam)`` (A1).

    On ``delta0 <= |x| <= 1`` the defining inequality holds with equality;
    inside ``delta0`` the profile is flat.
    """
    if grid.d != spec.d:
        raise GridError(f"grid has d = {grid.d}, data spec has d = {spec.d}")
    delta0 = spec.resolved_delta0(grid)
    if delta0 < 2 * grid.dx * (1 - 1e-12):
        raise GridError(f"delta0 = {delta0:.4g} is under-resolved (need >= 2 dx = {2 * grid.dx:.4g})")
    if grid.L < 4 * (1 - 1e-12):
        raise GridError("the cutoff support |x| <= 2 needs L >= 4")
    profile = cutoff(grid.r) * np.maximum(grid.r, delta0) ** (-spec.k)
    c = -1j / spec.lam.real if spec.orientation == "A2" else 1.0 / spec.lam.imag
    return Field(grid, c * profile, PHYSICAL)


# --- test functions --------------------------------------------------------------------------


def _step_down(x):
    """``1 - S(2x - 1)``: 1 on ``[0, 1/2]``, 0 on ``[1, inf)``; with derivatives."""
    y = 2.0 * np.asarray(x, float) - 1.0
    return 1.0 - smoothstep(y), -2.0 * smoothstep_d1(y), -4.0 * smoothstep_d2(y)


@dataclass(frozen=True)
class TestFunctionSpec:
    """``psi_T^ell`` with ``psi_T(t, x) = eta(t/T) theta(|x|/sqrt(T))``.

    ``eta`` and ``theta`` equal 1 on ``[0, 1/2)`` and 0 on ``[1, inf)``.
    Requires ``T >= 1`` and integer ``ell >= 2 p' + 1`` with ``p' = (d+2)/4``.
    """

    T: float = 1.0
    ell: int = 5
    d: int = 5

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not self.T >= 1:
            raise ValueError(f"horizon T must be >= 1, got {self.T!r}")
        if int(self.ell) != self.ell:
            raise ValueError("ell must be an integer")
        p_prime = Fraction(self.d + 2, 4)
        if self.ell < 2 * p_prime + 1:
            raise ValueError(f"ell = {self.ell} < 2p' + 1 = {float(2 * p_prime + 1):g}")

    @property
    def horizon(self) -> float:
        return self.T

    def eta(self, t):
        return _step_down(np.asarray(t, float) / self.T)[0]

    def time_factor(self, t: float) -> tuple[float, float]:
        """``eta_T(t)^ell`` and its time derivative."""
        e, de, _ = _step_down(t / self.T)
        e, de = float(e), float(de) / self.T
        return e**self.ell, self.ell * e ** (self.ell - 1) * de

    def check_grid(self, grid: GridSpec):
        if grid.d != self.d:
            raise GridError(f"grid has d = {grid.d}, test function has d = {self.d}")
        if grid.L < 4 * math.sqrt(self.T) * (1 - 1e-12):
            raise GridError(f"box L = {grid.L:.4g} must be >= 4 sqrt(T) = {4 * math.sqrt(self.T):.4g}")

    def space_factor(self, grid: GridSpec, laplacian: str = "spectral") -> tuple[np.ndarray, np.ndarray]:
        """``theta_T^ell`` on the grid and its Laplacian.

        ``laplacian="analytic"`` evaluates the closed-form radial Laplacian
        ``g'' + (d-1) g'/r``.  ``"spectral"`` applies the grid's spectral
        Laplacian to the samples, which is the operator the evolution uses,
        so summation by parts against the computed solution is exact.  The
        two agree once the transition shell of ``theta_T`` is resolved.
        """
        self.check_grid(grid)
        r = np.asarray(grid.r)
        s = math.sqrt(self.T)
        th, dth, d2th = _step_down(r / s)
        ell = self.ell
        g = th**ell
        if laplacian == "spectral":
            return g, ifftn(-grid.k2 * fftn(g)).real
        if laplacian != "analytic":
            raise ValueError(f"laplacian must be 'spectral' or 'analytic', got {laplacian!r}")
        g1 = ell * th ** (ell - 1) * dth / s
        g2 = (ell * (ell - 1) * th ** (ell - 2) * dth**2 + ell * th ** (ell - 1) * d2th) / self.T
        radial = np.zeros_like(r)
        nz = r > 0
        radial[nz] = (grid.d - 1) * g1[nz] / r[nz]
        return g, g2 + radial

    def bind(self, grid: GridSpec, laplacian: str = "spectral") -> SeparableTestFunction:
        g, lap = self.space_factor(grid, laplacian)
        return SeparableTestFunction(grid, self.time_factor, g, lap, self.T)


@dataclass(frozen=True, eq=False)
class SeparableTestFunction:
    """``psi(t, x) = a(t) b(x)`` with ``a, a'`` given by ``time_factor(t)``.

    ``space`` holds ``b`` and ``space_laplacian`` its Laplacian on the grid.
    ``a`` must vanish at ``horizon`` and ``b`` near the box boundary.
    """

    grid: GridSpec
    time_factor: Callable[[float], tuple[float, float]]
    space: np.ndarray
    space_laplacian: np.ndarray
    horizon: float

    __test__ = False

    def __post_init__(self):
        b = np.asarray(self.space)
        edge = max(float(np.abs(np.take(b, 0, axis=j)).max()) for j in range(self.grid.d))
        if edge > 1e-12 * max(float(np.abs(b).max()), 1e-300):
            raise GridError("test function is not compactly supported inside the box")
        if abs(self.time_factor(self.horizon)[0]) > 1e-12:
            raise GridError("test function does not vanish at its horizon")


# --- weak functionals --------------------------------------------------------------------------


@dataclass
class WeakFunctionals:
    """Space-time integrals of the weak formulation and its residuals.

    ``residual`` is the real-part identity ``Re(lam) I - alpha II - III_1 -
    III_2``; ``complex_residual`` is the full weak-form defect
    ``int int v (-i d_t psi + Laplacian psi) - i alpha int v0 psi(0)
    - lam int int |v+z|^p psi``.
    """

    I: float
    II: float
    III1: float
    III2: float
    residual: float
    complex_residual: complex
    alpha: float
    lam: complex
    linear_part: complex = 0j
    initial_part: complex = 0j

    @property
    def scale(self) -> float:
        """Largest constituent term of the real-part identity."""
        return max(abs(self.lam.real * self.I), abs(self.alpha * self.II), abs(self.III1), abs(self.III2))

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.scale if self.scale > 0 else 0.0

    @property
    def complex_scale(self) -> float:
        return max(abs(self.linear_part), abs(self.alpha * self.initial_part), abs(self.lam) * abs(self.I))

    @property
    def relative_complex_residual(self) -> float:
        s = self.complex_scale
        return abs(self.complex_residual) / s if s > 0 else 0.0


class WeakAccumulator:
    """Observer for :func:`~rnls.evolution.evolve` that accumulates the weak functionals.

    Parameters
    ----------
    tf : TestFunctionSpec or SeparableTestFunction
    grid : GridSpec
    v0 : Field
        Unscaled data; the run starts from ``alpha * v0``.
    alpha : float
    lam : complex
        Coefficient used in the residuals (0 for the free equation).
    p : float
        Power in ``|v + z|^p``; defaults to ``(d+2)/(d-2)``.
    laplacian : {"spectral", "analytic"}
        How a :class:`TestFunctionSpec` evaluates its Laplacian.
    """

    def __init__(self, tf, grid: GridSpec, v0: Field, alpha: float, lam: complex = 1.0,
                 p: Optional[float] = None, laplacian: str = "spectral"):
        self.test = tf.bind(grid, laplacian) if isinstance(tf, TestFunctionSpec) else tf
        if self.test.grid != grid or v0.grid != grid:
            raise GridError("test function, data and run must share a grid")
        self.grid = grid
        self.alpha = float(alpha)
        self.lam = complex(lam)
        self.p = (grid.d + 2) / (grid.d - 2) if p is None else p
        self.v0 = v0.physical_values()
        self.t: list[float] = []
        self.rows: list[tuple] = []

    def __call__(self, t: float, v: np.ndarray, z: Optional[np.ndarray]):
        if self.t and t > self.test.horizon and self.t[-1] >= self.test.horizon:
            return
        a, da = self.test.time_factor(t)
        b, lap = self.test.space, self.test.space_laplacian
        vol = self.grid.cell_volume
        w = v if z is None else v + z
        pot = float(np.sum(np.abs(w) ** self.p * b) * vol)
        vb = complex(np.sum(v * b) * vol)
        vlap = complex(np.sum(v * lap) * vol)
        self.t.append(float(t))
        # integrands of I, of int v d_t psi and of int v Laplacian psi
        self.rows.append((a * pot, da * vb, a * vlap))

    def result(self) -> WeakFunctionals:
        times = np.asarray(self.t)
        if times.size < 2 or times[-1] < self.test.horizon * (1 - 1e-12):
            raise ValueError("trajectory ends before the test-function horizon")
        rows = np.asarray(self.rows, dtype=np.complex128)
        I = float(np.trapezoid(rows[:, 0].real, times))
        dpsi = complex(np.trapezoid(rows[:, 1], times))
        lap = complex(np.trapezoid(rows[:, 2], times))
        a0 = self.test.time_factor(0.0)[0]
        init = complex(np.sum(self.v0 * self.test.space) * self.grid.cell_volume) * a0
        II = init.imag
        III1, III2 = dpsi.imag, lap.real
        residual = self.lam.real * I - self.alpha * II - III1 - III2
        lin = -1j * dpsi + lap
        cres = lin - 1j * self.alpha * init - self.lam * I
        return WeakFunctionals(I, II, III1, III2, residual, cres, self.alpha, self.lam, lin, init)


def weak_functionals(traj: Trajectory, tf, v0: Field, alpha: float, lam: complex = 1.0,
                     forcing: Optional[Forcing] = None, p: Optional[float] = None) -> WeakFunctionals:
    """Weak functionals from a trajectory that stored a snapshot at every step.

    For long runs prefer passing a :class:`WeakAccumulator` as an observer.
    """
    acc = WeakAccumulator(tf, traj.grid, v0, alpha, lam, p)
    for t, snap in zip(traj.snapshot_times, traj.snapshots):
        if snap.grid != traj.grid:
            raise GridError("snapshot grid mismatch")
        z = forcing.at(t) if forcing is not None else None
        acc(t, snap.physical_values(), z)
    return acc.result()


def weak_residual(traj: Trajectory, tf, v0: Field, alpha: float, lam: complex = 1.0,
                  forcing: Optional[Forcing] = None) -> float:
    """Magnitude of the complex weak-form defect for the test function ``tf``."""
    return abs(weak_functionals(traj, tf, v0, alpha, lam, forcing).complex_residual)


# --- blowup time ----------------------------------------------------------------------------------


@dataclass
class BlowupMeasurement:
    """Threshold-crossing time with its robustness checks.

    ``t_star`` is the first time with ``sup|v| > Theta sup|v(0)|``;
    ``t_star_2theta`` uses ``2 Theta`` in the same run; ``t_star_half_dt``
    repeats the run with half the step and half the CFL number.
    """

    alpha: float
    eps: float
    t_star: Optional[float]
    t_star_2theta: Optional[float]
    t_star_half_dt: Optional[float]
    censored: bool
    t_end: float
    steps: int

    @staticmethod
    def _shift(a, b):
        if a is None or b is None:
            return math.inf
        return abs(b - a) / a

    @property
    def theta_shift(self) -> float:
        return self._shift(self.t_star, self.t_star_2theta)

    @property
    def dt_shift(self) -> float:
        return self._shift(self.t_star, self.t_star_half_dt)

    @property
    def theta_robust(self) -> bool:
        return self.theta_shift < 0.05

    @property
    def dt_robust(self) -> bool:
        return self.dt_shift < 0.05


class _FirstCrossing:
    def __init__(self, theta: float):
        self.theta = theta
        self.ref = None
        self.time = None

    def __call__(self, t, v, z):
        peak = float(np.abs(v).max())
        if self.ref is None:
            self.ref = max(peak, float(np.abs(z).max()) if z is not None else 0.0)
        elif self.time is None and self.ref > 0 and peak > self.theta * self.ref:
            self.time = t


def _crossing_run(v_init: Field, nl: NonlinearitySpec, cfg: EvolutionConfig,
                  forcing: Optional[Forcing]):
    theta = cfg.blowup_threshold
    first = _FirstCrossing(theta)
    run_cfg = replace(cfg, blowup_threshold=2 * theta, diagnostics=False,
                      snapshot_stride=cfg.max_steps)
    traj = evolve(v_init, nl, run_cfg, forcing, observers=[first], store_snapshots=False)
    t2 = traj.status.t_star if traj.status.kind == BLEWUP else None
    return first.time, t2, traj.steps


def measure_blowup_time(spec: BlowupDataSpec, grid: GridSpec, cfg: EvolutionConfig,
                        phi_omega: Optional[Field] = None, check_dt: bool = True) -> BlowupMeasurement:
    """Surrogate blowup time of ``i v_t + Laplacian v = lam |v + eps S(t) phi_omega|^p``.

    One run with threshold ``2 Theta`` records both the ``Theta`` and the
    ``2 Theta`` crossing.  If ``Theta`` is crossed and ``check_dt`` is set,
    the run is repeated with ``dt`` and ``cfl`` halved.  No crossing before
    ``cfg.t_end`` is reported as censored.
    """
    v0 = make_v0(spec, grid)
    nl = spec.nonlinearity()
    forcing = None
    if spec.eps > 0:
        if phi_omega is None:
            raise ValueError("eps > 0 needs a randomized profile phi_omega")
        forcing = Forcing(phi_omega, spec.eps)
    v_init = v0 * spec.alpha
    t1, t2, steps = _crossing_run(v_init, nl, cfg, forcing)
    t_half = None
    if t1 is not None and check_dt:
        half = replace(cfg, dt=cfg.dt / 2, cfl=None if cfg.cfl is None else cfg.cfl / 2)
        t_half, _, _ = _crossing_run(v_init, nl, half, forcing)
    return BlowupMeasurement(spec.alpha, spec.eps, t1, t2, t_half, t1 is None, cfg.t_end, steps)


# --- scaling study -------------------------------------------------------------------------------------


@dataclass
class ScalingStudy:
    """Fit of ``log T*`` against ``log alpha`` over the uncensored points."""

    alphas: np.ndarray
    measurements: list
    beta: float
    intercept: float
    beta_se: float
    band: tuple
    target: float
    tolerance: float

    @property
    def t_star(self) -> np.ndarray:
        return np.array([m.t_star if m.t_star is not None else np.nan for m in self.measurements])

    @property
    def censored(self) -> np.ndarray:
        return np.array([m.censored for m in self.measurements])

    @property
    def strictly_decreasing(self) -> bool:
        t = self.t_star[~self.censored]
        return bool(np.all(np.diff(t) < 0))

    @property
    def theta_robust(self) -> bool:
        return all(m.theta_robust for m in self.measurements if not m.censored)

    @property
    def dt_robust(self) -> bool:
        return all(m.dt_robust for m in self.measurements if not m.censored)

    @property
    def meets_bound(self) -> bool:
        """Fitted slope at least as steep as ``target * (1 - tolerance)``."""
        return self.beta <= self.target * (1 - self.tolerance)

    @property
    def steeper_than_target(self) -> bool:
        return self.beta < self.target

    def fit_value(self, alpha) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(alpha, float) ** self.beta

    def local_slopes(self) -> np.ndarray:
        a, t = self.alphas[~self.censored], self.t_star[~self.censored]
        return np.diff(np.log(t)) / np.diff(np.log(a))


def fit_scaling(alphas, measurements, target: float, tolerance: float = 0.25,
                min_points: int = 5) -> ScalingStudy:
    alphas = np.asarray(alphas, float)
    t = np.array([m.t_star if not m.censored else np.nan for m in measurements])
    ok = np.isfinite(t)
    if ok.sum() < min_points:
        raise InsufficientData(f"{int(ok.sum())} uncensored blowup times, need {min_points}")
    res = stats.linregress(np.log(alphas[ok]), np.log(t[ok]))
    dof = int(ok.sum()) - 2
    half = stats.t.ppf(0.975, dof) * res.stderr
    return ScalingStudy(alphas, list(measurements), float(res.slope), float(res.intercept),
                        float(res.stderr), (float(res.slope - half), float(res.slope + half)),
                        float(target), tolerance)


def _measure_job(args):
    spec, grid, cfg, phi_omega, check_dt = args
    return measure_blowup_time(spec, grid, cfg, phi_omega, check_dt)


def measure_scan(template: BlowupDataSpec, alphas: Sequence[float], grid: GridSpec,
                 cfg: EvolutionConfig, phi_omega: Optional[Field] = None, check_dt: bool = True,
                 workers: Optional[int] = None) -> list[BlowupMeasurement]:
    """:func:`measure_blowup_time` for each alpha, as independent jobs in alpha order."""
    jobs = [(replace(template, alpha=float(a)), grid, cfg, phi_omega, check_dt) for a in alphas]
    results = ordered_map(_measure_job, jobs, resolve_workers(workers), chunk=1)
    meas = []
    for ok, val in results:
        if not ok:
            raise RuntimeError(f"blowup run failed: {val}")
        meas.append(val)
    return meas


def scaling_study(template: BlowupDataSpec, alphas: Sequence[float], grid: GridSpec,
                  cfg: EvolutionConfig, phi_omega: Optional[Field] = None, check_dt: bool = True,
                  tolerance: float = 0.25, workers: Optional[int] = None) -> ScalingStudy:
    """Measure ``T*(alpha)`` on ``alphas`` and fit the exponent.

    Raises :class:`InsufficientData` with fewer than 5 uncensored points.
    """
    meas = measure_scan(template, alphas, grid, cfg, phi_omega, check_dt, workers)
    return fit_scaling(alphas, meas, float(template.target_exponent), tolerance)
