"""Scalar diagnostics: Lebesgue, Sobolev and space-time norms, exponent
arithmetic, conserved quantities and energy-derivative evaluators.

All integrals are grid quadratures with weight ``dx^d``.  The ``L^inf`` norm
is the discrete sup over grid points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .grid import PHYSICAL, Field, GridError, GridSpec, fftn, ifftn
from .projections import lp_weight

__all__ = [
    "INF",
    "AdmissiblePair",
    "PaperExponents",
    "kappa",
    "scaling_exponent",
    "lebesgue_norm",
    "sobolev_norm",
    "w1r_norm",
    "wsr_norm",
    "spacetime_norm",
    "time_lebesgue",
    "mass",
    "energy",
    "modified_energy",
    "energy_coefficient",
    "energy_derivative_terms",
    "energy_derivative_rhs",
    "bilinear_probe",
    "log_log_slope",
]

INF = math.inf
Exponent = Union[int, Fraction, float]


# --- exact exponent arithmetic -------------------------------------------------


def _frac(x: Exponent):
    if x == INF:
        return INF
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**6)
    return Fraction(x)


def _recip(x) -> Fraction:
    return Fraction(0) if x == INF else 1 / Fraction(x)


def conjugate(x: Exponent) -> Fraction:
    """Hoelder conjugate ``x' = x / (x - 1)`` (exact)."""
    x = _frac(x)
    if x == INF:
        return Fraction(1)
    if x == 1:
        return INF
    return x / (x - 1)


@dataclass(frozen=True)
class AdmissiblePair:
    """Strichartz pair ``(q, r)`` with ``2/q + d/r = d/2`` checked exactly.

    ``INF`` stands for an infinite exponent.
    """

    q: Fraction
    r: Fraction
    d: int

    def __post_init__(self):
        q, r = _frac(self.q), _frac(self.r)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        d = self.d
        for name, v in (("q", q), ("r", r)):
            if v != INF and v < 2:
                raise ValueError(f"{name} = {v} is below 2")
        if 2 * _recip(q) + d * _recip(r) != Fraction(d, 2):
            raise ValueError(f"(q, r) = ({q}, {r}) violates 2/q + d/r = d/2 for d = {d}")
        if q == 2 and r == INF and d == 2:
            raise ValueError("the endpoint (2, inf) in d = 2 is excluded")

    @classmethod
    def from_q(cls, q: Exponent, d: int) -> AdmissiblePair:
        """The pair with given ``q``; ``r`` solved exactly."""
        inv_r = (Fraction(d, 2) - 2 * _recip(_frac(q))) / d
        return cls(_frac(q), INF if inv_r == 0 else 1 / inv_r, d)

    def as_float(self) -> tuple[float, float]:
        return float(self.q), float(self.r)


@dataclass(frozen=True)
class PaperExponents:
    """Exponents used in the analysis for ``d = 5, 6`` (formulas valid for ``d >= 3``).

    ``q_d = 2d/(d-2)``, ``r_d = 2d^2/(d^2-2d+4)``, ``rho_d = 2d^2/(d-2)^2``,
    ``p = (d+2)/(d-2)``, ``p' = (d+2)/4`` and energy coefficient ``(d-2)/(2d)``.
    """

    d: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise ValueError("exponents need d >= 3")

    @property
    def q(self) -> Fraction:
        return Fraction(2 * self.d, self.d - 2)

    @property
    def r(self) -> Fraction:
        d = self.d
        return Fraction(2 * d * d, d * d - 2 * d + 4)

    @property
    def rho(self) -> Fraction:
        return Fraction(2 * self.d**2, (self.d - 2) ** 2)

    @property
    def p(self) -> Fraction:
        return Fraction(self.d + 2, self.d - 2)

    @property
    def p_prime(self) -> Fraction:
        return Fraction(self.d + 2, 4)

    @property
    def energy_coefficient(self) -> Fraction:
        return Fraction(self.d - 2, 2 * self.d)

    def pair(self) -> AdmissiblePair:
        return AdmissiblePair(self.q, self.r, self.d)


def kappa(d: int, k: Exponent) -> Fraction:
    """``(d-2)/4 - k/2``, the rate in the blowup-time bound."""
    return Fraction(d - 2, 4) - _frac(k) / 2


def scaling_exponent(d: int, k: Exponent) -> Fraction:
    """Bound exponent ``-1/kappa`` of ``T*(alpha) <~ alpha^(-1/kappa)``."""
    kap = kappa(d, k)
    if kap <= 0:
        raise ValueError(f"kappa = {kap} is not positive (need k < d/2 - 1)")
    return -1 / kap


def energy_coefficient(d: int) -> float:
    return (d - 2) / (2 * d)


# --- spatial norms --------------------------------------------------------------


def _phys(f: Field) -> np.ndarray:
    return f.physical_values()


def _lebesgue_values(grid: GridSpec, a: np.ndarray, r) -> float:
    mod = np.abs(a)
    if r == INF:
        return float(mod.max()) if mod.size else 0.0
    r = float(r)
    if r < 1:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {r}")
    peak = float(mod.max()) if mod.size else 0.0
    if peak == 0:
        return 0.0
    # Scale by the peak so large exponents do not overflow.
    return peak * float(np.sum((mod / peak) ** r) * grid.cell_volume) ** (1.0 / r)


def lebesgue_norm(f: Field, r) -> float:
    """``||f||_{L^r}``; ``r = INF`` is the grid max."""
    return _lebesgue_values(f.grid, _phys(f), r)


def sobolev_norm(f: Field, s: float) -> float:
    """``||<grad>^s f||_{L^2}`` evaluated in spectral space."""
    hat = f.spectral_values()
    w = (1.0 + f.grid.k2) ** s
    return math.sqrt(float(np.sum(w * (hat.real**2 + hat.imag**2)) * f.grid.cell_volume))


def _grad_modulus(grid: GridSpec, a: np.ndarray, hat: Optional[np.ndarray] = None) -> np.ndarray:
    hat = fftn(a) if hat is None else hat
    total = np.zeros(grid.shape)
    for kj in grid.k_axes():
        g = ifftn(1j * kj * hat)
        total += g.real**2 + g.imag**2
    return np.sqrt(total)


def w1r_norm(f: Field, r) -> float:
    """``||f||_{L^r} + || |grad f| ||_{L^r}``."""
    a = _phys(f)
    return _lebesgue_values(f.grid, a, r) + _lebesgue_values(f.grid, _grad_modulus(f.grid, a), r)


def wsr_norm(f: Field, s: float, r) -> float:
    """``||<grad>^s f||_{L^r}`` (Bessel-potential space ``W^{s,r}``)."""
    if s == 0:
        return lebesgue_norm(f, r)
    hat = f.spectral_values() * (1.0 + f.grid.k2) ** (s / 2)
    return _lebesgue_values(f.grid, ifftn(hat), r)


def time_lebesgue(times: Sequence[float], values: Sequence[float], q) -> float:
    """``(int |g(t)|^q dt)^(1/q)`` by the trapezoid rule; ``q = INF`` is the max."""
    times = np.asarray(times, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if times.size < 2:
        raise ValueError("need at least two time samples")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if q == INF:
        return float(values.max())
    q = float(q)
    return float(np.trapezoid(values**q, times)) ** (1.0 / q)


def spacetime_norm(traj, q, r, s: Optional[float] = None) -> float:
    """``||v||_{L^q_t W^{s,r}_x}`` over the stored snapshots of ``traj``.

    ``traj`` is a :class:`~rnls.evolution.Trajectory` or a pair
    ``(times, fields)``.
    """
    if isinstance(traj, tuple):
        times, fields = traj
    else:
        times, fields = traj.snapshot_times, traj.snapshots
    if len(fields) < 2:
        raise ValueError("space-time norm needs at least two snapshots")
    s = 0.0 if s is None else s
    vals = [wsr_norm(f, s, r) for f in fields]
    return time_lebesgue(times, vals, q)


# --- conserved and modified energies -------------------------------------------


def _mass_values(grid: GridSpec, a: np.ndarray) -> float:
    return float(np.sum(a.real**2 + a.imag**2) * grid.cell_volume)


def _dirichlet_values(grid: GridSpec, a: np.ndarray) -> float:
    """``int |grad a|^2`` via Parseval."""
    hat = fftn(a)
    return float(np.sum(grid.k2 * (hat.real**2 + hat.imag**2)) * grid.cell_volume)


def _energy_values(grid: GridSpec, v: np.ndarray, z: Optional[np.ndarray], sign: int = 1) -> float:
    d = grid.d
    w = v if z is None else v + z
    pot = float(np.sum(np.abs(w) ** (2.0 * d / (d - 2))) * grid.cell_volume)
    return 0.5 * _dirichlet_values(grid, v) + sign * energy_coefficient(d) * pot


def _same_grid(*fields: Field):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridError("fields live on different grids")


def mass(f: Field) -> float:
    """``int |f|^2``."""
    return _mass_values(f.grid, _phys(f))


def energy(f: Field, d: Optional[int] = None, sign: int = 1) -> float:
    """``1/2 int |grad f|^2 + sign (d-2)/(2d) int |f|^(2d/(d-2))``."""
    if d is not None and d != f.grid.d:
        raise GridError(f"field has d = {f.grid.d}, energy requested for d = {d}")
    if f.grid.d < 3:
        raise GridError("the critical energy needs d >= 3")
    return _energy_values(f.grid, _phys(f), None, sign)


def modified_energy(v: Field, z: Field, d: int = 5, sign: int = 1) -> float:
    """``1/2 int |grad v|^2 + sign (d-2)/(2d) int |v+z|^(2d/(d-2))``.

    For ``d = 5`` the coefficient is ``3/10`` and the power ``10/3``.
    """
    _same_grid(v, z)
    if d != v.grid.d:
        raise GridError(f"field has d = {v.grid.d}, modified energy requested for d = {d}")
    return _energy_values(v.grid, _phys(v), _phys(z), sign)


# --- energy-derivative identities ------------------------------------------------


def _grads(grid: GridSpec, a: np.ndarray) -> list[np.ndarray]:
    hat = fftn(a)
    return [ifftn(1j * kj * hat) for kj in grid.k_axes()]


def _safe_power(mod: np.ndarray, p: float) -> np.ndarray:
    """``mod^p`` with value 0 where ``mod == 0`` (also for negative ``p``)."""
    out = np.zeros_like(mod)
    nz = mod > 0
    out[nz] = mod[nz] ** p
    return out


def _re_i(grid: GridSpec, integrand: np.ndarray) -> float:
    """``Re( i int integrand )``."""
    return float(-np.sum(integrand.imag) * grid.cell_volume)


def energy_derivative_terms(v: Field, f: Field, d: Optional[int] = None,
                            sign: int = 1) -> tuple[float, ...]:
    """Individual real contributions whose sum is :func:`energy_derivative_rhs`.

    For ``d = 5`` the three terms
    ``(5/3) Re i int |w|^(4/3) grad v . grad conj(f)``,
    ``(2/3) Re i int w^2 |w|^(-2/3) grad conj(v) . grad conj(f)`` and
    ``(2/3) Re i int w^2 |w|^(-2/3) grad conj(f) . grad conj(f)``,
    with ``w = v + f``, give the time derivative of the modified energy.

    For other ``d`` the two terms
    ``Re i int (N(w) - N(v)) Laplacian conj(v)`` and
    ``-Re i int N(w) sign |v|^a conj(v)``, with ``N(w) = sign |w|^a w`` and
    ``a = 4/(d-2)``, give the time derivative of the energy of ``v``.
    """
    _same_grid(v, f)
    grid = v.grid
    d = grid.d if d is None else d
    if d != grid.d:
        raise GridError(f"fields have d = {grid.d}, identity requested for d = {d}")
    va, fa = _phys(v), _phys(f)
    w = va + fa
    mod = np.abs(w)
    if d == 5:
        gv, gf = _grads(grid, va), _grads(grid, fa)
        dot_v_fbar = sum(a * np.conj(b) for a, b in zip(gv, gf))
        dot_vbar_fbar = sum(np.conj(a) * np.conj(b) for a, b in zip(gv, gf))
        dot_fbar_fbar = sum(np.conj(b) ** 2 for b in gf)
        t1 = (5.0 / 3.0) * _re_i(grid, _safe_power(mod, 4.0 / 3.0) * dot_v_fbar)
        cross = w * w * _safe_power(mod, -2.0 / 3.0)
        t2 = (2.0 / 3.0) * _re_i(grid, cross * dot_vbar_fbar)
        t3 = (2.0 / 3.0) * _re_i(grid, cross * dot_fbar_fbar)
        return (sign * t1, sign * t2, sign * t3)
    a = 4.0 / (d - 2)
    nw = sign * mod**a * w
    nv = sign * np.abs(va) ** a * va
    lap_vbar = np.conj(ifftn(-grid.k2 * fftn(va)))
    t1 = _re_i(grid, (nw - nv) * lap_vbar)
    t2 = -_re_i(grid, nw * sign * np.abs(va) ** a * np.conj(va))
    return (t1, t2)


def energy_derivative_rhs(v: Field, f: Field, d: Optional[int] = None, sign: int = 1) -> float:
    """Time derivative of the (modified) energy of the forced residual.

    ``v`` solves ``i v_t + Laplacian v = N(v + f)`` with ``f`` a free
    solution.  Returns ``d/dt`` of the modified energy when ``d = 5`` and
    of ``E(v)`` otherwise, as a sum of :func:`energy_derivative_terms`.
    """
    return float(sum(energy_derivative_terms(v, f, d, sign)))


# --- bilinear probe ----------------------------------------------------------------


def bilinear_probe(phi1: Field, phi2: Field, N1: int, N2: int, T: float,
                   n_times: int = 101, normalize: bool = False) -> float:
    """``|| P_N1 S(t) phi1 * P_N2 S(t) phi2 ||_{L^2([0,T] x box)}``.

    The time integral uses the trapezoid rule on ``n_times`` equispaced
    points.  With ``normalize`` the result is divided by
    ``||P_N1 phi1|| ||P_N2 phi2||``.  The annulus of ``N2`` (radii up to
    ``2 N2``) must fit below the grid's Nyquist frequency.
    """
    _same_grid(phi1, phi2)
    grid = phi1.grid
    if N1 > N2:
        raise ValueError("need N1 <= N2")
    nyquist = grid.dk * grid.n / 2
    if 2 * N2 > nyquist * (1 + 1e-12):
        raise GridError(f"annulus of N2 = {N2} exceeds the Nyquist frequency {nyquist:.4g}")
    if n_times < 2:
        raise ValueError("n_times must be at least 2")
    h1 = lp_weight(grid.kabs, N1) * phi1.spectral_values()
    h2 = lp_weight(grid.kabs, N2) * phi2.spectral_values()
    times = np.linspace(0.0, T, n_times)
    vals = np.empty(n_times)
    for i, t in enumerate(times):
        prop = np.exp(-1j * t * grid.k2)
        prod = ifftn(prop * h1) * ifftn(prop * h2)
        vals[i] = np.sum(prod.real**2 + prod.imag**2) * grid.cell_volume
    out = math.sqrt(float(np.trapezoid(vals, times)))
    if normalize:
        n1 = math.sqrt(float(np.sum(np.abs(h1) ** 2) * grid.cell_volume))
        n2 = math.sqrt(float(np.sum(np.abs(h2) ** 2) * grid.cell_volume))
        if n1 == 0 or n2 == 0:
            return 0.0
        out /= n1 * n2
    return out


def log_log_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
