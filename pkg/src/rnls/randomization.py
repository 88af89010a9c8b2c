"""Wiener randomization of initial data.

Frequency space is cut into unit cubes ``n + (-1/2, 1/2]^d``.  A window
``psi`` with ``sum_n psi(xi - n) = 1`` splits a field into pieces
``psi(D - n) phi``, and the randomized field multiplies piece ``n`` by an
independent mean-zero coefficient ``g_n``.

Coefficients are drawn from a counter-based hash keyed on
``(master_seed, sample, n)``, so a given cube always receives the same
``g_n`` regardless of grid size, evaluation order or worker count.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import ndtri

from .grid import PHYSICAL, SPECTRAL, Field, GridSpec, fftn, ifftn

__all__ = [
    "RandomizationConfig",
    "RandomSample",
    "ResolutionError",
    "window_1d",
    "window",
    "partition_sum",
    "cube_coefficients",
    "wiener_piece",
    "contributing_cubes",
    "randomize",
    "randomize_spectrum",
    "random_sample",
    "make_rough_data",
    "mode_phases",
]

Window = Literal["cube", "tent", "smooth"]
Distribution = Literal["gaussian", "rademacher-complex"]

WINDOWS = ("cube", "tent", "smooth")
DISTRIBUTIONS = ("gaussian", "rademacher-complex")

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


class ResolutionError(ValueError):
    """The frequency lattice is too coarse to resolve unit cubes."""


@dataclass(frozen=True)
class RandomizationConfig:
    window: Window = "cube"
    distribution: Distribution = "gaussian"
    master_seed: int = 0

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(
                f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}"
            )
        if int(self.master_seed) != self.master_seed or not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an integer in [0, 2^64)")


@dataclass(frozen=True)
class RandomSample:
    sample: int
    cubes: np.ndarray
    coefficients: np.ndarray
    field: Field


# --- counter-based coefficients -------------------------------------------


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return x ^ (x >> np.uint64(31))


def _sample_key(master_seed: int, sample: int) -> np.ndarray:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(sample),))
    return seq.generate_state(2, dtype=np.uint64)


def _encode(index: np.ndarray) -> np.ndarray:
    """Pack integer vectors (rows) into uint64 codes, one bit-field per axis."""
    index = np.atleast_2d(np.asarray(index, dtype=np.int64))
    d = index.shape[1]
    if d == 1:
        return np.ascontiguousarray(index[:, 0]).view(np.uint64)
    bits = 64 // d
    half = 1 << (bits - 1)
    if index.size and (index.min() < -half or index.max() >= half):
        raise ValueError(f"cube index out of encodable range for d={d}")
    code = np.zeros(index.shape[0], dtype=np.uint64)
    for j in range(d):
        code = (code << np.uint64(bits)) | (index[:, j] + half).astype(np.uint64)
    return code


def _uniforms(key: np.ndarray, codes: np.ndarray, stream: int) -> np.ndarray:
    """Uniforms in (0, 1) from ``(key, code, stream)``; 53 bits each."""
    with np.errstate(over="ignore"):
        h = _splitmix64(codes ^ key[0])
        h = _splitmix64(h + key[1] + np.uint64(stream) * _GOLDEN)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) / 2.0**53


def cube_coefficients(cfg: RandomizationConfig, sample: int, cubes: np.ndarray) -> np.ndarray:
    """Coefficients ``g_n`` for the given cube indices (rows of ``cubes``).

    Gaussian: ``(a + ib)/sqrt(2)`` with independent standard normals.
    Rademacher-complex: ``(+-1 +- i)/sqrt(2)``.  Both have mean zero, unit
    second moment and independent real/imaginary parts.
    """
    if sample < 0:
        raise ValueError("sample index must be non-negative")
    key = _sample_key(cfg.master_seed, sample)
    codes = _encode(cubes)
    u_re = _uniforms(key, codes, 0)
    u_im = _uniforms(key, codes, 1)
    if cfg.distribution == "gaussian":
        re, im = ndtri(u_re), ndtri(u_im)
    else:
        re = np.where(u_re < 0.5, -1.0, 1.0)
        im = np.where(u_im < 0.5, -1.0, 1.0)
    return (re + 1j * im) / np.sqrt(2.0)


def mode_phases(seed: int, modes: np.ndarray) -> np.ndarray:
    """Grid-independent random phases keyed on integer lattice modes."""
    key = _sample_key(seed, 0)
    return np.exp(2j * np.pi * _uniforms(key, _encode(modes), 2))


# --- windows ----------------------------------------------------------------


def window_1d(x, kind: Window = "cube") -> np.ndarray:
    """One-dimensional factor of the window; the d-dim window is the product."""
    x = np.asarray(x, dtype=float)
    if kind == "cube":
        return ((x > -0.5) & (x <= 0.5)).astype(float)
    if kind == "tent":
        return np.maximum(0.0, 1.0 - np.abs(x))
    if kind == "smooth":
        from .projections import smoothstep

        return np.where(np.abs(x) < 1.0, 1.0 - smoothstep(np.abs(x)), 0.0)
    raise ValueError(f"unknown window {kind!r}")


def window(grid: GridSpec, n, kind: Window = "cube") -> np.ndarray:
    """``psi(xi - n)`` on the lattice of ``grid``."""
    n = np.asarray(n, dtype=float).reshape(-1)
    if n.size != grid.d:
        raise ValueError(f"cube index must have {grid.d} components")
    out = np.ones((1,) * grid.d)
    for j, kj in enumerate(grid.k_axes()):
        out = out * window_1d(kj - n[j], kind)
    return np.broadcast_to(out, grid.shape)


def _axis_cubes(k1d: np.ndarray, kind: Window):
    """Per-axis candidate cube indices and weights for each lattice value."""
    xi = np.round(k1d, 10)
    if kind == "cube":
        return [(np.ceil(xi - 0.5).astype(np.int64), np.ones_like(xi))]
    lo = np.floor(xi).astype(np.int64)
    return [(lo, window_1d(xi - lo, kind)), (lo + 1, window_1d(xi - lo - 1, kind))]


def partition_sum(grid: GridSpec, kind: Window = "cube") -> np.ndarray:
    """``sum_n psi(xi - n)`` at every lattice frequency (should be 1).

    Brute force over the ``3^d`` cubes nearest each frequency, which covers
    every cube whose window can be nonzero there.
    """
    nearest = [grid.axis(np.rint(k), j) for j, k in enumerate([grid.k1d] * grid.d)]
    total = np.zeros(grid.shape)
    for offset in itertools.product((-1, 0, 1), repeat=grid.d):
        term = np.ones((1,) * grid.d)
        for j, kj in enumerate(grid.k_axes()):
            term = term * window_1d(kj - (nearest[j] + offset[j]), kind)
        total += term
    return total


def contributing_cubes(grid: GridSpec, kind: Window = "cube") -> np.ndarray:
    """All cube indices whose window meets the lattice, one per row."""
    per_axis = sorted({int(v) for idx, w in _axis_cubes(grid.k1d, kind) for v in idx[w > 0]})
    axis = np.array(per_axis, dtype=np.int64)
    mesh = np.meshgrid(*([axis] * grid.d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _check_resolution(grid: GridSpec):
    if grid.L < 4 * np.pi * (1 - 1e-12):
        raise ResolutionError(
            f"box length {grid.L:.4g} < 4*pi: fewer than two lattice modes per unit frequency cube"
        )


def wiener_piece(phi: Field, n, kind: Window = "cube") -> Field:
    """``psi(D - n) phi`` in the representation of ``phi``."""
    _check_resolution(phi.grid)
    w = window(phi.grid, n, kind)
    if phi.space == PHYSICAL:
        return Field(phi.grid, ifftn(w * fftn(phi.values)), PHYSICAL)
    return phi.with_values(w * phi.values)


def _multiplier(grid: GridSpec, cfg: RandomizationConfig, sample: int, force_unit: bool):
    """``sum_n g_n psi(xi - n)`` on the lattice, plus the cubes and g_n used."""
    per_axis = _axis_cubes(grid.k1d, cfg.window)
    cubes = contributing_cubes(grid, cfg.window)
    if force_unit:
        coeffs = np.ones(len(cubes), dtype=np.complex128)
    else:
        coeffs = cube_coefficients(cfg, sample, cubes)
    lo = int(cubes.min())
    width = int(cubes.max()) - lo + 1
    table = np.zeros((width,) * grid.d, dtype=np.complex128)
    table[tuple((cubes - lo).T)] = coeffs
    mult = np.zeros(grid.shape, dtype=np.complex128)
    for combo in itertools.product(per_axis, repeat=grid.d):
        index = []
        weight = np.ones((1,) * grid.d)
        for j, (idx, w) in enumerate(combo):
            index.append(grid.axis(idx - lo, j))
            weight = weight * grid.axis(w, j)
        ix = np.broadcast_arrays(*index)
        mult += weight * table[tuple(np.clip(a, 0, width - 1) for a in ix)]
    return mult, cubes, coeffs


def randomize_spectrum(phi_hat: np.ndarray, grid: GridSpec, cfg: RandomizationConfig, sample: int,
                       force_unit: bool = False) -> np.ndarray:
    """Spectral coefficients of the randomized field (no transforms)."""
    _check_resolution(grid)
    mult, _, _ = _multiplier(grid, cfg, sample, force_unit)
    return mult * phi_hat


def random_sample(phi: Field, cfg: RandomizationConfig, sample: int,
                  force_unit: bool = False) -> RandomSample:
    _check_resolution(phi.grid)
    mult, cubes, coeffs = _multiplier(phi.grid, cfg, sample, force_unit)
    hat = mult * phi.spectral_values()
    out = Field(phi.grid, ifftn(hat), PHYSICAL) if phi.space == PHYSICAL else phi.with_values(hat)
    return RandomSample(sample, cubes, coeffs, out)


def randomize(phi: Field, cfg: RandomizationConfig, sample: int, force_unit: bool = False) -> Field:
    """The Wiener randomization ``sum_n g_n psi(D - n) phi`` for one sample.

    ``force_unit`` sets every ``g_n = 1`` (returns ``phi`` up to rounding).
    """
    return random_sample(phi, cfg, sample, force_unit).field


def make_rough_data(grid: GridSpec, s_target: float, seed: int = 0, eps: float = 0.02,
                    amplitude: float = 1.0, space: str = PHYSICAL) -> Field:
    """Random-phase data with spectrum ``<xi>^(-s_target - d/2 - eps)``.

    The continuum Fourier transform is fixed independently of ``n`` (phases
    are keyed on the integer mode), so refining the grid at fixed ``L`` only
    appends high-frequency modes.  The data sit in ``H^sigma`` exactly for
    ``sigma < s_target + eps``.
    """
    if not 0 < s_target < 1:
        raise ValueError("s_target must lie in (0, 1)")
    d, n = grid.d, grid.n
    a = s_target + d / 2 + eps
    mag = (1.0 + grid.k2) ** (-a / 2)
    modes1 = np.rint(grid.k1d / grid.dk).astype(np.int64)
    mesh = np.meshgrid(*([modes1] * d), indexing="ij")
    modes = np.stack([m.reshape(-1) for m in mesh], axis=1)
    phases = mode_phases(seed, modes).reshape(grid.shape)
    hat = amplitude * n ** (d / 2) * grid.L ** (-d) * mag * phases
    if space == SPECTRAL:
        return Field(grid, hat, SPECTRAL)
    return Field(grid, ifftn(hat), PHYSICAL)
