"""Fourier multipliers on periodic fields.

Littlewood-Paley pieces use the radial profile ``phi(r) = 1`` for ``r <= 1``,
``0`` for ``r >= 2`` with a quintic smoothstep in between, and

    phi_1 = phi,    phi_N(r) = phi(r/N) - phi(2r/N)  for N >= 2,

so that ``sum_{N <= M} phi_N(r) = phi(r/M)`` telescopes exactly.
"""
from __future__ import annotations

from typing import Callable, Union

import numpy as np

from .grid import PHYSICAL, Field, GridError, GridSpec, fftn, ifftn

__all__ = [
    "smoothstep",
    "smoothstep_d1",
    "smoothstep_d2",
    "lp_profile",
    "lp_weight",
    "apply_multiplier",
    "lp_project",
    "lp_project_low",
    "lp_project_high",
    "bessel",
    "bessel_symbol",
    "gradient",
    "laplacian",
    "divergence",
]

Multiplier = Union[np.ndarray, Callable[[GridSpec], np.ndarray]]


def smoothstep(t):
    """Quintic smoothstep ``6t^5 - 15t^4 + 10t^3`` clamped to [0, 1] (C^2)."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def smoothstep_d1(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    return np.where(inside, 30.0 * t * t * (t - 1.0) ** 2, 0.0)


def smoothstep_d2(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 1)
    return np.where(inside, 60.0 * t * (2.0 * t * t - 3.0 * t + 1.0), 0.0)


def lp_profile(r):
    """The bump ``phi``: 1 on [0, 1], 0 on [2, inf)."""
    return 1.0 - smoothstep(np.asarray(r, dtype=float) - 1.0)


def _check_dyadic(N) -> int:
    if int(N) != N or N < 1 or (int(N) & (int(N) - 1)):
        raise ValueError(f"dyadic level must be a power of two >= 1, got {N!r}")
    return int(N)


def lp_weight(r, N):
    """``phi_N(r)`` for a dyadic ``N``."""
    N = _check_dyadic(N)
    r = np.asarray(r, dtype=float)
    if N == 1:
        return lp_profile(r)
    return lp_profile(r / N) - lp_profile(2.0 * r / N)


def _symbol(grid: GridSpec, m: Multiplier) -> np.ndarray:
    sym = m(grid) if callable(m) else m
    sym = np.asarray(sym)
    if not np.isfinite(sym).all():
        raise GridError("multiplier has non-finite values on the lattice")
    return sym


def apply_multiplier(f: Field, m: Multiplier) -> Field:
    """Multiply the spectrum of ``f`` pointwise by ``m``.

    ``m`` is an array broadcastable to the lattice or a callable taking the
    grid.  The output has the same representation as the input.
    """
    sym = _symbol(f.grid, m)
    if f.space == PHYSICAL:
        return Field(f.grid, ifftn(sym * fftn(f.values)), PHYSICAL)
    return f.with_values(sym * f.values)


def lp_project(f: Field, N) -> Field:
    """Littlewood-Paley piece ``P_N f``."""
    return apply_multiplier(f, lp_weight(f.grid.kabs, N))


def lp_project_low(f: Field, N) -> Field:
    """``P_{<=N} f``, multiplier ``phi(|xi|/N)``."""
    N = _check_dyadic(N)
    return apply_multiplier(f, lp_profile(f.grid.kabs / N))


def lp_project_high(f: Field, N) -> Field:
    N = _check_dyadic(N)
    return apply_multiplier(f, 1.0 - lp_profile(f.grid.kabs / N))


def bessel_symbol(grid: GridSpec, s: float) -> np.ndarray:
    return (1.0 + grid.k2) ** (s / 2.0)


def bessel(f: Field, s: float) -> Field:
    """Bessel potential ``<grad>^s f``."""
    if s == 0:
        return f
    return apply_multiplier(f, bessel_symbol(f.grid, s))


def gradient(f: Field) -> list[Field]:
    """Components ``d_j f`` via the multipliers ``i xi_j``.

    The Nyquist mode keeps its negative-frequency value so that the
    divergence of the gradient is exactly the ``-|xi|^2`` Laplacian.
    """
    g = f.grid
    fhat = f.values if f.space != PHYSICAL else fftn(f.values)
    out = []
    for kj in g.k_axes():
        comp = 1j * kj * fhat
        out.append(Field(g, ifftn(comp), PHYSICAL) if f.space == PHYSICAL else f.with_values(comp))
    return out


def divergence(components: list[Field]) -> Field:
    g = components[0].grid
    space = components[0].space
    total = np.zeros(g.shape, np.complex128)
    for kj, c in zip(g.k_axes(), components):
        chat = c.values if space != PHYSICAL else fftn(c.values)
        total += 1j * kj * chat
    if space == PHYSICAL:
        return Field(g, ifftn(total), PHYSICAL)
    return Field(g, total, space)


def laplacian(f: Field) -> Field:
    return apply_multiplier(f, -f.grid.k2)
