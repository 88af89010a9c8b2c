"""Periodic grids, complex fields and their discrete Fourier transforms.

The box is ``[-L/2, L/2)^d`` sampled at ``n`` points per axis.  Physical
samples sit at ``x_j = -L/2 + j*dx``.  Spectral arrays use the standard FFT
ordering per axis (``0, 1, ..., n/2-1, -n/2, ..., -1``) and the unitary
("ortho") normalization, so that the discrete L^2 norm

    ||f||^2 = sum_x |f(x)|^2 dx^d = sum_k |f_hat(k)|^2 dx^d

is the same number in both representations.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.fft

__all__ = [
    "GridError",
    "GridSpec",
    "Field",
    "make_grid",
    "to_spectral",
    "to_physical",
    "inner",
    "default_length",
    "save_snapshot",
    "load_snapshot",
    "SAMPLE_CAP",
]

SAMPLE_CAP = 2**26

PHYSICAL = "physical"
SPECTRAL = "spectral"
Space = Literal["physical", "spectral"]

SNAPSHOT_MAGIC = b"RNLS"
SNAPSHOT_VERSION = 1
_TAG_CODES = {PHYSICAL: 0, SPECTRAL: 1}
_TAG_NAMES = {v: k for k, v in _TAG_CODES.items()}


class GridError(ValueError):
    """Invalid grid parameters or mismatched fields."""


def default_length(d: int) -> float:
    """Default box side: 8*pi for d <= 3, 4*pi above."""
    return 8 * np.pi if d <= 3 else 4 * np.pi


@dataclass(frozen=True)
class GridSpec:
    d: int
    n: int
    L: float

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def dk(self) -> float:
        """Spacing of the frequency lattice."""
        return 2 * np.pi / self.L

    @cached_property
    def k1d(self) -> np.ndarray:
        """Angular frequencies along one axis, FFT order."""
        return self.dk * np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def x1d(self) -> np.ndarray:
        return -self.L / 2 + self.dx * np.arange(self.n)

    def axis(self, values: np.ndarray, j: int) -> np.ndarray:
        """Reshape a 1-d array so it broadcasts along axis ``j``."""
        shape = [1] * self.d
        shape[j] = self.n
        return values.reshape(shape)

    def k_axes(self) -> list[np.ndarray]:
        return [self.axis(self.k1d, j) for j in range(self.d)]

    def x_axes(self) -> list[np.ndarray]:
        return [self.axis(self.x1d, j) for j in range(self.d)]

    @cached_property
    def k2(self) -> np.ndarray:
        """|xi|^2 on the full lattice."""
        out = np.zeros(self.shape)
        for kj in self.k_axes():
            out = out + kj**2
        out.flags.writeable = False
        return out

    @cached_property
    def kabs(self) -> np.ndarray:
        out = np.sqrt(self.k2)
        out.flags.writeable = False
        return out

    @cached_property
    def r(self) -> np.ndarray:
        """|x| on the physical grid."""
        out = np.zeros(self.shape)
        for xj in self.x_axes():
            out = out + xj**2
        out = np.sqrt(out)
        out.flags.writeable = False
        return out

    def lattice(self) -> np.ndarray:
        """Integer mode numbers along one axis in ascending order."""
        return np.arange(-self.n // 2, self.n // 2)


def make_grid(d: int, n: int, L: float | None = None, *, cap: int = SAMPLE_CAP) -> GridSpec:
    """Validate and build a grid.

    ``n`` must be even and at least 8; powers of two are the normal case.
    ``L`` defaults to :func:`default_length`.
    """
    if int(d) != d or not 1 <= d <= 6:
        raise GridError(f"dimension must be an integer in 1..6, got {d!r}")
    if int(n) != n or n < 8 or n % 2:
        raise GridError(f"points per axis must be an even integer >= 8, got {n!r}")
    d, n = int(d), int(n)
    if L is None:
        L = default_length(d)
    if not np.isfinite(L) or L <= 0:
        raise GridError(f"box length must be positive, got {L!r}")
    if n**d > cap:
        raise GridError(f"sample count {n}^{d} = {n**d} exceeds cap {cap}")
    return GridSpec(d, n, float(L))


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples on a grid, tagged with their representation.

    ``values`` is made read-only on construction; build new fields instead
    of mutating.
    """

    grid: GridSpec
    values: np.ndarray
    space: Space = PHYSICAL

    def __post_init__(self):
        if self.space not in (PHYSICAL, SPECTRAL):
            raise GridError(f"unknown representation {self.space!r}")
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape != self.grid.shape:
            if vals.size != self.grid.size:
                raise GridError(f"expected {self.grid.size} samples, got {vals.size}")
            vals = vals.reshape(self.grid.shape)
        if vals is self.values and vals.flags.writeable:
            vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def physical(cls, grid: GridSpec, values) -> Field:
        return cls(grid, values, PHYSICAL)

    @classmethod
    def spectral(cls, grid: GridSpec, values) -> Field:
        return cls(grid, values, SPECTRAL)

    @classmethod
    def zeros(cls, grid: GridSpec, space: Space = PHYSICAL) -> Field:
        return cls(grid, np.zeros(grid.shape, np.complex128), space)

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> Field:
        """Sample ``func(*coords)`` on the physical grid (coords broadcast)."""
        vals = np.broadcast_to(func(*grid.x_axes()), grid.shape)
        return cls(grid, np.array(vals, dtype=np.complex128), PHYSICAL)

    def with_values(self, values, space: Space | None = None) -> Field:
        return Field(self.grid, values, self.space if space is None else space)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())

    def physical_values(self) -> np.ndarray:
        return self.values if self.space == PHYSICAL else to_physical(self).values

    def spectral_values(self) -> np.ndarray:
        return self.values if self.space == SPECTRAL else to_spectral(self).values

    def _check_compatible(self, other: Field):
        if self.grid != other.grid:
            raise GridError("fields live on different grids")
        if self.space != other.space:
            raise GridError("fields are in different representations")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check_compatible(other)
            return self.with_values(self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check_compatible(other)
            return self.with_values(self.values - other.values)
        return NotImplemented

    def __mul__(self, c):
        if np.isscalar(c):
            return self.with_values(self.values * c)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def fftn(a: np.ndarray) -> np.ndarray:
    return scipy.fft.fftn(a, norm="ortho")


def ifftn(a: np.ndarray) -> np.ndarray:
    return scipy.fft.ifftn(a, norm="ortho")


def to_spectral(f: Field) -> Field:
    if f.space != PHYSICAL:
        raise GridError("to_spectral expects a physical-space field")
    return Field(f.grid, fftn(f.values), SPECTRAL)


def to_physical(f: Field) -> Field:
    if f.space != SPECTRAL:
        raise GridError("to_physical expects a spectral-space field")
    return Field(f.grid, ifftn(f.values), PHYSICAL)


def inner(f: Field, g: Field) -> complex:
    """Discrete ``int f conj(g) dx`` with weight dx^d (either representation)."""
    f._check_compatible(g)
    return complex(np.vdot(g.values, f.values) * f.grid.cell_volume)


def save_snapshot(f: Field, path) -> None:
    """Write ``f`` in the little-endian RNLS snapshot format."""
    g = f.grid
    header = SNAPSHOT_MAGIC + struct.pack(
        "<IBIdB", SNAPSHOT_VERSION, g.d, g.n, g.L, _TAG_CODES[f.space]
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<c16").tobytes())


def load_snapshot(path) -> Field:
    data = Path(path).read_bytes()
    head = struct.calcsize("<IBIdB")
    if data[:4] != SNAPSHOT_MAGIC:
        raise GridError(f"{path}: not an RNLS snapshot")
    version, d, n, L, tag = struct.unpack("<IBIdB", data[4 : 4 + head])
    if version != SNAPSHOT_VERSION:
        raise GridError(f"{path}: unsupported snapshot version {version}")
    if tag not in _TAG_NAMES:
        raise GridError(f"{path}: unknown representation tag {tag}")
    grid = make_grid(d, n, L)
    payload = data[4 + head :]
    if len(payload) != 16 * grid.size:
        raise GridError(f"{path}: truncated payload")
    vals = np.frombuffer(payload, dtype="<c16").astype(np.complex128).reshape(grid.shape)
    return Field(grid, vals, _TAG_NAMES[tag])
