import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rnls.grid import (
    PHYSICAL,
    SPECTRAL,
    Field,
    GridError,
    GridSpec,
    default_length,
    fftn,
    ifftn,
    inner,
    load_snapshot,
    make_grid,
    save_snapshot,
    to_physical,
    to_spectral,
)


def gaussian(grid, sigma=1.0):
    return Field.from_function(grid, lambda *x: np.exp(-sum(xi**2 for xi in x) / (2 * sigma**2)))


@pytest.mark.parametrize("n", [7, 6, 9, 0, 10.5])
def test_make_grid_rejects_bad_sizes(n):
    with pytest.raises(GridError):
        make_grid(3, n)


def test_make_grid_accepts_even_non_power_of_two():
    g = make_grid(5, 12)
    assert g.shape == (12,) * 5


@pytest.mark.parametrize("d", [0, 7])
def test_make_grid_rejects_dimension(d):
    with pytest.raises(GridError):
        make_grid(d, 8)


def test_sample_cap():
    with pytest.raises(GridError, match="exceeds cap"):
        make_grid(6, 32)
    with pytest.raises(GridError):
        make_grid(3, 16, cap=1000)


def test_default_length():
    assert default_length(3) == pytest.approx(8 * math.pi)
    assert default_length(5) == pytest.approx(4 * math.pi)
    assert make_grid(5, 8).L == pytest.approx(4 * math.pi)


def test_lattice_geometry():
    g = make_grid(2, 8, 2 * math.pi)
    assert g.dx == pytest.approx(math.pi / 4)
    assert g.dk == pytest.approx(1.0)
    # FFT ordering: 0, 1, 2, 3, -4, -3, -2, -1
    np.testing.assert_allclose(g.k1d, [0, 1, 2, 3, -4, -3, -2, -1])
    np.testing.assert_allclose(g.x1d[0], -math.pi)
    assert g.k2.shape == (8, 8)
    assert g.k2[1, 2] == pytest.approx(5.0)


def test_field_values_are_read_only():
    g = make_grid(1, 8)
    f = Field.zeros(g)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_field_does_not_alias_caller_array():
    g = make_grid(1, 8)
    a = np.zeros(8, complex)
    f = Field(g, a)
    a[0] = 5
    assert f.values[0] == 0


def test_field_arithmetic_checks_grids():
    f = Field.zeros(make_grid(1, 8))
    g = Field.zeros(make_grid(1, 16))
    with pytest.raises(GridError):
        f + g
    with pytest.raises(GridError):
        f + to_spectral(f)


def test_gaussian_l2_norm_matches_closed_form():
    # ||exp(-|x|^2 / (2 s^2))||^2 = (pi s^2)^(d/2) on R^d; the box is wide enough
    # and the trapezoid rule is spectrally accurate for periodic smooth data.
    g = make_grid(3, 32, 16.0)
    f = gaussian(g, 1.3)
    norm2 = inner(f, f).real
    assert norm2 == pytest.approx((math.pi * 1.3**2) ** 1.5, rel=1e-10)


@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_fft_round_trip_and_parseval(d, seed):
    g = make_grid(d, 8, 5.0)
    r = np.random.default_rng(seed)
    a = r.normal(size=g.shape) + 1j * r.normal(size=g.shape)
    f = Field(g, a)
    s = to_spectral(f)
    np.testing.assert_allclose(to_physical(s).values, a, atol=1e-12)
    assert inner(s, s).real == pytest.approx(inner(f, f).real, rel=1e-12)


def test_plane_wave_lands_on_single_mode():
    g = make_grid(2, 8, 2 * math.pi)
    f = Field.from_function(g, lambda x, y: np.exp(1j * (2 * x - 3 * y)))
    hat = np.abs(fftn(f.values))
    peak = np.unravel_index(np.argmax(hat), g.shape)
    assert (g.k1d[peak[0]], g.k1d[peak[1]]) == (2.0, -3.0)
    assert np.sum(hat > 1e-9) == 1


def test_transform_direction_is_checked():
    f = Field.zeros(make_grid(1, 8))
    with pytest.raises(GridError):
        to_physical(f)
    with pytest.raises(GridError):
        to_spectral(to_spectral(f))


@pytest.mark.parametrize("space", [PHYSICAL, SPECTRAL])
def test_snapshot_round_trip(tmp_path, space, rng):
    g = make_grid(3, 8, 7.5)
    vals = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    f = Field(g, vals, space)
    path = tmp_path / "f.rnls"
    save_snapshot(f, path)
    back = load_snapshot(path)
    assert back.grid == g and back.space == space
    np.testing.assert_array_equal(back.values, f.values)


def test_snapshot_header_layout(tmp_path):
    g = make_grid(1, 8, 2.0)
    save_snapshot(Field.zeros(g), tmp_path / "z.rnls")
    raw = (tmp_path / "z.rnls").read_bytes()
    assert raw[:4] == b"RNLS"
    # magic + <IBIdB header (4+1+4+8+1 bytes) + 8 complex128 samples
    assert len(raw) == 4 + 18 + 16 * 8


def test_snapshot_rejects_corruption(tmp_path):
    g = make_grid(1, 8)
    p = tmp_path / "bad.rnls"
    save_snapshot(Field.zeros(g), p)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(GridError, match="truncated"):
        load_snapshot(p)
    p.write_bytes(b"XXXX" + b"\0" * 40)
    with pytest.raises(GridError, match="not an RNLS"):
        load_snapshot(p)


def test_grid_spec_is_hashable_value():
    assert GridSpec(3, 8, 1.0) == GridSpec(3, 8, 1.0)
    assert len({GridSpec(3, 8, 1.0), GridSpec(3, 8, 1.0)}) == 1


def test_ifftn_inverts_fftn(rng):
    a = rng.normal(size=(8, 8)) + 0j
    np.testing.assert_allclose(ifftn(fftn(a)), a, atol=1e-13)
