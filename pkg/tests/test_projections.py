import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rnls.grid import Field, make_grid, to_spectral
from rnls.projections import (
    apply_multiplier,
    bessel,
    divergence,
    gradient,
    laplacian,
    lp_profile,
    lp_project,
    lp_project_high,
    lp_project_low,
    lp_weight,
    smoothstep,
    smoothstep_d1,
    smoothstep_d2,
)
from rnls.norms import sobolev_norm


def test_smoothstep_values():
    # 6t^5 - 15t^4 + 10t^3 at t = 1/4: 6/1024 - 15/256 + 10/64 = 106/1024
    assert smoothstep(0.25) == pytest.approx(106 / 1024)
    assert smoothstep(0.5) == 0.5
    assert smoothstep(-1.0) == 0.0 and smoothstep(2.0) == 1.0


def test_smoothstep_derivatives_match_finite_differences():
    t = np.linspace(0.05, 0.95, 19)
    h = 1e-5
    np.testing.assert_allclose(smoothstep_d1(t), (smoothstep(t + h) - smoothstep(t - h)) / (2 * h), atol=1e-8)
    np.testing.assert_allclose(smoothstep_d2(t), (smoothstep_d1(t + h) - smoothstep_d1(t - h)) / (2 * h), atol=1e-6)


def test_lp_profile_support():
    assert lp_profile(0.0) == 1.0 and lp_profile(1.0) == 1.0
    assert lp_profile(2.0) == 0.0 and lp_profile(3.0) == 0.0
    assert lp_profile(1.5) == 0.5


@given(st.floats(0, 200), st.integers(1, 7))
def test_littlewood_paley_sum_telescopes(r, levels):
    M = 2**levels
    total = sum(lp_weight(r, 2**j) for j in range(levels + 1))
    assert total == pytest.approx(float(lp_profile(r / M)), abs=1e-12)


@pytest.mark.parametrize("N", [0, 3, 6, 1.5])
def test_lp_weight_rejects_non_dyadic(N):
    with pytest.raises(ValueError):
        lp_weight(1.0, N)


def test_low_plus_high_is_identity(rng):
    g = make_grid(2, 16, 10.0)
    f = Field(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    out = lp_project_low(f, 2) + lp_project_high(f, 2)
    np.testing.assert_allclose(out.values, f.values, atol=1e-12)


def test_lp_project_is_supported_on_annulus(rng):
    g = make_grid(2, 32, 2 * math.pi)
    f = Field(g, rng.normal(size=g.shape) + 0j)
    hat = to_spectral(lp_project(f, 4)).values
    outside = (g.kabs <= 2) | (g.kabs >= 8)
    assert np.abs(hat[outside]).max() < 1e-12
    assert np.abs(hat[~outside]).max() > 0


def test_projection_preserves_representation(rng):
    g = make_grid(1, 16)
    f = to_spectral(Field(g, rng.normal(size=16) + 0j))
    assert lp_project(f, 2).space == f.space


def test_bessel_of_plane_wave():
    g = make_grid(1, 16, 2 * math.pi)
    f = Field.from_function(g, lambda x: np.exp(3j * x))
    out = bessel(f, 1.5)
    np.testing.assert_allclose(out.values, 10**0.75 * f.values, atol=1e-12)


def test_laplacian_of_plane_wave():
    g = make_grid(3, 8, 2 * math.pi)
    f = Field.from_function(g, lambda x, y, z: np.exp(1j * (x + 2 * y - 3 * z)))
    np.testing.assert_allclose(laplacian(f).values, -14 * f.values, atol=1e-11)


def test_divergence_of_gradient_is_laplacian(rng):
    g = make_grid(2, 16, 9.0)
    f = Field(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    np.testing.assert_allclose(divergence(gradient(f)).values, laplacian(f).values, atol=1e-10)


def test_gradient_of_gaussian_matches_closed_form():
    g = make_grid(1, 64, 20.0)
    f = Field.from_function(g, lambda x: np.exp(-x**2 / 2))
    (df,) = gradient(f)
    np.testing.assert_allclose(df.values, -g.x1d * np.exp(-g.x1d**2 / 2), atol=1e-10)


def test_multiplier_callable_and_validation(rng):
    g = make_grid(1, 16)
    f = Field(g, rng.normal(size=16) + 0j)
    np.testing.assert_allclose(apply_multiplier(f, lambda grid: np.ones(grid.shape)).values, f.values, atol=1e-12)
    with pytest.raises(ValueError):
        apply_multiplier(f, np.full(16, np.inf))


def test_sobolev_norm_matches_bessel_l2(rng):
    g = make_grid(2, 16, 7.0)
    f = Field(g, rng.normal(size=g.shape) + 0j)
    b = bessel(f, 0.7)
    l2 = math.sqrt(float(np.sum(np.abs(b.values) ** 2) * g.cell_volume))
    assert sobolev_norm(f, 0.7) == pytest.approx(l2, rel=1e-12)
