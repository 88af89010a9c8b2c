import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rnls.evolution import EvolutionConfig, Forcing, NonlinearitySpec, evolve
from rnls.grid import Field, GridError, make_grid
from rnls.norms import (
    INF,
    AdmissiblePair,
    PaperExponents,
    bilinear_probe,
    conjugate,
    energy,
    energy_coefficient,
    energy_derivative_rhs,
    energy_derivative_terms,
    kappa,
    lebesgue_norm,
    log_log_slope,
    mass,
    modified_energy,
    scaling_exponent,
    sobolev_norm,
    spacetime_norm,
    time_lebesgue,
    w1r_norm,
    wsr_norm,
)


def gaussian(grid, sigma=1.0, amplitude=1.0):
    return Field.from_function(grid, lambda *x: amplitude * np.exp(-sum(xi**2 for xi in x) / (2 * sigma**2)))


# --- exponents ---------------------------------------------------------------------


@pytest.mark.parametrize("d, q, r, rho", [(5, Fraction(10, 3), Fraction(50, 19), Fraction(50, 9)),
                                          (6, Fraction(3), Fraction(18, 7), Fraction(9, 2))])
def test_named_exponents(d, q, r, rho):
    e = PaperExponents(d)
    assert (e.q, e.r, e.rho) == (q, r, rho)
    assert 2 / e.q + d / e.r == Fraction(d, 2)
    assert e.p * conjugate(e.q) == e.q
    e.pair()


@given(st.integers(3, 12))
def test_exponent_identities_hold_for_every_dimension(d):
    e = PaperExponents(d)
    assert 2 / e.q + d / e.r == Fraction(d, 2)
    assert e.p * conjugate(e.q) == e.q
    assert e.p_prime == conjugate(e.p) == Fraction(d + 2, 4)
    assert e.energy_coefficient == Fraction(d - 2, 2 * d)
    assert energy_coefficient(d) == pytest.approx(float(e.energy_coefficient))


@given(st.integers(3, 8), st.fractions(Fraction(1, 10), Fraction(3, 1)))
def test_scaling_exponent_formula(d, k):
    if k >= Fraction(d, 2) - 1:
        with pytest.raises(ValueError):
            scaling_exponent(d, k)
    else:
        assert scaling_exponent(d, k) == Fraction(4) / (-d + 2 * k + 2)
        assert kappa(d, k) > 0


def test_blowup_exponent_for_d5_k1():
    assert kappa(5, 1) == Fraction(1, 4)
    assert scaling_exponent(5, 1) == -4


def test_conjugate():
    assert conjugate(2) == 2
    assert conjugate(INF) == 1 and conjugate(1) == INF
    assert conjugate(Fraction(10, 3)) == Fraction(10, 7)


def test_admissible_pairs():
    AdmissiblePair(2, 6, 3)
    AdmissiblePair(INF, 2, 4)
    assert AdmissiblePair.from_q(4, 3).r == 3
    assert AdmissiblePair.from_q(2, 3).r == 6
    with pytest.raises(ValueError):
        AdmissiblePair(4, 4, 3)
    with pytest.raises(ValueError):
        AdmissiblePair(2, INF, 2)
    with pytest.raises(ValueError):
        AdmissiblePair(Fraction(3, 2), 10, 3)


# --- spatial norms -------------------------------------------------------------------


def test_lebesgue_norm_of_constant():
    g = make_grid(2, 8, 3.0)
    f = Field(g, np.full(g.shape, 2.0 + 0j))
    for r in (1, 2, 3.5, 10):
        assert lebesgue_norm(f, r) == pytest.approx(2.0 * 9.0 ** (1 / r))
    assert lebesgue_norm(f, INF) == 2.0


@pytest.mark.parametrize("d, r", [(1, 2), (2, 4), (3, 3), (3, 8)])
def test_lebesgue_norm_of_gaussian(d, r):
    # int exp(-r |x|^2 / 2) dx = (2 pi / r)^(d/2)
    g = make_grid(d, 64 if d < 3 else 48, 12.0)
    assert lebesgue_norm(gaussian(g), r) == pytest.approx((2 * math.pi / r) ** (d / (2 * r)), rel=1e-9)


def test_lebesgue_norm_huge_exponent_does_not_overflow():
    g = make_grid(1, 8, 1.0)
    f = Field(g, np.full(8, 1e10 + 0j))
    assert lebesgue_norm(f, 200) == pytest.approx(1e10)


def test_lebesgue_norm_rejects_small_exponent():
    with pytest.raises(ValueError):
        lebesgue_norm(gaussian(make_grid(1, 8)), 0.5)


def test_sobolev_norm_of_gaussian_d1():
    # ||f||^2 + ||f'||^2 = sqrt(pi) + sqrt(pi)/2 for exp(-x^2/2)
    g = make_grid(1, 128, 30.0)
    assert sobolev_norm(gaussian(g), 1.0) ** 2 == pytest.approx(1.5 * math.sqrt(math.pi), rel=1e-10)
    assert sobolev_norm(gaussian(g), 0.0) ** 2 == pytest.approx(mass(gaussian(g)), rel=1e-12)


def test_w1r_norm_of_gaussian_d1():
    # ||x exp(-x^2/2)||_2^2 = sqrt(pi)/2
    g = make_grid(1, 128, 30.0)
    expected = math.pi**0.25 + (math.sqrt(math.pi) / 2) ** 0.5
    assert w1r_norm(gaussian(g), 2) == pytest.approx(expected, rel=1e-9)


def test_wsr_norm_reduces_to_sobolev_for_r2(rng):
    g = make_grid(2, 16, 6.0)
    f = Field(g, rng.normal(size=g.shape) + 0j)
    assert wsr_norm(f, 0.6, 2) == pytest.approx(sobolev_norm(f, 0.6), rel=1e-12)
    assert wsr_norm(f, 0, 3) == pytest.approx(lebesgue_norm(f, 3))


@given(st.integers(0, 10_000), st.floats(1.0, 8.0))
def test_hoelder_between_l2_and_linf(seed, r):
    g = make_grid(2, 8, 3.0)
    a = np.random.default_rng(seed).normal(size=g.shape)
    f = Field(g, a + 0j)
    vol = g.L**g.d
    assert lebesgue_norm(f, r) <= lebesgue_norm(f, INF) * vol ** (1 / r) * (1 + 1e-12)
    if r >= 2:
        assert lebesgue_norm(f, 2) <= lebesgue_norm(f, r) * vol ** (0.5 - 1 / r) * (1 + 1e-12)


# --- time and space-time ----------------------------------------------------------------


def test_time_lebesgue_exact_for_linear_integrand():
    t = np.linspace(0, 2, 5)
    assert time_lebesgue(t, np.full(5, 3.0), 4) == pytest.approx(3 * 2**0.25)
    assert time_lebesgue(t, t, 1) == pytest.approx(2.0)
    assert time_lebesgue(t, [1, 5, 2, 0, 0], INF) == 5
    with pytest.raises(ValueError):
        time_lebesgue([0, 0], [1, 1], 2)


def test_spacetime_norm_of_free_flow_l2():
    g = make_grid(2, 16, 10.0)
    f = gaussian(g)
    traj = evolve(f, None, EvolutionConfig(0.05, 1.0))
    # ||S(t) f||_2 is constant, so ||.||_{L^q_T L^2} = ||f||_2 T^(1/q)
    assert spacetime_norm(traj, 4, 2) == pytest.approx(lebesgue_norm(f, 2), rel=1e-12)
    assert spacetime_norm((traj.snapshot_times, traj.snapshots), INF, 2, s=0) == pytest.approx(lebesgue_norm(f, 2))


# --- energies ---------------------------------------------------------------------------


def test_energy_of_gaussian_d3():
    # 1/2 ||grad f||^2 = (3/4) pi^(3/2); (1/6) int exp(-3 |x|^2) = (1/6) (pi/3)^(3/2)
    g = make_grid(3, 48, 12.0)
    f = gaussian(g)
    expected = 0.75 * math.pi**1.5 + (math.pi / 3) ** 1.5 / 6
    assert energy(f) == pytest.approx(expected, rel=1e-9)
    assert energy(f, sign=-1) == pytest.approx(0.75 * math.pi**1.5 - (math.pi / 3) ** 1.5 / 6, rel=1e-9)


def test_energy_dimension_checks():
    with pytest.raises(GridError):
        energy(gaussian(make_grid(2, 8)))
    with pytest.raises(GridError):
        energy(gaussian(make_grid(3, 8)), d=5)


def test_modified_energy_reduces_to_energy_without_forcing():
    g = make_grid(5, 8, 8.0)
    f = gaussian(g)
    assert modified_energy(f, Field.zeros(g)) == pytest.approx(energy(f))


@pytest.mark.parametrize("d", [5, 6])
def test_energy_derivative_vanishes_without_forcing(d, rng):
    g = make_grid(d, 8, 6.0)
    v = Field(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    terms = energy_derivative_terms(v, Field.zeros(g))
    assert len(terms) == (3 if d == 5 else 2)
    assert max(abs(t) for t in terms) < 1e-9 * max(1.0, energy(v))


def test_energy_derivative_identity_short_forced_run():
    # d = 6, defocusing: dE(v)/dt from the run vs the quadrature at each step
    g = make_grid(6, 8, 8.0)
    phi = gaussian(g, 1.2, 0.4)
    forcing = Forcing(phi, 1.0)
    rhs = []
    traj = evolve(Field.zeros(g), NonlinearitySpec.gauge(6, 1), EvolutionConfig(0.01, 0.1), forcing,
                  observers=[lambda t, v, z: rhs.append(energy_derivative_rhs(Field(g, v), Field(g, z)))],
                  store_snapshots=False)
    E, t = traj.series["energy"], traj.times
    fd = (E[2:] - E[:-2]) / (t[2:] - t[:-2])
    scale = np.abs(rhs).max()
    assert np.abs(fd - np.asarray(rhs)[1:-1]).max() / scale < 0.01


# --- bilinear probe ----------------------------------------------------------------------


def test_bilinear_probe_nyquist_guard():
    g = make_grid(3, 16, 2 * math.pi)
    f = Field(g, np.ones(g.shape, complex), "spectral")
    with pytest.raises(GridError):
        bilinear_probe(f, f, 1, 8, 0.1)
    with pytest.raises(ValueError):
        bilinear_probe(f, f, 4, 2, 0.1)


def test_bilinear_probe_at_t0_is_product_norm():
    g = make_grid(2, 32, 2 * math.pi)
    f = gaussian(g, 0.5)
    val = bilinear_probe(f, f, 1, 2, 1e-9, n_times=2)
    from rnls.projections import lp_project

    prod = lp_project(f, 1).values * lp_project(f, 2).values
    expected = math.sqrt(float(np.sum(np.abs(prod) ** 2) * g.cell_volume) * 1e-9)
    assert val == pytest.approx(expected, rel=1e-6)


def test_log_log_slope():
    x = np.array([4, 8, 16])
    assert log_log_slope(x, 3 * x**-0.5) == pytest.approx(-0.5)
