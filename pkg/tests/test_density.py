import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate, stats

from burstpdmp.density import (
    NORMS,
    DensityGrid,
    analytic_stationary,
    density_distance,
    discrete_steady_state,
    histogram,
    solve_density_pde,
    stationary_residual,
    uniform_edges,
)
from burstpdmp.density import _Operator
from burstpdmp.errors import DomainError, NumericalError, UnsupportedError
from burstpdmp.model import ConstantRate, ExponentialJumps, HillRate, TabulatedJumps, FIG1_HILL
from burstpdmp.reduced import ReducedJumpModel

FIG1_RED = ReducedJumpModel(1.0, HillRate(**FIG1_HILL), ExponentialJumps(1.0))


def test_histogram_normalised_and_tail():
    s = np.array([0.1, 0.3, 0.5, 5.0])
    h = histogram(s, n_bins=3, y_max=0.6)
    assert h.mass == pytest.approx(1.0)
    assert h.tail_mass == pytest.approx(0.25)
    assert list(h.values) == pytest.approx([1 / 0.6] * 3)


def test_histogram_errors():
    with pytest.raises(DomainError):
        histogram([], 10)
    with pytest.raises(DomainError):
        histogram([5.0, 6.0], 10, y_max=1.0)


def test_fig1_law_exponents():
    law = analytic_stationary(FIG1_RED)
    assert law.a == pytest.approx(0.25)
    assert law.c == pytest.approx(0.9375)


def test_law_normalised_and_moments_by_quadrature():
    law = analytic_stationary(FIG1_RED)
    mass = integrate.quad(law.pdf, 0, np.inf, limit=200)[0]
    m1 = integrate.quad(lambda y: y * law.pdf(y), 0, np.inf, limit=200)[0]
    assert mass == pytest.approx(1.0, rel=1e-8)
    assert law.mean == pytest.approx(m1, rel=1e-8)
    q = law.upper_quantile(1e-6)
    assert law.sf(q) == pytest.approx(1e-6, rel=1e-6)


def test_law_solves_stationary_equation():
    law = analytic_stationary(FIG1_RED)
    y = np.linspace(0.2, 20, 25)
    assert np.abs(stationary_residual(law, FIG1_RED, y)).max() < 1e-7 * law.pdf(y).max()


def test_residual_detects_wrong_law():
    law = analytic_stationary(FIG1_RED)
    law.c *= 1.05
    y = np.linspace(0.5, 10, 10)
    assert np.abs(stationary_residual(law, FIG1_RED, y)).max() > 1e-3


@pytest.mark.parametrize("phi,g2,beta", [(2.0, 1.0, 1.0), (0.5, 1.0, 2.0), (3.0, 0.25, 0.3)])
def test_constant_rate_law_is_gamma(phi, g2, beta):
    law = analytic_stationary(ReducedJumpModel(g2, ConstantRate(phi), ExponentialJumps(beta)))
    y = np.linspace(0.01, 40, 400)
    ref = stats.gamma.pdf(y, phi / g2, scale=beta)
    assert np.max(np.abs(law.pdf(y) - ref)) < 1e-8


def test_law_unsupported_for_tabulated_bursts():
    red = ReducedJumpModel(1.0, ConstantRate(1.0), TabulatedJumps(0.0, 0.5, np.ones(5)))
    with pytest.raises(UnsupportedError):
        analytic_stationary(red)


def test_cell_integrals_sum_to_cdf():
    law = analytic_stationary(FIG1_RED)
    edges = uniform_edges(10.0, 50)
    assert law.cell_integrals(edges).sum() == pytest.approx(1 - law.sf(10.0), rel=1e-10)


densities = arrays(np.float64, 12, elements=st.floats(0, 10, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(a=densities, b=densities, c=densities)
def test_norm_axioms(a, b, c):
    e = uniform_edges(3.0, 12)
    A, B, C = (DensityGrid(e, v) for v in (a, b, c))
    for norm in NORMS:
        assert density_distance(A, A, norm) == 0.0
        ab = density_distance(A, B, norm)
        assert ab == pytest.approx(density_distance(B, A, norm))
        assert ab <= density_distance(A, C, norm) + density_distance(C, B, norm) + 1e-9
        assert ab >= 0


def test_distance_grid_mismatch():
    a = DensityGrid(uniform_edges(1.0, 4), np.ones(4))
    b = DensityGrid(uniform_edges(1.0, 2), np.ones(2))
    with pytest.raises(DomainError):
        density_distance(a, b)
    assert density_distance(a, b, regrid=True) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        density_distance(a, a, "L3")


def test_discrete_steady_state_is_fixed_point():
    edges = uniform_edges(30.0, 300)
    v = discrete_steady_state(edges, FIG1_RED)
    op = _Operator(edges, FIG1_RED)
    assert v.mass == pytest.approx(1.0)
    assert np.abs(op(v.values)).max() < 1e-10


def test_operator_conserves_mass():
    edges = uniform_edges(20.0, 200)
    op = _Operator(edges, FIG1_RED)
    v = np.random.default_rng(0).random(200)
    assert abs(op(v).sum()) < 1e-12 * v.sum() * 100
    assert np.allclose(op.matrix() @ v, op(v), atol=1e-12)


def test_pde_relaxes_to_steady_state():
    edges = uniform_edges(30.0, 300)
    v0 = np.zeros(300)
    v0[0] = 1 / 0.1
    snaps = solve_density_pde(DensityGrid(edges, v0), 30.0, FIG1_RED, t_eval=[1.0, 30.0])
    steady = discrete_steady_state(edges, FIG1_RED)
    assert snaps[-1].t == 30.0 and snaps[-1].mass == pytest.approx(1.0, abs=1e-12)
    assert density_distance(snaps[-1], steady) < 1e-4 < density_distance(snaps[0], steady)
    assert np.all(snaps[0].values >= 0)


def test_pde_large_step_warns():
    edges = uniform_edges(10.0, 50)
    v = DensityGrid(edges, np.full(50, 0.1))
    with pytest.warns(RuntimeWarning):
        solve_density_pde(v, 0.5, FIG1_RED, dt=1.0)


def test_pde_mass_check():
    edges = uniform_edges(10.0, 50)
    with pytest.raises(NumericalError):
        solve_density_pde(DensityGrid(edges, np.full(50, 0.1)), 1.0, FIG1_RED, mass_tol=-1.0)
