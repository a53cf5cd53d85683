import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from burstpdmp.errors import ConfigError, NumericalError, UnsupportedError
from burstpdmp.model import ConstantRate, ExponentialJumps, HillRate, Model, ModelParams, ScalingFamily
from burstpdmp.moments import (
    MomentVector,
    batch_means_se,
    estimate_moments_mc,
    fit_scaling_exponents,
    integrate_moments,
    moment_ode_rhs,
    sample_moments,
    stationary_moments,
    weighted_loglog_slope,
)

P = ModelParams(3.0, 0.8, 1.7)
H = ExponentialJumps(0.6)
PHI = 2.5


def generator_on_monomial(x, y, k, with_y, p=P, phi=PHI, h=H):
    """(L f)(x, y) for f = x^k or x^k y, burst expectation by quadrature."""
    burst, _ = integrate.quad(lambda d: (x + d) ** k * h.pdf(d), 0, np.inf, epsabs=1e-13, epsrel=1e-13)
    if not with_y:
        return -p.gamma1 * k * x**k + phi * (burst - x**k)
    drift = -p.gamma1 * k * x**k * y + x**k * (-p.gamma2 * y + p.lambda2 * x)
    return drift + phi * (burst - x**k) * y


@pytest.mark.parametrize("x,y", [(0.0, 0.0), (1.3, 0.4), (4.0, 7.5)])
def test_rhs_is_generator_at_point_mass(x, y):
    order = 3
    d = moment_ode_rhs(MomentVector.from_state(x, y, order), P, ConstantRate(PHI), H)
    for k in range(1, order + 2):
        assert d.mu[k] == pytest.approx(generator_on_monomial(x, y, k, False), rel=1e-10, abs=1e-10)
    for k in range(order + 1):
        assert d.nu[k] == pytest.approx(generator_on_monomial(x, y, k, True), rel=1e-10, abs=1e-10)


def test_stationary_closed_forms():
    m = stationary_moments(2, P, PHI, H)
    mu1 = H.mean * PHI / P.gamma1
    assert m.mu[1] == pytest.approx(mu1, rel=1e-12)
    assert m.nu[0] == pytest.approx(P.lambda2 * mu1 / P.gamma2, rel=1e-12)
    assert m.mu[2] == pytest.approx((PHI * H.moment(2) + 2 * PHI * H.mean * mu1) / (2 * P.gamma1), rel=1e-12)
    zero = moment_ode_rhs(m, P, PHI, H)
    assert np.allclose(zero.mu, 0, atol=1e-12) and np.allclose(zero.nu, 0, atol=1e-12)


def test_first_moments_exact_relaxation():
    m0 = MomentVector.from_state(2.0, 1.0, 1)
    ts = np.linspace(0.0, 5.0, 11)
    traj = integrate_moments(m0, 5.0, P, PHI, H, t_eval=ts)
    mu_star = H.mean * PHI / P.gamma1
    g1, g2, lam = P.gamma1, P.gamma2, P.lambda2
    for m in traj:
        t = m.t
        mu1 = mu_star + (2.0 - mu_star) * math.exp(-g1 * t)
        assert m.mu[1] == pytest.approx(mu1, rel=1e-9)
        # nu0 = E[Y] solves d nu0 = -g2 nu0 + lam mu1
        nu_star = lam * mu_star / g2
        a = lam * (2.0 - mu_star) / (g2 - g1)
        nu0 = nu_star + a * math.exp(-g1 * t) + (1.0 - nu_star - a) * math.exp(-g2 * t)
        assert m.nu[0] == pytest.approx(nu0, rel=1e-9)


def test_gronwall_envelope():
    """Distance to the fixed point decays at least like exp(-min(g1, g2) t) times the matrix growth."""
    st_m = stationary_moments(2, P, PHI, H)
    m0 = MomentVector.from_state(5.0, 5.0, 2)
    ts = np.linspace(0.0, 20.0, 41)
    traj = integrate_moments(m0, 20.0, P, PHI, H, t_eval=ts)
    rate = min(P.gamma1, P.gamma2)
    d0 = max(np.abs(m0.mu - st_m.mu).max(), np.abs(m0.nu - st_m.nu).max())
    for m in traj[1:]:
        d = max(np.abs(m.mu - st_m.mu).max(), np.abs(m.nu - st_m.nu).max())
        assert d <= 50 * d0 * (1 + m.t) ** 3 * math.exp(-rate * m.t) + 1e-9
    assert d < 1e-4


def test_feedback_rate_unsupported():
    with pytest.raises(UnsupportedError):
        stationary_moments(2, P, HillRate(5, 1, 4, 1, 4), H)


def test_monte_carlo_matches_moment_ode():
    model = Model(P, ConstantRate(PHI), H)
    est = estimate_moments_mc(model, 1.0, 40_000, seed=3, order=2, n_streams=8)
    ref = integrate_moments(MomentVector.zeros(2), 1.0, P, PHI, H)[0]
    for k in (1, 2):
        assert abs(est.mu[k] - ref.mu[k]) < 4 * est.mu_se[k]
    for k in (0, 1, 2):
        assert abs(est.nu[k] - ref.nu[k]) < 4 * est.nu_se[k]


def test_sample_moments_and_se():
    x = np.array([1.0, 2.0, 3.0])
    m = sample_moments(x, np.ones(3), 1)
    assert m.mu[1] == 2.0 and m.mu[2] == pytest.approx(14 / 3)
    assert m.mu_se[1] == pytest.approx(1 / math.sqrt(3))
    with pytest.raises(ConfigError):
        sample_moments(x[:1], x[:1], 1)


def test_batch_means_iid_agrees_with_naive():
    v = np.random.default_rng(0).normal(size=64_000)
    assert batch_means_se(v) == pytest.approx(1 / math.sqrt(v.size), rel=0.3)


@settings(max_examples=40, deadline=None)
@given(slope=st.floats(-3, 3), c=st.floats(0.01, 100))
def test_loglog_slope_recovers_power_law(slope, c):
    g = np.array([0.1, 1.0, 10.0, 100.0])
    v = c * g**slope
    s, se, icpt = weighted_loglog_slope(g, v, 0.01 * v)
    assert s == pytest.approx(slope, abs=1e-9)
    assert icpt == pytest.approx(math.log(c), abs=1e-9)


def test_loglog_rejects_nonpositive():
    with pytest.raises(NumericalError):
        weighted_loglog_slope([1, 10, 100], [1.0, 0.0, 2.0], [0.1, 0.1, 0.1])


def test_scaling_fit_validation():
    fam = ScalingFamily("S2", Model(P, ConstantRate(PHI), H))
    with pytest.raises(ConfigError, match="gamma1_grid"):
        fit_scaling_exponents(fam, [1, 10])
    with pytest.raises(ConfigError, match="two decades"):
        fit_scaling_exponents(fam, [1, 2, 10])
    with pytest.raises(ConfigError, match="n_streams"):
        fit_scaling_exponents(fam, [1, 10, 100], n_streams=4)


def test_scaling_fit_constant_rate_s3():
    # S3 with constant rate: mu1 = b phi / g1 exactly, slope -1
    base = Model(ModelParams(1.0, 1.0, 2.0), ConstantRate(2.0), ExponentialJumps(1.0))
    rep = fit_scaling_exponents(ScalingFamily("S3", base), [1, 10, 100], k_max=1, t=5.0, seed=1, n_replicas=20_000)
    assert rep.fits["mu1"].slope == pytest.approx(-1.0, abs=0.05)
    assert rep.fits["nu0"].kind == "bounded"
    rows = list(rep.rows())
    assert rows[0][0] == 1.0 and {r[1] for r in rows} >= {"mu1", "nu0"}
