import mpmath
import numpy as np
import pytest
from scipy import stats

from burstpdmp import _kernels
from burstpdmp.checks import thinning_waiting_times
from burstpdmp.errors import ConfigError, DomainError, SafetyCapError
from burstpdmp.model import ConstantRate, ExponentialJumps, Model, ModelParams, TabulatedRate
from burstpdmp.simulator import (
    RngStream,
    State2D,
    apply_jump,
    ensemble,
    flow,
    next_jump_time,
    simulate,
    stationary_samples,
)

mpmath.mp.dps = 40


def exact_flow(x0, y0, dt, g1, g2, lam):
    """High-precision closed form (confluent limit when the rates coincide)."""
    x0, y0, dt, g1, g2, lam = map(mpmath.mpf, (x0, y0, dt, g1, g2, lam))
    x = x0 * mpmath.exp(-g1 * dt)
    if g1 == g2:
        y = (y0 + lam * x0 * dt) * mpmath.exp(-g2 * dt)
    else:
        y = y0 * mpmath.exp(-g2 * dt) + lam * x0 * (mpmath.exp(-g1 * dt) - mpmath.exp(-g2 * dt)) / (g2 - g1)
    return float(x), float(y)


@pytest.mark.parametrize("gap", [0.0, 1e-12, 1e-6, 1.0, -1e-9, -0.5])
@pytest.mark.parametrize("dt", [0.0, 1e-8, 0.3, 2.0, 10.0, 60.0])
def test_flow_matches_high_precision(gap, dt):
    g2, lam, x0, y0 = 1.3, 2.1, 3.7, 0.9
    g1 = g2 + gap
    got = _kernels.flow(x0, y0, dt, g1, g2, lam)
    ref = exact_flow(x0, y0, dt, g1, g2, lam)
    # exp(-g dt) amplifies the rounding of its argument by g dt
    rel = 4e-16 * max(8.0, 2.0 * max(g1, g2) * dt)
    assert got[0] == pytest.approx(ref[0], rel=rel, abs=1e-300)
    assert abs(got[1] - ref[1]) <= rel * max(1.0, abs(ref[1])) or got[1] == pytest.approx(ref[1], rel=rel)


def test_flow_state_wrapper_and_semigroup():
    p = ModelParams(2.0, 0.7, 1.5)
    s = State2D(1.0, 2.0, 0.5)
    a = flow(flow(s, 0.4, p), 1.1, p)
    b = flow(s, 1.5, p)
    assert a.t == b.t == 2.0
    assert a.x == pytest.approx(b.x, rel=1e-14)
    assert a.y == pytest.approx(b.y, rel=1e-14)


def test_state_rejects_negative():
    with pytest.raises(DomainError):
        State2D(-1.0, 0.0)


@pytest.mark.parametrize("bound", [2.0, 5.0, 40.0])
def test_thinned_waiting_times_are_exponential(bound):
    waits = thinning_waiting_times(2.0, bound, 20_000, seed=3)
    assert stats.kstest(waits, "expon", args=(0.0, 0.5)).pvalue > 0.001
    assert waits.mean() == pytest.approx(0.5, rel=0.03)


def test_next_jump_then_apply(constant_model):
    rng = RngStream(5, 0)
    jt = next_jump_time(State2D(1.0, 1.0), constant_model, rng)
    assert jt.waiting_time > 0 and jt.proposals == 1
    assert jt.state.x == pytest.approx(np.exp(-10.0 * jt.waiting_time))
    after = apply_jump(jt.state, constant_model, rng)
    assert after.x > jt.state.x and after.y == jt.state.y and after.t == jt.state.t


def test_trajectory_nonnegative_and_ordered(hill_model):
    obs = np.linspace(0.1, 30, 300)
    tr = simulate(State2D(0.0, 0.0), 30.0, hill_model, RngStream(1, 0), obs_times=obs)
    assert np.all(tr.x >= 0) and np.all(tr.y >= 0)
    assert np.all(np.diff(tr.times) >= 0)
    assert (tr.events == "jump").sum() == tr.jump_count
    assert (tr.events == "obs").sum() == obs.size
    assert tr.proposal_count >= tr.jump_count


def test_jump_records_are_post_jump_states(constant_model):
    tr = simulate(State2D(0.0, 0.0), 5.0, constant_model, RngStream(2, 0))
    # between consecutive bursts x decays exactly, so each recorded x exceeds the flowed value
    p = constant_model.params
    for k in range(1, len(tr)):
        prev = State2D(tr.x[k - 1], tr.y[k - 1], tr.times[k - 1])
        flowed = flow(prev, tr.times[k] - tr.times[k - 1], p)
        assert tr.x[k] > flowed.x
        assert tr.y[k] == pytest.approx(flowed.y, rel=1e-12)


def test_zero_horizon_is_empty(constant_model):
    tr = simulate(State2D(1.0, 1.0), 0.0, constant_model, RngStream(0, 0))
    assert len(tr) == 0 and tr.final == State2D(1.0, 1.0, 0.0)


def test_observation_outside_window(constant_model):
    with pytest.raises(DomainError):
        simulate(State2D(0.0, 0.0), 1.0, constant_model, RngStream(0, 0), obs_times=[2.0])


def test_same_stream_same_trajectory(hill_model):
    a = simulate(State2D(0.0, 0.0), 20.0, hill_model, RngStream(42, 7))
    b = simulate(State2D(0.0, 0.0), 20.0, hill_model, RngStream(42, 7))
    c = simulate(State2D(0.0, 0.0), 20.0, hill_model, RngStream(42, 8))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.times[:5], c.times[:5])


def test_ensemble_independent_of_threads(hill_model):
    a = ensemble(hill_model, [1.0, 2.0], 1000, seed=9, n_streams=4, threads=1)
    b = ensemble(hill_model, [1.0, 2.0], 1000, seed=9, n_streams=4, threads=3)
    assert a.shape == (1000, 2, 2)
    assert np.array_equal(a, b)


def test_safety_cap():
    rate = TabulatedRate(0.0, 1.0, [1e-12, 1e-12], lower_bound=1e-12, upper_bound=1.0)
    m = Model(ModelParams(1.0, 1.0, 1.0), rate, ExponentialJumps(1.0))
    with pytest.raises(SafetyCapError):
        simulate(State2D(0.0, 0.0), 1e9, m, RngStream(0, 0), cap=1000)


def test_stationary_samples_validation(constant_model):
    with pytest.raises(ConfigError):
        stationary_samples(constant_model, 0, RngStream(0, 0))
    s = stationary_samples(constant_model, 100, RngStream(0, 0), burn_in=5.0, window=10.0)
    assert np.all((s.t >= 5.0) & (s.t <= 15.0)) and len(s) == 100


def test_stationary_mean_constant_rate(constant_model):
    s = stationary_samples(constant_model, 20_000, RngStream(4, 0), window=2e4)
    # i.i.d. bound is loose but samples at this spacing are nearly independent
    assert s.x.mean() == pytest.approx(0.2, abs=4 * s.x.std() / np.sqrt(s.x.size) + 0.005)
    assert s.y.mean() == pytest.approx(0.4, abs=0.03)
