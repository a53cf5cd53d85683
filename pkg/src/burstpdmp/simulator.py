"""Exact event-driven simulation of the bursting mRNA/protein process.

Between bursts the state follows the linear flow in closed form; burst times
are drawn by thinning against the rate's upper bound, so no time
discretisation enters anywhere.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, SafetyCapError
from .model import Model, ModelParams

__all__ = [
    "State2D",
    "RngStream",
    "TrajectorySample",
    "StationarySamples",
    "JumpTime",
    "flow",
    "next_jump_time",
    "apply_jump",
    "simulate",
    "stationary_samples",
    "ensemble",
    "resolve_threads",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 10**9


@dataclass(frozen=True)
class State2D:
    x: float
    y: float
    t: float = 0.0

    def __post_init__(self):
        if not (self.x >= 0 and self.y >= 0):
            raise DomainError(f"concentrations must be non-negative, got x={self.x}, y={self.y}")


class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Backed by the counter-based Philox generator; distinct stream ids map to
    independent spawn keys of one ``SeedSequence``.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        if self.seed < 0 or self.stream_id < 0:
            raise ConfigError("seed and stream_id must be non-negative integers", field="seed")
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


RngLike = Union[RngStream, np.random.Generator]


def _gen(rng: RngLike) -> np.random.Generator:
    return rng.generator if isinstance(rng, RngStream) else rng


@dataclass
class TrajectorySample:
    """Recorded states of one trajectory, ordered by time.

    ``events`` holds ``"jump"`` (state right after a burst) or ``"obs"``
    (requested observation time).
    """

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    events: np.ndarray
    jump_count: int
    final: State2D
    proposal_count: int = 0

    @property
    def states(self) -> list[State2D]:
        return [State2D(float(a), float(b), float(t)) for t, a, b in zip(self.times, self.x, self.y)]

    def __len__(self):
        return self.times.size


@dataclass
class StationarySamples:
    """States observed at random times after burn-in."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    burn_in: float
    window: float

    @property
    def states(self) -> list[State2D]:
        return [State2D(float(a), float(b), float(t)) for t, a, b in zip(self.t, self.x, self.y)]

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class JumpTime:
    """Outcome of one thinning search: waiting time, state just before the burst."""

    waiting_time: float
    state: State2D
    proposals: int


def flow(s0: State2D, dt: float, p: ModelParams) -> State2D:
    """Deterministic evolution over ``dt`` with no bursts."""
    if dt < 0:
        raise DomainError(f"dt must be non-negative, got {dt}")
    x, y = _kernels.flow(s0.x, s0.y, float(dt), p.gamma1, p.gamma2, p.lambda2)
    return State2D(x, y, s0.t + dt)


def _check_status(status, cap):
    if status == _kernels.STATUS_SAFETY_CAP:
        raise SafetyCapError(f"thinning rejected {cap} consecutive proposals; check the rate bound")


def _kernel_args(model: Model):
    p = model.params
    rate, jumps = model.rate, model.jumps
    rbar = rate.upper_bound
    if not math.isfinite(rbar) or rbar <= 0:
        raise DomainError("burst rate needs a finite positive upper bound for thinning")
    return (p.gamma1, p.gamma2, p.lambda2, rate.code, rate.params, rbar, jumps.code, jumps.params)


_NO_OBS = np.empty(0)


def next_jump_time(s0: State2D, model: Model, rng: RngLike, cap: int = DEFAULT_CAP, jump_to_y=False) -> JumpTime:
    """Draw the next burst time by thinning; the burst itself is not applied."""
    args = _kernel_args(model)
    x, y, t, n_jumps, n_prop, status, _ = _kernels.run(
        s0.x, s0.y, s0.t, math.inf, *args, jump_to_y, _gen(rng),
        _NO_OBS, np.empty((0, 2)), False, 1, True, int(cap),
    )
    _check_status(status, cap)
    return JumpTime(t - s0.t, State2D(x, y, t), n_prop)


def apply_jump(s: State2D, model: Model, rng: RngLike, jump_to_y=False) -> State2D:
    """Add one burst drawn from the model's burst-size law."""
    d = _kernels.sample_jump(model.jumps.code, model.jumps.params, _gen(rng))
    if jump_to_y:
        return State2D(s.x, s.y + d, s.t)
    return State2D(s.x + d, s.y, s.t)


def _simulate(s0, horizon, model, rng, obs_times, record_jumps, cap, jump_to_y):
    if horizon < 0:
        raise DomainError(f"horizon must be non-negative, got {horizon}")
    t_end = s0.t + float(horizon)
    obs = np.unique(np.asarray([] if obs_times is None else obs_times, dtype=np.float64))
    if obs.size and (obs[0] < s0.t or obs[-1] > t_end):
        raise DomainError("observation times must lie within [s0.t, s0.t + horizon]")
    obs_out = np.empty((obs.size, 2))
    x, y, t, n_jumps, n_prop, status, jumps = _kernels.run(
        s0.x, s0.y, s0.t, t_end, *_kernel_args(model), jump_to_y, _gen(rng),
        obs, obs_out, bool(record_jumps), -1, False, int(cap),
    )
    _check_status(status, cap)
    times = np.concatenate((jumps[:, 0], obs))
    xs = np.concatenate((jumps[:, 1], obs_out[:, 0]))
    ys = np.concatenate((jumps[:, 2], obs_out[:, 1]))
    events = np.array(["jump"] * jumps.shape[0] + ["obs"] * obs.size)
    order = np.argsort(times, kind="stable")
    return TrajectorySample(
        times[order], xs[order], ys[order], events[order], int(n_jumps), State2D(x, y, t), int(n_prop)
    )


def simulate(
    s0: State2D,
    horizon: float,
    model: Model,
    rng: RngLike,
    obs_times: Optional[Sequence[float]] = None,
    record_jumps: bool = True,
    cap: int = DEFAULT_CAP,
) -> TrajectorySample:
    """Simulate the two-dimensional process on ``[s0.t, s0.t + horizon]``.

    Records the state right after every burst (unless ``record_jumps`` is
    false) and at each absolute time in ``obs_times``.
    """
    return _simulate(s0, horizon, model, rng, obs_times, record_jumps, cap, False)


def default_burn_in(model: Model) -> float:
    return 20.0 / model.params.gamma2


def default_window(model: Model) -> float:
    return 1e6 / model.rate.upper_bound


def stationary_samples(
    model: Model,
    n_samples: int,
    rng: RngLike,
    burn_in: Optional[float] = None,
    window: Optional[float] = None,
    s0: State2D = State2D(0.0, 0.0),
    cap: int = DEFAULT_CAP,
    jump_to_y: bool = False,
) -> StationarySamples:
    """Observe one long trajectory at ``n_samples`` i.i.d. uniform times in
    ``[burn_in, burn_in + window]`` (measured from ``s0.t``).
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be at least 1", field="n_samples")
    burn_in = default_burn_in(model) if burn_in is None else float(burn_in)
    window = default_window(model) if window is None else float(window)
    if window <= 0:
        raise ConfigError(f"window must be positive, got {window}", field="window")
    if burn_in < 0:
        raise ConfigError(f"burn_in must be non-negative, got {burn_in}", field="burn_in")
    gen = _gen(rng)
    times = np.sort(s0.t + burn_in + window * gen.random(int(n_samples)))
    traj = _simulate(s0, burn_in + window, model, gen, times, False, cap, jump_to_y)
    return StationarySamples(traj.times, traj.x, traj.y, burn_in, window)


def resolve_threads(threads: Optional[int] = None) -> int:
    """Explicit value, else ``$BURSTPDMP_THREADS``, else the CPU count."""
    if threads is None:
        env = os.environ.get("BURSTPDMP_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ConfigError("thread count must be >= 1", field="threads")
    return threads


def split_counts(total: int, parts: int) -> list[int]:
    base, extra = divmod(int(total), int(parts))
    return [base + (1 if i < extra else 0) for i in range(parts)]


def ensemble(
    model: Model,
    times: Sequence[float],
    n_replicas: int,
    seed: int,
    n_streams: int = 16,
    s0: State2D = State2D(0.0, 0.0),
    threads: Optional[int] = None,
    cap: int = DEFAULT_CAP,
    jump_to_y: bool = False,
) -> np.ndarray:
    """States of independent replicas at the given absolute times.

    Replicas are divided among ``n_streams`` streams ``(seed, 0..n_streams-1)``;
    the result is ordered by stream id and does not depend on ``threads``.
    Returns an array of shape ``(n_replicas, len(times), 2)`` holding ``(x, y)``.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0) or times[0] < s0.t:
        raise DomainError("times must be a non-empty sorted sequence starting at or after s0.t")
    if n_replicas < 1:
        raise ConfigError("n_replicas must be >= 1", field="n_replicas")
    n_streams = max(1, min(int(n_streams), int(n_replicas)))
    args = _kernel_args(model)
    counts = split_counts(n_replicas, n_streams)

    def work(stream_id):
        gen = RngStream(seed, stream_id).generator
        out, status = _kernels.run_ensemble(
            s0.x, s0.y, s0.t, counts[stream_id], *args, jump_to_y, gen, times, int(cap)
        )
        _check_status(status, cap)
        return out

    n_threads = min(resolve_threads(threads), n_streams)
    if n_threads == 1:
        parts = [work(i) for i in range(n_streams)]
    else:
        with ThreadPoolExecutor(n_threads) as pool:
            parts = list(pool.map(work, range(n_streams)))
    return np.concatenate(parts, axis=0)
