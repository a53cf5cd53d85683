"""Protein-only models obtained when mRNA degradation is fast.

* fast promoter switching: the deterministic ODE ``dY/dt = -gamma2 Y + lambda2 psi(Y)``
  with ``psi(y) = b phi(y) / gamma1``;
* fast transcription or translation: a one-dimensional bursting process with
  exponential decay at rate ``gamma2`` and protein bursts drawn from the
  burst-size law rescaled by ``lambda2 / gamma1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, NumericalError
from .model import BurstRate, JumpDensity, Model, ModelParams
from .simulator import (
    DEFAULT_CAP,
    RngLike,
    State2D,
    StationarySamples,
    TrajectorySample,
    _simulate,
    stationary_samples,
)

__all__ = [
    "ReducedODE",
    "ReducedJumpModel",
    "ODETrajectory",
    "build_hbar",
    "integrate_ode",
    "simulate_reduced",
    "reduced_stationary_samples",
]


@dataclass(frozen=True)
class ReducedODE:
    gamma2: float
    lambda2: float
    psi: Callable
    psi_min: float
    psi_max: float

    @classmethod
    def from_model(cls, model: Model) -> "ReducedODE":
        b, g1 = model.mean_burst, model.params.gamma1
        rate = model.rate
        return cls(
            gamma2=model.params.gamma2,
            lambda2=model.params.lambda2,
            psi=lambda y: b * rate(y) / g1,
            psi_min=b * rate.lower_bound / g1,
            psi_max=b * rate.upper_bound / g1,
        )

    def rhs(self, t, y):
        return -self.gamma2 * y + self.lambda2 * self.psi(np.maximum(y, 0.0))


@dataclass(frozen=True)
class ReducedJumpModel:
    """Protein bursting with decay ``gamma2``, burst rate ``rate`` and burst law ``hbar``."""

    gamma2: float
    rate: BurstRate
    hbar: JumpDensity

    @classmethod
    def from_model(cls, model: Model) -> "ReducedJumpModel":
        return cls(model.params.gamma2, model.rate, build_hbar(model.jumps, model.params))

    def as_kernel_model(self) -> Model:
        # x stays at zero, so gamma1 and lambda2 never enter the flow
        return Model(ModelParams(self.gamma2, self.gamma2, 1.0), self.rate, self.hbar)


def build_hbar(h: JumpDensity, p: ModelParams) -> JumpDensity:
    """Protein burst law: ``hbar(d) = (g1/l2) h((g1/l2) d)``, i.e. bursts scaled by ``l2/g1``."""
    return h.scaled(p.lambda2 / p.gamma1)


@dataclass
class ODETrajectory:
    t: np.ndarray
    y: np.ndarray


def integrate_ode(
    y0: float,
    horizon: float,
    m: ReducedODE,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    t_eval: Optional[Sequence[float]] = None,
) -> ODETrajectory:
    """Integrate the deterministic reduced equation with an embedded 8(5,3) pair."""
    if y0 < 0:
        raise DomainError(f"y0 must be non-negative, got {y0}")
    if rtol <= 0 or atol <= 0:
        raise DomainError("tolerances must be positive")
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=np.float64)
    sol = solve_ivp(m.rhs, (0.0, float(horizon)), [float(y0)], method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval)
    if not sol.success:
        raise NumericalError(f"reduced ODE integration failed: {sol.message}")
    return ODETrajectory(sol.t, sol.y[0])


def simulate_reduced(
    y0: float,
    horizon: float,
    m: ReducedJumpModel,
    rng: RngLike,
    obs_times: Optional[Sequence[float]] = None,
    record_jumps: bool = True,
    cap: int = DEFAULT_CAP,
) -> TrajectorySample:
    """Exact simulation of the one-dimensional bursting process.

    Uses the same thinning engine as the two-dimensional simulator with the
    mRNA coordinate pinned at zero; ``x`` in the result is identically zero.
    """
    return _simulate(State2D(0.0, y0), horizon, m.as_kernel_model(), rng, obs_times, record_jumps, cap, True)


def reduced_stationary_samples(
    m: ReducedJumpModel,
    n_samples: int,
    rng: RngLike,
    burn_in: Optional[float] = None,
    window: Optional[float] = None,
    y0: float = 0.0,
) -> StationarySamples:
    return stationary_samples(
        m.as_kernel_model(), n_samples, rng, burn_in=burn_in, window=window, s0=State2D(0.0, y0), jump_to_y=True
    )
