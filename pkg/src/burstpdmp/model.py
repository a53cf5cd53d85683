"""Model ingredients: rate constants, the feedback burst rate and the burst-size law.

The two-dimensional model is

    dX/dt = -gamma1 X + bursts of size ~ h at rate phi(Y)
    dY/dt = -gamma2 Y + lambda2 X

All types here are immutable.  Each rate and jump density also exposes a
flat ``float64`` encoding (``code``/``params``) consumed by the compiled
simulation kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError, DomainError, NumericalError

__all__ = [
    "ModelParams",
    "ConstantRate",
    "HillRate",
    "TabulatedRate",
    "ExponentialJumps",
    "TabulatedJumps",
    "Model",
    "ScalingFamily",
    "eval_rate",
    "jump_moment",
    "instantiate_scaling",
    "fig1_family",
    "FIG1_HILL",
    "RATE_CONSTANT",
    "RATE_HILL",
    "RATE_TABULATED",
    "JUMP_EXPONENTIAL",
    "JUMP_TABULATED",
]

RATE_CONSTANT = 0
RATE_HILL = 1
RATE_TABULATED = 2

JUMP_EXPONENTIAL = 0
JUMP_TABULATED = 1


def _positive(name, value):
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise ConfigError(f"must be a positive finite number, got {value!r}", field=name)
    return value


@dataclass(frozen=True)
class ModelParams:
    """Degradation and translation rates of the mRNA/protein pair."""

    gamma1: float
    gamma2: float
    lambda2: float

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "lambda2"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))

    def replace(self, **changes) -> "ModelParams":
        values = {"gamma1": self.gamma1, "gamma2": self.gamma2, "lambda2": self.lambda2}
        values.update(changes)
        return ModelParams(**values)


# --------------------------------------------------------------------------
# burst rates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantRate:
    """Burst rate independent of the protein level (no feedback)."""

    phi0: float

    def __post_init__(self):
        object.__setattr__(self, "phi0", _positive("phi0", self.phi0))

    code = RATE_CONSTANT

    @property
    def lower_bound(self) -> float:
        return self.phi0

    @property
    def upper_bound(self) -> float:
        return self.phi0

    @property
    def params(self) -> np.ndarray:
        return np.array([self.phi0], dtype=np.float64)

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        return np.full_like(y, self.phi0) if y.ndim else self.phi0

    def scaled(self, factor: float) -> "ConstantRate":
        return ConstantRate(self.phi0 * factor)


@dataclass(frozen=True)
class HillRate:
    """Hill-type feedback ``phi0 (1 + K y^n) / (A + B y^n)``.

    The map ``u -> (1 + K u)/(A + B u)`` is monotone, so the extremes are
    attained at ``y = 0`` and ``y -> inf``.
    """

    phi0: float
    K: float
    A: float
    B: float
    n: float

    code = RATE_HILL

    def __post_init__(self):
        for name in ("phi0", "K", "A", "B", "n"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))

    @property
    def at_zero(self) -> float:
        return self.phi0 / self.A

    @property
    def at_infinity(self) -> float:
        return self.phi0 * self.K / self.B

    @property
    def lower_bound(self) -> float:
        return min(self.at_zero, self.at_infinity)

    @property
    def upper_bound(self) -> float:
        return max(self.at_zero, self.at_infinity)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.phi0, self.K, self.A, self.B, self.n], dtype=np.float64)

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        with np.errstate(over="ignore", invalid="ignore"):
            yn = y**self.n
            out = self.phi0 * (1.0 + self.K * yn) / (self.A + self.B * yn)
        # y**n overflows to inf for huge y; the limit is phi0 K / B
        out = np.where(np.isfinite(yn), out, self.at_infinity)
        return out if out.ndim else float(out)

    def scaled(self, factor: float) -> "HillRate":
        return HillRate(self.phi0 * factor, self.K, self.A, self.B, self.n)


@dataclass(frozen=True, eq=False)
class TabulatedRate:
    """Rate given on a uniform grid, linearly interpolated, constant beyond the ends.

    Bounds are supplied by the caller and checked against the table and a
    refined sample of the interpolant.
    """

    y0: float
    dy: float
    values: np.ndarray
    lower_bound: float
    upper_bound: float

    code = RATE_TABULATED

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise ConfigError("need at least two tabulated values", field="values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dy", _positive("dy", self.dy))
        lo = _positive("lower_bound", self.lower_bound)
        hi = _positive("upper_bound", self.upper_bound)
        if lo > hi:
            raise ConfigError("lower_bound exceeds upper_bound", field="lower_bound")
        object.__setattr__(self, "lower_bound", lo)
        object.__setattr__(self, "upper_bound", hi)
        probe = self(np.linspace(self.y0, self.y0 + self.dy * (values.size - 1), 8 * values.size))
        if values.min() < lo or values.max() > hi or probe.min() < lo or probe.max() > hi:
            raise ConfigError("tabulated rate violates the supplied bounds", field="values")

    @property
    def params(self) -> np.ndarray:
        return np.concatenate(([self.y0, self.dy], self.values))

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        grid = self.y0 + self.dy * np.arange(self.values.size)
        out = np.interp(y, grid, self.values)
        return out if out.ndim else float(out)

    def scaled(self, factor: float) -> "TabulatedRate":
        return TabulatedRate(
            self.y0, self.dy, self.values * factor, self.lower_bound * factor, self.upper_bound * factor
        )


BurstRate = Union[ConstantRate, HillRate, TabulatedRate]


def eval_rate(rate: BurstRate, y):
    """Evaluate the burst rate at protein level(s) ``y`` (must be non-negative)."""
    arr = np.asarray(y, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"protein level must be non-negative, got {y!r}")
    return rate(y)


# --------------------------------------------------------------------------
# burst-size densities
# --------------------------------------------------------------------------


class _MomentCache:
    """Per-instance memo for raw moments."""

    def _moment_cache(self) -> dict:
        cache = self.__dict__.get("_moments")
        if cache is None:
            cache = {}
            object.__setattr__(self, "_moments", cache)
        return cache

    def moment(self, j: int) -> float:
        """Raw moment ``E[D^j]`` of the burst size."""
        j = int(j)
        if j < 0:
            raise DomainError(f"moment order must be >= 0, got {j}")
        cache = self._moment_cache()
        if j not in cache:
            cache[j] = 1.0 if j == 0 else self._compute_moment(j)
        return cache[j]

    @property
    def mean(self) -> float:
        return self.moment(1)


@dataclass(frozen=True)
class ExponentialJumps(_MomentCache):
    """Exponential burst sizes with the given mean."""

    mean_size: float

    code = JUMP_EXPONENTIAL

    def __post_init__(self):
        object.__setattr__(self, "mean_size", _positive("mean_size", self.mean_size))

    @property
    def params(self) -> np.ndarray:
        return np.array([self.mean_size], dtype=np.float64)

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.where(x >= 0, np.exp(-np.clip(x, 0, None) / self.mean_size) / self.mean_size, 0.0)
        return out if out.ndim else float(out)

    def sf(self, x):
        """Survival function ``P(D > x)``."""
        x = np.asarray(x, dtype=np.float64)
        out = np.where(x >= 0, np.exp(-np.clip(x, 0, None) / self.mean_size), 1.0)
        return out if out.ndim else float(out)

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def _compute_moment(self, j: int) -> float:
        return math.factorial(j) * self.mean_size**j

    def scaled(self, factor: float) -> "ExponentialJumps":
        """Law of ``factor * D``."""
        return ExponentialJumps(self.mean_size * factor)


@dataclass(frozen=True, eq=False)
class TabulatedJumps(_MomentCache):
    """Burst-size density on the uniform grid ``x0 + k dx``, linearly interpolated.

    The density is zero outside the grid and is renormalised so that its
    trapezoidal integral is one.
    """

    x0: float
    dx: float
    values: np.ndarray

    code = JUMP_TABULATED

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise ConfigError("need at least two tabulated values", field="values")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ConfigError("density values must be finite and non-negative", field="values")
        if self.x0 < 0:
            raise ConfigError("burst sizes must be non-negative", field="x0")
        object.__setattr__(self, "dx", _positive("dx", self.dx))
        cell_mass = 0.5 * (values[1:] + values[:-1]) * self.dx
        total = cell_mass.sum()
        if total <= 0:
            raise ConfigError("density has zero mass", field="values")
        values = values / total
        cdf = np.concatenate(([0.0], np.cumsum(cell_mass / total)))
        cdf[-1] = 1.0
        values.setflags(write=False)
        cdf.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_cdf_nodes", cdf)

    @property
    def grid(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.values.size)

    @property
    def params(self) -> np.ndarray:
        n = self.values.size
        return np.concatenate(([self.x0, self.dx, float(n)], self.values, self._cdf_nodes))

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.interp(x, self.grid, self.values, left=0.0, right=0.0)
        return out if out.ndim else float(out)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        s = np.clip((x - self.x0) / self.dx, 0.0, self.values.size - 1.0)
        k = np.minimum(np.floor(s).astype(np.int64), self.values.size - 2)
        frac = (s - k) * self.dx
        f0 = self.values[k]
        slope = (self.values[k + 1] - f0) / self.dx
        out = self._cdf_nodes[k] + f0 * frac + 0.5 * slope * frac**2
        out = np.clip(out, 0.0, 1.0)
        return out if out.ndim else float(out)

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def _compute_moment(self, j: int) -> float:
        # Gauss-Legendre per cell; exact for degree <= 2m-1, checked against m+2 nodes
        def rule(m):
            nodes, weights = np.polynomial.legendre.leggauss(m)
            left = self.grid[:-1]
            pts = left[:, None] + 0.5 * self.dx * (nodes[None, :] + 1.0)
            f = self.pdf(pts)
            return float(np.sum(0.5 * self.dx * weights[None, :] * pts**j * f))

        m = j // 2 + 2
        coarse, fine = rule(m), rule(m + 2)
        residual = abs(fine - coarse)
        if not math.isfinite(fine) or residual > 1e-10 * max(abs(fine), 1e-300):
            raise NumericalError(f"moment quadrature did not converge for j={j}: residual {residual:.3e}")
        return fine

    def scaled(self, factor: float) -> "TabulatedJumps":
        """Law of ``factor * D``: ``h_c(x) = h(x / c) / c``."""
        factor = _positive("factor", factor)
        return TabulatedJumps(self.x0 * factor, self.dx * factor, self.values / factor)


JumpDensity = Union[ExponentialJumps, TabulatedJumps]


def jump_moment(h: JumpDensity, j: int) -> float:
    """Raw moment ``E^j h = int x^j h(x) dx``."""
    return h.moment(j)


# --------------------------------------------------------------------------
# full model and scaling families
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Model:
    """A concrete two-dimensional bursting model."""

    params: ModelParams
    rate: BurstRate
    jumps: JumpDensity

    @property
    def mean_burst(self) -> float:
        return self.jumps.mean

    def stationary_means(self) -> tuple[float, float]:
        """``(E[X], E[Y])`` at stationarity; only defined for a constant rate."""
        if not isinstance(self.rate, ConstantRate):
            raise DomainError("closed-form stationary means need a constant burst rate")
        p = self.params
        x_eq = self.mean_burst * self.rate.phi0 / p.gamma1
        return x_eq, p.lambda2 * x_eq / p.gamma2


SCALINGS = ("S1", "S2", "S3")


@dataclass(frozen=True)
class ScalingFamily:
    """One-parameter family of models indexed by the mRNA degradation rate.

    ``S1`` scales the burst rate, ``S2`` the burst size and ``S3`` the
    translation rate in proportion to ``gamma1 / gamma1_ref``, so the mean
    protein level stays fixed.
    """

    tag: str
    base: Model
    gamma1_ref: float = 1.0

    def __post_init__(self):
        if self.tag not in SCALINGS:
            raise ConfigError(f"unknown scaling {self.tag!r}; expected one of {SCALINGS}", field="tag")
        object.__setattr__(self, "gamma1_ref", _positive("gamma1_ref", self.gamma1_ref))

    def instantiate(self, gamma1: float) -> Model:
        gamma1 = _positive("gamma1", gamma1)
        r = gamma1 / self.gamma1_ref
        base = self.base
        params = base.params.replace(gamma1=gamma1)
        rate, jumps = base.rate, base.jumps
        if self.tag == "S1":
            rate = rate.scaled(r)
        elif self.tag == "S2":
            jumps = jumps.scaled(r)
        else:
            params = params.replace(lambda2=base.params.lambda2 * r)
        return Model(params, rate, jumps)


def instantiate_scaling(fam: ScalingFamily, gamma1: float) -> tuple[ModelParams, BurstRate, JumpDensity]:
    m = fam.instantiate(gamma1)
    return m.params, m.rate, m.jumps


# Parameters of the Hill-feedback example with burst size proportional to gamma1.
FIG1_HILL = dict(phi0=5.0, K=1.0, A=4.0, B=1.0, n=4.0)


def fig1_family(gamma2: float = 1.0, lambda2: float = 2.0, b_over_gamma1: float = 0.5) -> ScalingFamily:
    """The S2 family with ``b = gamma1 / 2`` and the Hill feedback used for the figures."""
    base = Model(
        ModelParams(gamma1=1.0, gamma2=gamma2, lambda2=lambda2),
        HillRate(**FIG1_HILL),
        ExponentialJumps(b_over_gamma1),
    )
    return ScalingFamily("S2", base, gamma1_ref=1.0)
