"""Protein densities: histograms, the closed-form stationary law of the reduced
bursting process, a finite-volume solver for its density equation, and
L1/L2/Linf distances between densities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, NumericalError, UnsupportedError
from .model import ConstantRate, ExponentialJumps, HillRate
from .reduced import ReducedJumpModel

__all__ = [
    "DensityGrid",
    "StationaryLaw",
    "histogram",
    "uniform_edges",
    "analytic_stationary",
    "stationary_residual",
    "solve_density_pde",
    "discrete_steady_state",
    "density_distance",
    "NORMS",
]

NORMS = ("L1", "L2", "Linf")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def uniform_edges(y_max: float, n_bins: int) -> np.ndarray:
    if not (y_max > 0 and n_bins >= 1):
        raise DomainError("need y_max > 0 and n_bins >= 1")
    return np.linspace(0.0, float(y_max), int(n_bins) + 1)


@dataclass
class DensityGrid:
    """Piecewise-constant density on uniform bins ``edges``.

    ``tail_mass`` is the probability observed beyond the last edge; it is not
    part of ``values``.
    """

    edges: np.ndarray
    values: np.ndarray
    tail_mass: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.edges.size != self.values.size + 1:
            raise DomainError("edges must have one more entry than values")

    @property
    def dy(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def mass(self) -> float:
        return float(np.sum(self.values * self.widths))

    def normalized(self) -> "DensityGrid":
        return DensityGrid(self.edges, self.values / self.mass, self.tail_mass, self.t)

    def mean(self) -> float:
        return float(np.sum(self.centers * self.values * self.widths) / self.mass)

    def rows(self):
        """``(y_left, y_right, value)`` tuples."""
        return zip(self.edges[:-1], self.edges[1:], self.values)


def histogram(samples, n_bins: int = 200, y_max: Optional[float] = None) -> DensityGrid:
    """Density histogram on ``[0, y_max]``; mass above ``y_max`` is reported as ``tail_mass``.

    ``values`` are normalised over the in-range samples.  With ``y_max=None``
    the largest sample is used (tail mass zero).
    """
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size == 0:
        raise DomainError("histogram needs at least one sample")
    if y_max is None:
        y_max = float(s.max())
        if y_max <= 0:
            y_max = 1.0
    edges = uniform_edges(y_max, n_bins)
    inside = s <= y_max
    n_in = int(inside.sum())
    if n_in == 0:
        raise DomainError(f"all {s.size} samples lie above y_max={y_max}")
    counts, _ = np.histogram(s[inside], bins=edges)
    values = counts / (n_in * np.diff(edges))
    return DensityGrid(edges, values, tail_mass=1.0 - n_in / s.size)


# --------------------------------------------------------------------------
# closed-form stationary law
# --------------------------------------------------------------------------


@dataclass
class StationaryLaw:
    """``v(y) = C y^a (A + B y^n)^c exp(-y / beta)`` on ``(0, inf)``.

    For a constant rate ``c = 0`` and ``v`` is a Gamma density.
    """

    a: float
    c: float
    A: float
    B: float
    n: float
    beta: float
    log_norm: float = field(default=0.0)

    def _log_shape(self, y):
        y = np.asarray(y, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = self.a * np.log(y) - y / self.beta
            if self.c != 0.0:
                out = out + self.c * np.log(self.A + self.B * y**self.n)
        return out

    def _smooth_part(self, y):
        # the y^a factor removed; finite and smooth on [0, inf)
        y = np.asarray(y, dtype=np.float64)
        out = -y / self.beta
        if self.c != 0.0:
            out = out + self.c * np.log(self.A + self.B * y**self.n)
        return np.exp(out + self.log_norm)

    def pdf(self, y):
        y = np.asarray(y, dtype=np.float64)
        out = np.zeros_like(y)
        pos = y > 0
        out[pos] = np.exp(self._log_shape(y[pos]) + self.log_norm)
        if self.a == 0.0:
            out[y == 0] = self._smooth_part(0.0)
        elif self.a < 0.0:
            out[y == 0] = np.inf
        return out if out.ndim else float(out)

    @property
    def split(self) -> float:
        return self.beta

    def _head_integral(self, upper: float, weight_power: int = 0) -> float:
        """``int_0^upper y^k v(y) dy`` via ``u = y^(a+1)``, which removes the power singularity."""
        s = self.a + 1.0
        f = lambda u: (u ** (1.0 / s)) ** weight_power * self._smooth_part(u ** (1.0 / s)) / s
        val, _ = integrate.quad(f, 0.0, upper**s, epsabs=0.0, epsrel=1e-13, limit=200)
        return val

    def _tail_integral(self, lower: float, weight_power: int = 0) -> float:
        f = lambda y: y**weight_power * self.pdf(y)
        val, _ = integrate.quad(f, lower, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
        return val

    def moment(self, k: int) -> float:
        return self._head_integral(self.split, k) + self._tail_integral(self.split, k)

    def total_mass(self) -> float:
        return self.moment(0)

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def variance(self) -> float:
        return self.moment(2) - self.mean**2

    def sf(self, y: float) -> float:
        """``P(Y > y)``."""
        if y <= 0:
            return 1.0
        if y < self.split:
            return 1.0 - self._head_integral(y)
        return self._tail_integral(y)

    def upper_quantile(self, tail: float = 1e-6) -> float:
        """Smallest ``y`` with ``P(Y > y) <= tail``."""
        hi = self.mean + 10 * math.sqrt(self.variance)
        while self.sf(hi) > tail:
            hi *= 2
        return optimize.brentq(lambda y: self.sf(y) - tail, 0.0, hi, xtol=1e-10)

    def cell_integrals(self, edges) -> np.ndarray:
        """Probability of each cell ``[edges[i], edges[i+1]]``."""
        edges = np.asarray(edges, dtype=np.float64)
        lo, hi = edges[:-1], edges[1:]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = np.sum(self.pdf(pts) * _GL_WEIGHTS[None, :], axis=1) * half
        # cells touching y = 0 carry the power singularity; integrate those exactly
        for i in np.flatnonzero(lo <= 0.0):
            vals[i] = self._head_integral(hi[i]) - (self._head_integral(lo[i]) if lo[i] > 0 else 0.0)
        return vals

    def bin_average(self, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=np.float64)
        return self.cell_integrals(edges) / np.diff(edges)

    def on_grid(self, edges) -> DensityGrid:
        return DensityGrid(edges, self.bin_average(edges), tail_mass=self.sf(float(edges[-1])))


def analytic_stationary(m: ReducedJumpModel) -> StationaryLaw:
    """Closed-form stationary density of the reduced bursting process.

    Requires exponential protein bursts.  Balancing the probability flux
    through ``y`` gives ``gamma2 y v(y) = int_0^y phi(z) v(z) P(burst > y - z) dz``,
    whose solution for a Hill rate is
    ``y^(phi0/(A g2) - 1) (A + B y^n)^(phi0 (K - B/A)/(n B g2)) exp(-y / beta)``.
    """
    if not isinstance(m.hbar, ExponentialJumps):
        raise UnsupportedError("closed-form stationary law needs exponential bursts; use discrete_steady_state")
    g2, beta = m.gamma2, m.hbar.mean_size
    rate = m.rate
    if isinstance(rate, ConstantRate):
        law = StationaryLaw(rate.phi0 / g2 - 1.0, 0.0, 1.0, 0.0, 1.0, beta)
    elif isinstance(rate, HillRate):
        a = rate.phi0 / (rate.A * g2) - 1.0
        c = rate.phi0 * (rate.K - rate.B / rate.A) / (rate.n * rate.B * g2)
        law = StationaryLaw(a, c, rate.A, rate.B, rate.n, beta)
    else:
        raise UnsupportedError(f"no closed-form stationary law for {type(rate).__name__}")
    total = law.total_mass()
    if not (math.isfinite(total) and total > 0):
        raise NumericalError(f"normalisation integral failed: {total}")
    law.log_norm = -math.log(total)
    return law


def stationary_residual(law: StationaryLaw, m: ReducedJumpModel, y) -> np.ndarray:
    """Pointwise residual of the stationary density equation at ``y > 0``.

    ``d/dy[g2 y v] + int_0^y phi(z) v(z) hbar(y - z) dz - phi(y) v(y)``, with a
    five-point finite difference and adaptive quadrature; independent of the
    closed-form derivation.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if np.any(y <= 0):
        raise DomainError("residual is evaluated at y > 0")
    g2 = m.gamma2
    flux = lambda z: g2 * z * law.pdf(z)
    out = np.empty_like(y)
    for i, yi in enumerate(y):
        h = min(1e-3 * max(yi, 1.0), 0.25 * yi)
        deriv = (-flux(yi + 2 * h) + 8 * flux(yi + h) - 8 * flux(yi - h) + flux(yi - 2 * h)) / (12 * h)
        gain, _ = integrate.quad(
            lambda z: m.rate(z) * law.pdf(z) * m.hbar.pdf(yi - z), 0.0, yi, epsabs=1e-14, epsrel=1e-12, limit=200
        )
        out[i] = deriv + gain - m.rate(yi) * law.pdf(yi)
    return out


# --------------------------------------------------------------------------
# finite-volume solver
# --------------------------------------------------------------------------


class _Operator:
    """Semi-discrete right-hand side on uniform cells of ``[0, y_max]``.

    Drift: first-order upwind fluxes ``-g2 y v`` (velocity points to zero).
    Bursts: mass of cell ``j`` sits at its centre and lands in cell ``i`` with
    the exact cell probability of the burst law; overshoot past ``y_max`` is
    kept in the last cell so total mass is conserved.
    """

    def __init__(self, edges: np.ndarray, m: ReducedJumpModel):
        self.edges = np.asarray(edges, dtype=np.float64)
        n = self.edges.size - 1
        self.n = n
        self.dy = float(self.edges[1] - self.edges[0])
        if not np.allclose(np.diff(self.edges), self.dy, rtol=1e-9, atol=0):
            raise DomainError("solver needs uniform cells")
        if self.edges[0] != 0.0:
            raise DomainError("grid must start at 0")
        centers = 0.5 * (self.edges[1:] + self.edges[:-1])
        self.g2 = m.gamma2
        self.phi = np.asarray(m.rate(centers), dtype=np.float64)
        # P(burst lands d cells up) for a source at a cell centre
        d = np.arange(n)
        cdf = m.hbar.cdf
        upper = np.asarray(cdf((d + 0.5) * self.dy), dtype=np.float64)
        lower = np.where(d > 0, np.asarray(cdf((d - 0.5) * self.dy), dtype=np.float64), 0.0)
        self.kernel = upper - lower
        # probability that a burst from cell j overshoots the last cell
        self.overshoot = 1.0 - upper[::-1]
        size = 2 * n
        self._kernel_fft = np.fft.rfft(self.kernel, size)
        self._fft_size = size
        self.left_edges = self.edges[:-1]
        self.right_edges = self.edges[1:]

    @property
    def max_stable_dt(self) -> float:
        return 1.0 / (self.g2 * self.edges[-1] / self.dy + float(self.phi.max()))

    def __call__(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        # inflow from the right neighbour minus outflow through the left edge
        outflow = self.g2 * self.left_edges * v
        out[:] = -outflow
        out[:-1] += outflow[1:]
        out /= self.dy
        src = self.phi * v
        gain = np.fft.irfft(np.fft.rfft(src, self._fft_size) * self._kernel_fft, self._fft_size)[: self.n]
        gain[-1] += np.dot(self.overshoot, src)
        out += gain - src
        return out

    def matrix(self) -> np.ndarray:
        n = self.n
        L = np.zeros((n, n))
        idx = np.arange(n)
        L[idx, idx] -= self.g2 * self.left_edges / self.dy
        L[idx[:-1], idx[1:]] += self.g2 * self.left_edges[1:] / self.dy
        i, j = np.tril_indices(n)
        L[i, j] += self.kernel[i - j] * self.phi[j]
        L[n - 1, :] += self.overshoot * self.phi
        L[idx, idx] -= self.phi
        return L


def solve_density_pde(
    v0: DensityGrid,
    horizon: float,
    m: ReducedJumpModel,
    t_eval: Optional[Sequence[float]] = None,
    dt: Optional[float] = None,
    cfl: float = 0.9,
    mass_tol: float = 1e-6,
) -> list[DensityGrid]:
    """Evolve a density under the reduced bursting dynamics by forward Euler.

    Snapshots are returned at each time in ``t_eval`` (default: ``horizon``),
    relative to ``v0.t``.  A step larger than the stability limit is reduced
    with a warning.  Raises :class:`NumericalError` if the mass drifts by more
    than ``mass_tol`` per unit time.
    """
    if horizon < 0:
        raise DomainError("horizon must be non-negative")
    op = _Operator(v0.edges, m)
    limit = cfl * op.max_stable_dt
    if dt is None:
        dt = limit
    elif dt > limit:
        warnings.warn(f"time step {dt:g} exceeds the stability limit {limit:g}; reducing", RuntimeWarning)
        dt = limit
    targets = np.asarray([horizon] if t_eval is None else t_eval, dtype=np.float64)
    if np.any(np.diff(targets) < 0) or np.any(targets < 0) or np.any(targets > horizon):
        raise DomainError("t_eval must be sorted within [0, horizon]")
    v = v0.values.astype(np.float64).copy()
    mass0 = float(np.sum(v) * op.dy)
    t = 0.0
    snaps = []
    for target in targets:
        while t < target:
            step = min(dt, target - t)
            if target - (t + step) < 1e-12 * max(1.0, target):
                step = target - t
            v = v + step * op(v)
            t = t + step if t + step < target else float(target)
        drift = abs(float(np.sum(v) * op.dy) - mass0)
        if drift > mass_tol * max(t, 1.0):
            raise NumericalError(f"mass drifted by {drift:.3e} by t={t:g}")
        snaps.append(DensityGrid(v0.edges, v.copy(), t=v0.t + t))
    return snaps


def discrete_steady_state(edges, m: ReducedJumpModel) -> DensityGrid:
    """Normalised null vector of the finite-volume operator (its exact fixed point)."""
    op = _Operator(np.asarray(edges, dtype=np.float64), m)
    L = op.matrix()
    L[-1, :] = op.dy
    rhs = np.zeros(op.n)
    rhs[-1] = 1.0
    v = np.linalg.solve(L, rhs)
    if np.any(v < -1e-12 * np.abs(v).max()):
        raise NumericalError("discrete steady state has negative entries")
    return DensityGrid(op.edges, np.clip(v, 0.0, None))


# --------------------------------------------------------------------------
# distances
# --------------------------------------------------------------------------


def _regrid(src: DensityGrid, edges: np.ndarray) -> np.ndarray:
    cum = np.concatenate(([0.0], np.cumsum(src.values * src.widths)))
    c = np.interp(edges, src.edges, cum, left=0.0, right=cum[-1])
    return np.diff(c) / np.diff(edges)


def density_distance(
    a: DensityGrid,
    b: Union[DensityGrid, StationaryLaw],
    norm: str = "L1",
    regrid: bool = False,
) -> float:
    """Distance between two densities on ``a``'s bins.

    A :class:`StationaryLaw` is bin-averaged onto ``a``'s edges.  A grid with
    different edges is rebinned (mass-conservatively) when ``regrid`` is set
    and rejected otherwise.
    """
    if norm not in NORMS:
        raise DomainError(f"unknown norm {norm!r}; expected one of {NORMS}")
    if isinstance(b, StationaryLaw):
        bv = b.bin_average(a.edges)
    elif b.edges.shape == a.edges.shape and np.allclose(b.edges, a.edges, rtol=1e-12, atol=0):
        bv = b.values
    elif regrid:
        bv = _regrid(b, a.edges)
    else:
        raise DomainError("density grids differ; pass regrid=True to rebin")
    diff = np.abs(a.values - bv)
    w = a.widths
    with np.errstate(over="ignore", invalid="ignore"):
        if norm == "L1":
            out = float(np.sum(diff * w))
        elif norm == "L2":
            out = float(math.sqrt(np.sum(diff**2 * w)))
        else:
            out = float(diff.max())
    if not math.isfinite(out):
        raise NumericalError(f"{norm} distance is not finite")
    return out
