"""Compiled event loop shared by the two-dimensional and the reduced simulators.

Rates and jump laws arrive as ``(code, params)`` pairs produced by
:mod:`burstpdmp.model`.  Random numbers come from a ``numpy.random.Generator``
passed into the kernel, so a kernel run consumes exactly the same stream as
the equivalent pure-numpy code would.
"""

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_SAFETY_CAP = 1


@njit(cache=True, nogil=True)
def rate_value(code, p, y):
    if code == 0:
        return p[0]
    if code == 1:
        yn = y ** p[4]
        if math.isinf(yn):
            return p[0] * p[1] / p[3]
        return p[0] * (1.0 + p[1] * yn) / (p[2] + p[3] * yn)
    # tabulated, constant extrapolation
    n = p.shape[0] - 2
    s = (y - p[0]) / p[1]
    if s <= 0.0:
        return p[2]
    if s >= n - 1:
        return p[2 + n - 1]
    k = int(s)
    f = s - k
    return p[2 + k] * (1.0 - f) + p[3 + k] * f


@njit(cache=True, nogil=True)
def sample_jump(code, p, gen):
    if code == 0:
        return p[0] * gen.standard_exponential()
    x0 = p[0]
    dx = p[1]
    n = int(p[2])
    vals = p[3 : 3 + n]
    cdf = p[3 + n : 3 + 2 * n]
    u = gen.random()
    k = np.searchsorted(cdf, u, side="right") - 1
    if k < 0:
        k = 0
    if k > n - 2:
        k = n - 2
    r = u - cdf[k]
    f0 = vals[k]
    a = (vals[k + 1] - f0) / (2.0 * dx)
    disc = f0 * f0 + 4.0 * a * r
    if disc < 0.0:
        disc = 0.0
    denom = f0 + math.sqrt(disc)
    s = 2.0 * r / denom if denom > 0.0 else 0.0
    if s < 0.0:
        s = 0.0
    if s > dx:
        s = dx
    return x0 + k * dx + s


@njit(cache=True, nogil=True)
def transfer_factor(g1, g2, dt):
    """``(exp(-g2 dt) - exp(-g1 dt)) / (g1 - g2)``, stable for any pair of rates."""
    lo = min(g1, g2)
    d = abs(g1 - g2)
    z = -d * dt
    if z == 0.0:
        return dt * math.exp(-lo * dt)
    return math.exp(-lo * dt) * dt * (math.expm1(z) / z)


@njit(cache=True, nogil=True)
def flow(x, y, dt, g1, g2, lam):
    y_new = y * math.exp(-g2 * dt)
    if x != 0.0:
        y_new += lam * x * transfer_factor(g1, g2, dt)
    return x * math.exp(-g1 * dt), y_new


@njit(cache=True, nogil=True)
def _grow(buf, n):
    out = np.empty((buf.shape[0] * 2, buf.shape[1]))
    out[:n] = buf[:n]
    return out


@njit(cache=True, nogil=True)
def run(
    x,
    y,
    t,
    t_end,
    g1,
    g2,
    lam,
    rcode,
    rp,
    rbar,
    jcode,
    jp,
    jump_to_y,
    gen,
    obs_times,
    obs_out,
    record_jumps,
    max_jumps,
    stop_before_jump,
    cap,
):
    """Advance one trajectory from ``(x, y)`` at time ``t`` by thinning.

    Observations at ``obs_times`` (sorted, in ``[t, t_end]``) are written into
    ``obs_out[i] = (x, y)``.  Returns the final state, counters, a status
    code and, when ``record_jumps`` is set, an ``(n, 3)`` array of post-jump
    ``(t, x, y)``.
    """
    n_obs = obs_times.shape[0]
    i_obs = 0
    while i_obs < n_obs and obs_times[i_obs] < t:
        i_obs += 1
    jumps = np.empty((64 if record_jumps else 1, 3))
    n_jumps = 0
    n_prop = 0
    since_jump = 0
    status = STATUS_OK
    while True:
        t_prop = t + gen.standard_exponential() / rbar
        n_prop += 1
        since_jump += 1
        while i_obs < n_obs and obs_times[i_obs] <= t_prop and obs_times[i_obs] <= t_end:
            ox, oy = flow(x, y, obs_times[i_obs] - t, g1, g2, lam)
            obs_out[i_obs, 0] = ox
            obs_out[i_obs, 1] = oy
            i_obs += 1
        if t_prop > t_end:
            x, y = flow(x, y, t_end - t, g1, g2, lam)
            t = t_end
            n_prop -= 1
            break
        x, y = flow(x, y, t_prop - t, g1, g2, lam)
        t = t_prop
        if gen.random() * rbar <= rate_value(rcode, rp, y):
            if stop_before_jump:
                n_jumps += 1
                break
            d = sample_jump(jcode, jp, gen)
            if jump_to_y:
                y += d
            else:
                x += d
            n_jumps += 1
            since_jump = 0
            if record_jumps:
                if n_jumps > jumps.shape[0]:
                    jumps = _grow(jumps, n_jumps - 1)
                jumps[n_jumps - 1, 0] = t
                jumps[n_jumps - 1, 1] = x
                jumps[n_jumps - 1, 2] = y
            if max_jumps >= 0 and n_jumps >= max_jumps:
                break
        elif since_jump >= cap:
            status = STATUS_SAFETY_CAP
            break
    return x, y, t, n_jumps, n_prop, status, jumps[: n_jumps if record_jumps else 0]


@njit(cache=True, nogil=True)
def run_ensemble(
    x0,
    y0,
    t0,
    n_rep,
    g1,
    g2,
    lam,
    rcode,
    rp,
    rbar,
    jcode,
    jp,
    jump_to_y,
    gen,
    obs_times,
    cap,
):
    """Independent replicas from a common initial state; returns ``(n_rep, n_obs, 2)``."""
    n_obs = obs_times.shape[0]
    out = np.empty((n_rep, n_obs, 2))
    t_end = obs_times[n_obs - 1]
    for r in range(n_rep):
        res = run(
            x0, y0, t0, t_end, g1, g2, lam, rcode, rp, rbar, jcode, jp, jump_to_y,
            gen, obs_times, out[r], False, -1, False, cap,
        )
        if res[5] != STATUS_OK:
            return out, res[5]
    return out, STATUS_OK
