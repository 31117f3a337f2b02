"""Pure-Python path kernel.

This module is the reference implementation of the path simulation; the
compiled kernel in ``_kernels.pyx`` mirrors it statement for statement so
that both produce bit-identical output for the same seed. Keep the two in
sync: every random draw happens in the same order and every floating point
expression is written the same way.

Positions are encoded as ``(kind, id, x)`` with ``kind`` one of
:data:`VERTEX`, :data:`EDGE`, :data:`DEAD`; observations that were never
reached (a hitting run stopped first) are :data:`UNOBSERVED`.
"""

from __future__ import annotations

import math

import numpy as np

# state kinds
VERTEX, EDGE, DEAD, UNOBSERVED = 0, 1, 2, 3
# vertex classes
TRAP, HOLDING, INSTANT = 0, 1, 2
# edge types
EXTERNAL, INTERNAL = 0, 1
# observation modes
FIXED, EXPONENTIAL = 0, 1

# indices into the constants vector
J_T, J_K, J_PRIGHT, J_INV_SQRT_T, C_PI, C_2_OVER_PI, C_HALF_PI2 = range(7)
COS_SPLIT = 0.25  # unit-radius time above which the eigenfunction proposal is used
N_COS = 6  # odd modes 1, 3, ..., 11
N_IMAGES = 4


def sampler_constants() -> np.ndarray:
    t = 0.64
    k = math.pi * math.pi / 8.0
    p = (4.0 / math.pi) * math.exp(-k * t)
    q = 2.0 * math.erfc(1.0 / math.sqrt(2.0 * t))
    return np.array([t, k, p / (p + q), 1.0 / math.sqrt(t), math.pi, 2.0 / math.pi,
                     math.pi * math.pi / 2.0])


def path_stream(seed: int, path: int) -> np.random.Generator:
    """Independent reproducible stream for one path."""
    return np.random.Generator(np.random.Philox(key=seed, counter=path << 128))


# -- primitive samplers --------------------------------------------------------------

def _a_n(n, x, c):
    m = n + 0.5
    if x > c[J_T]:
        return c[C_PI] * m * math.exp(-(m * m) * c[C_HALF_PI2] * x)
    r = c[C_2_OVER_PI] / x
    return c[C_PI] * m * (r * math.sqrt(r)) * math.exp(-2.0 * (m * m) / x)


def sample_jstar(rng, c) -> float:
    """Exit time of standard Brownian motion from (-1, 1) started at 0.

    Alternating-series rejection against the two-piece envelope built from
    the leading series term (exponential on the right, Levy on the left).
    """
    t = c[J_T]
    while True:
        if rng.random() < c[J_PRIGHT]:
            x = t + rng.standard_exponential() / c[J_K]
        else:
            while True:
                e1 = rng.standard_exponential()
                e2 = rng.standard_exponential()
                if e1 * e1 <= 2.0 * e2 / t:
                    break
            d = 1.0 + t * e1
            x = t / (d * d)
        s = _a_n(0, x, c)
        y = rng.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _a_n(n, x, c)
                if y <= s:
                    return x
            else:
                s += _a_n(n, x, c)
                if y > s:
                    break


def sample_fpt(rng, d) -> float:
    """Level-``d`` passage time of standard Brownian motion: d^2 / Z^2."""
    z = rng.standard_normal()
    return (d * d) / (z * z)


def _cos_ratio(y, sigma, c):
    """Killed-density / first-mode proposal ratio on (-1, 1), and its bound."""
    base = math.cos(0.5 * c[C_PI] * y)
    num = 1.0
    bound = 1.0
    for j in range(1, N_COS):
        k = 2 * j + 1
        w = math.exp(-((k * k - 1) * c[C_HALF_PI2] * 0.25) * sigma)
        num += w * (math.cos(0.5 * c[C_PI] * k * y) / base)
        bound += w * k
    return num, bound


def sample_survivor_ball(rng, sigma, c) -> float:
    """Position at time ``sigma`` of Brownian motion from 0 conditioned to
    stay in (-1, 1)."""
    if sigma >= COS_SPLIT:
        while True:
            y = c[C_2_OVER_PI] * math.asin(2.0 * rng.random() - 1.0)
            num, bound = _cos_ratio(y, sigma, c)
            if rng.random() * bound <= num:
                return y
    sd = math.sqrt(sigma)
    while True:
        y = sd * rng.standard_normal()
        if y <= -1.0 or y >= 1.0:
            continue
        w = 1.0
        for k in range(1, N_IMAGES + 1):
            sgn = -1.0 if k % 2 == 1 else 1.0
            w += sgn * (math.exp(-2.0 * k * (k - y) / sigma) + math.exp(-2.0 * k * (k + y) / sigma))
        if rng.random() <= w:
            return y


def sample_survivor_halfline(rng, x, s) -> float:
    """Position at time ``s`` of Brownian motion from ``x > 0`` conditioned
    not to hit 0."""
    sd = math.sqrt(s)
    while True:
        y = x + sd * rng.standard_normal()
        if y <= 0.0:
            continue
        if rng.random() <= -math.expm1(-2.0 * x * y / s):
            return y


# -- path loop -----------------------------------------------------------------------

def run_paths(model, n_paths, seed, path_offset, start_kind, start_id, start_x, eps,
              obs_mode, obs_times, rate, n_marks, horizon, target, consts):
    """Simulate ``n_paths`` independent paths and return the observation arrays.

    ``model`` is the tuple produced by :func:`metricbm.mc.engine.model_arrays`.
    With ``obs_mode == FIXED`` every path is observed at ``obs_times``;
    with ``EXPONENTIAL`` each path draws ``n_marks`` sorted Exp(``rate``)
    times first. ``target >= 0`` stops a path when it reaches that vertex
    (recorded in ``hit``); ``horizon`` ends paths that have no observations
    left.
    """
    (vclass, vrate, vkinv, vsticky, rptr, rcum, redge, rorig,
     etype, elen, etail, ehead) = model
    m = len(obs_times) if obs_mode == FIXED else n_marks
    obs_kind = np.full((n_paths, m), UNOBSERVED, dtype=np.int8)
    obs_id = np.full((n_paths, m), -1, dtype=np.int32)
    obs_x = np.zeros((n_paths, m))
    obs_t = np.zeros((n_paths, m))
    hit = np.full(n_paths, math.inf)
    death = np.full(n_paths, math.inf)
    steps = np.zeros(n_paths, dtype=np.int64)
    eps2 = eps * eps
    c = consts

    for p in range(n_paths):
        rng = path_stream(seed, path_offset + p)
        times = obs_t[p]
        if obs_mode == FIXED:
            for j in range(m):
                times[j] = obs_times[j]
        else:
            acc = 0.0
            for j in range(m):
                acc += rng.standard_exponential() / ((m - j) * rate)
                times[j] = acc
        kind, ident, x = start_kind, start_id, start_x
        t = 0.0
        j = 0
        nstep = 0
        while True:
            if j < m:
                s_next = times[j]
                is_obs = True
            elif target >= 0 and t < horizon:
                s_next = horizon
                is_obs = False
            else:
                break
            nstep += 1
            if kind == DEAD:
                while j < m:
                    obs_kind[p, j] = DEAD
                    j += 1
                break
            if kind == VERTEX:
                v = ident
                if v == target:
                    hit[p] = t
                    break
                cls = vclass[v]
                if cls == TRAP:
                    while j < m:
                        obs_kind[p, j] = VERTEX
                        obs_id[p, j] = v
                        j += 1
                    break
                if cls == HOLDING:
                    tau = rng.standard_exponential() / vrate[v]
                    killed = True
                else:
                    loc = eps * rng.standard_exponential()
                    killed = False
                    if vkinv[v] > 0.0:
                        ka = rng.standard_exponential() * vkinv[v]
                        if ka < loc:
                            killed = True
                    dur = eps2 * sample_jstar(rng, c)
                    if killed:
                        tau = vsticky[v] * ka + dur * (ka / loc)
                    else:
                        tau = vsticky[v] * loc + dur
                        u = rng.random()
                        k = rptr[v]
                        while k < rptr[v + 1] - 1 and u >= rcum[k]:
                            k += 1
                t_end = t + tau
                while j < m and times[j] < t_end:
                    obs_kind[p, j] = VERTEX
                    obs_id[p, j] = v
                    j += 1
                t = t_end
                if killed:
                    kind = DEAD
                    death[p] = t
                else:
                    kind = EDGE
                    ident = redge[k]
                    x = eps if rorig[k] else elen[ident] - eps
                continue
            # on an edge
            e = ident
            s = s_next - t
            if etype[e] == EXTERNAL:
                tau = sample_fpt(rng, x)
                if tau < s:
                    t += tau
                    kind, ident = VERTEX, etail[e]
                    continue
                if is_obs:
                    x = sample_survivor_halfline(rng, x, s)
                    obs_kind[p, j] = EDGE
                    obs_id[p, j] = e
                    obs_x[p, j] = x
                    j += 1
                t = s_next
                continue
            lo = x
            hi = elen[e] - x
            r = lo if lo < hi else hi
            r2 = r * r
            tau = r2 * sample_jstar(rng, c)
            if tau < s:
                t += tau
                if rng.random() < 0.5:
                    if r == lo:
                        kind, ident = VERTEX, etail[e]
                    else:
                        x = x - r
                else:
                    if r == hi:
                        kind, ident = VERTEX, ehead[e]
                    else:
                        x = x + r
                continue
            if is_obs:
                x = x + r * sample_survivor_ball(rng, s / r2, c)
                obs_kind[p, j] = EDGE
                obs_id[p, j] = e
                obs_x[p, j] = x
                j += 1
            t = s_next
        steps[p] = nstep
    return obs_kind, obs_id, obs_x, obs_t, hit, death, steps
