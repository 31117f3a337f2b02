# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled path kernel.

Statement-for-statement mirror of ``_pykernel.py``; see that module for the
algorithm. Draws go through the numpy random C API on the same Philox
streams, so both kernels agree bit for bit.
"""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport asin, cos, exp, expm1, sqrt, INFINITY
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_exponential,
    random_standard_normal,
    random_standard_uniform,
)

cnp.import_array()

DEF VERTEX = 0
DEF EDGE = 1
DEF DEAD = 2
DEF UNOBSERVED = 3
DEF TRAP = 0
DEF HOLDING = 1
DEF EXTERNAL = 0
DEF FIXED = 0

DEF J_T = 0
DEF J_K = 1
DEF J_PRIGHT = 2
DEF C_PI = 4
DEF C_2_OVER_PI = 5
DEF C_HALF_PI2 = 6
DEF COS_SPLIT = 0.25
DEF N_COS = 6
DEF N_IMAGES = 4


cdef inline double _a_n(int n, double x, const double[::1] c) noexcept nogil:
    cdef double m = n + 0.5
    cdef double r
    if x > c[J_T]:
        return c[C_PI] * m * exp(-(m * m) * c[C_HALF_PI2] * x)
    r = c[C_2_OVER_PI] / x
    return c[C_PI] * m * (r * sqrt(r)) * exp(-2.0 * (m * m) / x)


cdef double sample_jstar(bitgen_t *rng, const double[::1] c) noexcept nogil:
    cdef double t = c[J_T]
    cdef double x, e1, e2, d, s, y
    cdef int n
    while True:
        if random_standard_uniform(rng) < c[J_PRIGHT]:
            x = t + random_standard_exponential(rng) / c[J_K]
        else:
            while True:
                e1 = random_standard_exponential(rng)
                e2 = random_standard_exponential(rng)
                if e1 * e1 <= 2.0 * e2 / t:
                    break
            d = 1.0 + t * e1
            x = t / (d * d)
        s = _a_n(0, x, c)
        y = random_standard_uniform(rng) * s
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


cdef inline double sample_fpt(bitgen_t *rng, double d) noexcept nogil:
    cdef double z = random_standard_normal(rng)
    return (d * d) / (z * z)


cdef double sample_survivor_ball(bitgen_t *rng, double sigma, const double[::1] c) noexcept nogil:
    cdef double y, base, num, bound, w, sd, sgn
    cdef int j, k
    if sigma >= COS_SPLIT:
        while True:
            y = c[C_2_OVER_PI] * asin(2.0 * random_standard_uniform(rng) - 1.0)
            base = cos(0.5 * c[C_PI] * y)
            num = 1.0
            bound = 1.0
            for j in range(1, N_COS):
                k = 2 * j + 1
                w = exp(-((k * k - 1) * c[C_HALF_PI2] * 0.25) * sigma)
                num += w * (cos(0.5 * c[C_PI] * k * y) / base)
                bound += w * k
            if random_standard_uniform(rng) * bound <= num:
                return y
    sd = sqrt(sigma)
    while True:
        y = sd * random_standard_normal(rng)
        if y <= -1.0 or y >= 1.0:
            continue
        w = 1.0
        for k in range(1, N_IMAGES + 1):
            sgn = -1.0 if k % 2 == 1 else 1.0
            w += sgn * (exp(-2.0 * k * (k - y) / sigma) + exp(-2.0 * k * (k + y) / sigma))
        if random_standard_uniform(rng) <= w:
            return y


cdef double sample_survivor_halfline(bitgen_t *rng, double x, double s) noexcept nogil:
    cdef double sd = sqrt(s)
    cdef double y
    while True:
        y = x + sd * random_standard_normal(rng)
        if y <= 0.0:
            continue
        if random_standard_uniform(rng) <= -expm1(-2.0 * x * y / s):
            return y


def jstar_samples(seed, Py_ssize_t n, const double[::1] consts):
    """``n`` draws of the unit exit time from one stream (for tests)."""
    bg = np.random.Philox(key=seed, counter=0)
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(bg.capsule, "BitGenerator")
    out = np.empty(n)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(n):
        o[i] = sample_jstar(rng, consts)
    return out


def run_paths(model, Py_ssize_t n_paths, seed, path_offset, int start_kind, int start_id,
              double start_x, double eps, int obs_mode, obs_times, double rate, int n_marks,
              double horizon, int target, const double[::1] consts):
    cdef const cnp.int32_t[::1] vclass = model[0]
    cdef const double[::1] vrate = model[1]
    cdef const double[::1] vkinv = model[2]
    cdef const double[::1] vsticky = model[3]
    cdef const cnp.int32_t[::1] rptr = model[4]
    cdef const double[::1] rcum = model[5]
    cdef const cnp.int32_t[::1] redge = model[6]
    cdef const cnp.int8_t[::1] rorig = model[7]
    cdef const cnp.int32_t[::1] etype = model[8]
    cdef const double[::1] elen = model[9]
    cdef const cnp.int32_t[::1] etail = model[10]
    cdef const cnp.int32_t[::1] ehead = model[11]
    cdef const double[::1] c = consts

    cdef const double[::1] fixed_times
    cdef int m
    if obs_mode == FIXED:
        fixed_times = np.ascontiguousarray(obs_times, dtype=np.float64)
        m = fixed_times.shape[0]
    else:
        m = n_marks

    ok = np.full((n_paths, m), UNOBSERVED, dtype=np.int8)
    oi = np.full((n_paths, m), -1, dtype=np.int32)
    ox = np.zeros((n_paths, m))
    ot = np.zeros((n_paths, m))
    hit_a = np.full(n_paths, INFINITY)
    death_a = np.full(n_paths, INFINITY)
    steps_a = np.zeros(n_paths, dtype=np.int64)
    cdef cnp.int8_t[:, ::1] obs_kind = ok
    cdef cnp.int32_t[:, ::1] obs_id = oi
    cdef double[:, ::1] obs_x = ox
    cdef double[:, ::1] obs_t = ot
    cdef double[::1] hit = hit_a
    cdef double[::1] death = death_a
    cdef cnp.int64_t[::1] steps = steps_a

    cdef double eps2 = eps * eps
    cdef bitgen_t *rng
    cdef Py_ssize_t p
    cdef int j, kind, ident, v, cls, e, k
    cdef long nstep
    cdef double x, t, acc, s_next, tau, loc, ka, dur, u, t_end, s, lo, hi, r, r2
    cdef bint is_obs, killed
    cdef object offset = path_offset

    for p in range(n_paths):
        bg = np.random.Philox(key=seed, counter=(offset + p) << 128)
        rng = <bitgen_t *> PyCapsule_GetPointer(bg.capsule, "BitGenerator")
        with nogil:
            if obs_mode == FIXED:
                for j in range(m):
                    obs_t[p, j] = fixed_times[j]
            else:
                acc = 0.0
                for j in range(m):
                    acc += random_standard_exponential(rng) / ((m - j) * rate)
                    obs_t[p, j] = acc
            kind = start_kind
            ident = start_id
            x = start_x
            t = 0.0
            j = 0
            nstep = 0
            ka = 0.0
            k = 0
            while True:
                if j < m:
                    s_next = obs_t[p, j]
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
                        tau = random_standard_exponential(rng) / vrate[v]
                        killed = True
                    else:
                        loc = eps * random_standard_exponential(rng)
                        killed = False
                        if vkinv[v] > 0.0:
                            ka = random_standard_exponential(rng) * vkinv[v]
                            if ka < loc:
                                killed = True
                        dur = eps2 * sample_jstar(rng, c)
                        if killed:
                            tau = vsticky[v] * ka + dur * (ka / loc)
                        else:
                            tau = vsticky[v] * loc + dur
                            u = random_standard_uniform(rng)
                            k = rptr[v]
                            while k < rptr[v + 1] - 1 and u >= rcum[k]:
                                k += 1
                    t_end = t + tau
                    while j < m and obs_t[p, j] < t_end:
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
                e = ident
                s = s_next - t
                if etype[e] == EXTERNAL:
                    tau = sample_fpt(rng, x)
                    if tau < s:
                        t += tau
                        kind = VERTEX
                        ident = etail[e]
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
                    if random_standard_uniform(rng) < 0.5:
                        if r == lo:
                            kind = VERTEX
                            ident = etail[e]
                        else:
                            x = x - r
                    else:
                        if r == hi:
                            kind = VERTEX
                            ident = ehead[e]
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
    return ok, oi, ox, ot, hit_a, death_a, steps_a
