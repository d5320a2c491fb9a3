# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time stepping for the support-function flow.

Mirrors ``_kernels_py.advance`` operation for operation so both paths agree to
rounding.  Only speeds built from power-mean and Gauss-root terms are handled
here; anything else goes through the numpy path.
"""

import numpy as np

from libc.math cimport cos, isfinite, pow, sin, sqrt, M_PI

cdef enum:
    GAUSS = 1

cdef enum:
    DONE = 0
    STOP_KAPPA = 1
    STOP_AREA = 2
    LOST_CONVEXITY = 3
    NONFINITE = 4


cdef inline void _speed(double k, double l, int n, long[::1] kinds, double[::1] rs,
                        double[::1] ws, int nterms, double* phi, double* phik) noexcept nogil:
    cdef double f = 0.0, fk = 0.0, m, p, r, g
    cdef int i
    for i in range(nterms):
        if kinds[i] == GAUSS:
            g = pow(k * pow(l, n - 1), 1.0 / n)
            f += ws[i] * g
            fk += ws[i] * g / (n * k)
        else:
            r = rs[i]
            if r == 1.0:
                f += ws[i] * (k + (n - 1) * l)
                fk += ws[i]
            elif r == 2.0:
                p = sqrt(k * k + (n - 1) * l * l)
                f += ws[i] * p
                fk += ws[i] * k / p
            else:
                m = k if k > l else l
                p = m * pow(pow(k / m, r) + (n - 1) * pow(l / m, r), 1.0 / r)
                f += ws[i] * p
                fk += ws[i] * pow(k / p, r - 1.0)
    phi[0] = f
    phik[0] = fk


cdef int _rate(const double[::1] s, double[::1] out, double[::1] rho, int N, int n, int backend,
               long[::1] kinds, double[::1] rs, double[::1] ws, int nterms,
               const double[::1] w, const double[::1] c, const double[::1] sn,
               double* maxdiff, double* maxk, int* node) noexcept nogil:
    """out = phi(sigma); also max(phi_k kappa^2) and max kappa.  Returns a status."""
    cdef double d = 2.0 * M_PI / N
    cdef double cd = cos(d)
    cdef double a2 = 1.0 / (2.0 * (1.0 - cd))
    cdef double b1 = 1.0 / (2.0 * sin(d))
    cdef double inv12 = 1.0 / (12.0 * d * d)
    cdef double inv12d = 1.0 / (12.0 * d)
    cdef int j, jm, jp, jmm, jpp
    cdef double r, k, ds, y, lam, phi, phik, q
    maxdiff[0] = 0.0
    maxk[0] = 0.0
    for j in range(N):
        jm = j - 1 if j > 0 else N - 1
        jp = j + 1 if j < N - 1 else 0
        if backend == 0:
            r = (s[jp] + s[jm] - 2.0 * cd * s[j]) * a2
            ds = (s[jp] - s[jm]) * b1
        else:
            jmm = jm - 1 if jm > 0 else N - 1
            jpp = jp + 1 if jp < N - 1 else 0
            r = (-s[jpp] + 16.0 * s[jp] - 30.0 * s[j] + 16.0 * s[jm] - s[jmm]) * inv12 + s[j]
            ds = (-s[jpp] + 8.0 * s[jp] - 8.0 * s[jm] + s[jmm]) * inv12d
        rho[j] = r
        if not r > 0.0:
            node[0] = j
            return LOST_CONVEXITY
        k = 1.0 / r
        if w[j] > 0.0:
            y = -s[j] * c[j] + ds * sn[j]
            lam = k * (1.0 - w[j]) + (-c[j] / y) * w[j]
        else:
            lam = k
        if not (lam >= 0.0 and isfinite(lam)):
            node[0] = j
            return NONFINITE
        _speed(k, lam, n, kinds, rs, ws, nterms, &phi, &phik)
        if not isfinite(phi):
            node[0] = j
            return NONFINITE
        out[j] = phi
        q = phik * k * k
        if q > maxdiff[0]:
            maxdiff[0] = q
        if k > maxk[0]:
            maxk[0] = k
    return DONE


cdef void _symmetrize(double[::1] s, double[::1] tmp, int N) noexcept nogil:
    # pairwise sums so mirrored nodes come out bitwise equal
    cdef int j, h = N // 2
    for j in range(N):
        tmp[j] = s[j] + s[(N - j) % N]
    for j in range(N):
        s[j] = 0.25 * (tmp[j] + tmp[(h - j + N) % N])


def advance(double[::1] sigma, double t, long max_steps, double t_end, int n,
            long[::1] kinds, double[::1] rs, double[::1] ws, int backend,
            const double[::1] w, const double[::1] c, const double[::1] sn,
            double cfl, bint symmetric, double stop_kappa, double stop_area,
            double dt_fixed):
    """Advance ``sigma`` in place by at most ``max_steps`` RK2 midpoint steps.

    Returns ``(t, steps, status, node, dt_last)``.  Stop criteria are evaluated
    on the state before each step, so a stopped state is never stepped.
    """
    cdef int N = sigma.shape[0]
    cdef int nterms = kinds.shape[0]
    cdef double d = 2.0 * M_PI / N
    cdef double[::1] f = np.empty(N)
    cdef double[::1] half = np.empty(N)
    cdef double[::1] rho = np.empty(N)
    cdef double[::1] tmp = np.empty(N)
    cdef double maxdiff, maxk, area, dt = 0.0, md2, mk2
    cdef long steps = 0
    cdef int status = DONE, node = -1, j
    with nogil:
        while steps < max_steps:
            if t_end == t_end and t >= t_end:
                break
            status = _rate(sigma, f, rho, N, n, backend, kinds, rs, ws, nterms, w, c, sn,
                           &maxdiff, &maxk, &node)
            if status != DONE:
                break
            if maxk > stop_kappa:
                status = STOP_KAPPA
                break
            area = 0.0
            for j in range(N):
                area += sigma[j] * rho[j]
            area *= 0.5 * d
            if area < stop_area:
                status = STOP_AREA
                break
            if dt_fixed > 0.0:
                dt = dt_fixed
            elif maxdiff > 0.0:
                dt = cfl * d * d / maxdiff
            else:
                status = NONFINITE
                break
            if t_end == t_end and t + dt > t_end:
                dt = t_end - t
            for j in range(N):
                half[j] = sigma[j] - 0.5 * dt * f[j]
            status = _rate(half, f, rho, N, n, backend, kinds, rs, ws, nterms, w, c, sn,
                           &md2, &mk2, &node)
            if status != DONE:
                break
            for j in range(N):
                sigma[j] -= dt * f[j]
            if symmetric:
                _symmetrize(sigma, tmp, N)
            t += dt
            steps += 1
    return t, steps, status, node, dt
