"""Pure numpy implementation of the time stepper.

Same contract as the compiled ``_kernels.advance``.  It additionally handles
the spectral backend (``backend=2``) and custom speeds via ``custom``, a
callable ``(kappa, lam) -> (phi, phi_kappa)``.
"""

import numpy as np

DONE, STOP_KAPPA, STOP_AREA, LOST_CONVEXITY, NONFINITE = range(5)
GAUSS = 1


def _speed(k, l, n, kinds, rs, ws):
    f = np.zeros_like(k)
    fk = np.zeros_like(k)
    for kind, r, wt in zip(kinds, rs, ws):
        if kind == GAUSS:
            g = np.power(k * np.power(l, n - 1), 1.0 / n)
            f += wt * g
            fk += wt * g / (n * k)
        elif r == 1.0:
            f += wt * (k + (n - 1) * l)
            fk += wt
        elif r == 2.0:
            p = np.sqrt(k * k + (n - 1) * l * l)
            f += wt * p
            fk += wt * k / p
        else:
            m = np.maximum(k, l)
            p = m * np.power(np.power(k / m, r) + (n - 1) * np.power(l / m, r), 1.0 / r)
            f += wt * p
            fk += wt * np.power(k / p, r - 1.0)
    return f, fk


def _derivs(s, backend):
    N = s.size
    d = 2 * np.pi / N
    sp, sm = np.roll(s, -1), np.roll(s, 1)
    if backend == 0:
        rho = (sp + sm - 2.0 * np.cos(d) * s) * (1.0 / (2.0 * (1.0 - np.cos(d))))
        ds = (sp - sm) * (1.0 / (2.0 * np.sin(d)))
    elif backend == 1:
        spp, smm = np.roll(s, -2), np.roll(s, 2)
        rho = (-spp + 16.0 * sp - 30.0 * s + 16.0 * sm - smm) * (1.0 / (12.0 * d * d)) + s
        ds = (-spp + 8.0 * sp - 8.0 * sm + smm) * (1.0 / (12.0 * d))
    else:
        k = np.fft.rfftfreq(N, 1.0 / N)
        fs = np.fft.rfft(s)
        rho = np.fft.irfft(-(k * k) * fs, N) + s
        ik = 1j * k
        ik[-1] = 0.0
        ds = np.fft.irfft(ik * fs, N)
    return rho, ds


def _rate(s, n, backend, kinds, rs, ws, w, c, sn, custom):
    rho, ds = _derivs(s, backend)
    bad = ~(rho > 0)
    if bad.any():
        return LOST_CONVEXITY, int(np.argmax(bad)), None, rho, 0.0, 0.0
    k = 1.0 / rho
    y = -s * c + ds * sn
    blend = w > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(blend, k * (1.0 - w) + (-c / y) * w, k)
    bad = ~((lam >= 0) & np.isfinite(lam))
    if bad.any():
        return NONFINITE, int(np.argmax(bad)), None, rho, 0.0, 0.0
    if custom is None:
        phi, phik = _speed(k, lam, n, kinds, rs, ws)
    else:
        phi, phik = custom(k, lam)
    bad = ~np.isfinite(phi)
    if bad.any():
        return NONFINITE, int(np.argmax(bad)), None, rho, 0.0, 0.0
    return DONE, -1, phi, rho, float(np.max(phik * k * k)), float(np.max(k))


def _symmetrize(s):
    N = s.size
    j = np.arange(N)
    u = s + s[(N - j) % N]
    return 0.25 * (u + u[(N // 2 - j) % N])


def advance(sigma, t, max_steps, t_end, n, kinds, rs, ws, backend, w, c, sn,
            cfl, symmetric, stop_kappa, stop_area, dt_fixed, custom=None):
    N = sigma.size
    d = 2.0 * np.pi / N
    steps = 0
    status = DONE
    node = -1
    dt = 0.0
    s = sigma
    while steps < max_steps:
        if t_end == t_end and t >= t_end:
            break
        status, node, f, rho, maxdiff, maxk = _rate(s, n, backend, kinds, rs, ws, w, c, sn, custom)
        if status != DONE:
            break
        if maxk > stop_kappa:
            status = STOP_KAPPA
            break
        if 0.5 * d * float(np.sum(s * rho)) < stop_area:
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
        status, node, f, _, _, _ = _rate(s - 0.5 * dt * f, n, backend, kinds, rs, ws, w, c, sn, custom)
        if status != DONE:
            break
        s = s - dt * f
        if symmetric:
            s = _symmetrize(s)
        t += dt
        steps += 1
    sigma[:] = s
    return t, steps, status, node, dt
