"""Quadrature references for the scalar GAMP channels.

Circular ``CN(m, v)`` factors into independent real and imaginary
``N(., v/2)`` parts, so every complex moment below is a product or sum of
1-D integrals evaluated with ``scipy.integrate.quad``.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr

QUAD = dict(epsabs=1e-13, epsrel=1e-11, limit=200)


def _log_normal(u, m, var):
    return -((u - m) ** 2) / (2 * var) - 0.5 * math.log(2 * math.pi * var)


def _normal(u, m, var):
    return math.exp(_log_normal(u, m, var))


def _gauss_moments(log_weight, centre, width, lo=None, hi=None):
    """``(top, int w, int u w, int u^2 w)`` with ``w = exp(log_weight - top)``
    over ``[lo, hi]`` (default ``centre +- 12 width``); ``top`` keeps the
    integrands in range."""
    lo = centre - 12 * width if lo is None else lo
    hi = centre + 12 * width if hi is None else hi
    grid = np.linspace(lo, hi, 4001)
    vals = log_weight(grid)
    peak = float(grid[int(np.argmax(vals))])
    top = float(vals.max())
    step = grid[1] - grid[0]
    # breakpoints must lie strictly inside the interval
    pts = sorted(p for p in {centre, peak - step, peak + step, 0.0} if lo < p < hi)
    # moments about the peak avoid cancellation in the variance
    c = []
    for k in range(3):
        f = lambda u, k=k: (u - peak) ** k * math.exp(float(log_weight(u)) - top)  # noqa: E731
        c.append(integrate.quad(f, lo, hi, points=pts or None, **QUAD)[0])
    m0, m1 = c[0], c[1] + peak * c[0]
    m2 = c[2] + 2 * peak * c[1] + peak * peak * c[0]
    return top, m0, m1, m2


def gm_input_moments(r, mu_r, eta, weights, means, variances):
    """Posterior mean, variance and evidence of ``x`` under
    ``(1-eta) delta + eta sum_l w_l CN(theta_l, phi_l)`` with ``r = x + CN(0, mu_r)``."""
    spike = (1 - eta) * math.exp(-abs(r) ** 2 / mu_r) / (math.pi * mu_r)
    total, first, second = spike, 0j, 0.0
    for w, th, ph in zip(weights, means, variances):
        parts = []
        for rc, tc in ((r.real, th.real), (r.imag, th.imag)):
            width = math.sqrt(min(ph, mu_r) / 2)
            centre = (tc * mu_r + rc * ph) / (mu_r + ph)
            log_w = lambda u, rc=rc, tc=tc: (  # noqa: E731
                _log_normal(u, tc, ph / 2) + _log_normal(rc, u, mu_r / 2)
            )
            top, m0, m1, m2 = _gauss_moments(log_w, centre, width)
            scale = math.exp(top)
            parts.append((m0 * scale, m1 * scale, m2 * scale))
        (z0, z1, z2), (i0, i1, i2) = parts
        z = eta * w * z0 * i0
        total += z
        first += z * complex(z1 / z0, i1 / i0)
        second += z * (z2 / z0 + i2 / i0)
    mean = first / total
    return mean, second / total - abs(mean) ** 2, math.log(total)


def probit_output_moments(y, p, mu_p, noise):
    """Posterior mean and variance of ``z ~ CN(p, mu_p)`` given ``y = Q(z + w)``."""
    mean, var = 0j, 0.0
    for unit, s, m in ((1, np.sign(y.real) or 1.0, p.real), (1j, np.sign(y.imag) or 1.0, p.imag)):
        sd = math.sqrt(mu_p / 2)
        log_w = lambda u: _log_normal(u, m, sd * sd) + log_ndtr(s * u / math.sqrt(noise / 2))  # noqa: E731
        # a contradicted sign pulls the mass towards zero, away from m
        span = 12 * (sd + math.sqrt(noise / 2))
        _, z0, z1, z2 = _gauss_moments(log_w, m, sd, min(m, 0.0) - span, max(m, 0.0) + span)
        mean += unit * z1 / z0
        var += z2 / z0 - (z1 / z0) ** 2
    return mean, var


def probit_noise_second_moment(y, p, mu_p, noise):
    """``E[|w|^2 | y]`` by 2-D quadrature over ``(z, w)`` per real part."""
    out = 0.0
    for s, m in ((np.sign(y.real) or 1.0, p.real), (np.sign(y.imag) or 1.0, p.imag)):
        sz, sw = math.sqrt(mu_p / 2), math.sqrt(noise / 2)

        def dens(w, z, k):
            if s * (z + w) <= 0:
                return 0.0
            return w**k * _normal(z, m, sz * sz) * _normal(w, 0, sw * sw)

        def inner(z, k):
            # integrate w over the half-line where sign(z + w) = s
            lo, hi = (-z, -z + 40 * sw + 40 * sz) if s > 0 else (-z - 40 * sw - 40 * sz, -z)
            lo, hi = max(lo, -40 * sw), min(hi, 40 * sw)
            if lo >= hi:
                return 0.0
            return integrate.quad(dens, lo, hi, args=(z, k), epsabs=1e-13, epsrel=1e-11)[0]

        zs = (m - 40 * sz, m + 40 * sz)
        p0 = integrate.quad(inner, *zs, args=(0,), epsabs=1e-13, epsrel=1e-11, limit=200)[0]
        p2 = integrate.quad(inner, *zs, args=(2,), epsabs=1e-13, epsrel=1e-11, limit=200)[0]
        out += p2 / p0
    return out
