"""Fused elementwise kernels for the GAMP scalar channels (numba)."""

import math

import numpy as np
from numba import njit, vectorize

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT1_2 = 1.0 / math.sqrt(2.0)


@njit(cache=True)
def _mills_scalar(c):
    # phi(c) / Phi(c)
    if c > -35.0:
        return _INV_SQRT_2PI * math.exp(-0.5 * c * c) / (0.5 * math.erfc(-c * _SQRT1_2))
    x = -c
    frac = x
    for k in range(60, 0, -1):
        frac = x + k / frac
    return frac


@vectorize(["float64(float64)"], cache=True)
def mills(c):
    return _mills_scalar(c)


@njit(cache=True)
def probit_moments(y, p, mu_p, noise, z_out, var_out):
    """Complex 1-bit channel, real and imaginary parts independent."""
    v = 0.5 * mu_p
    tot = v + 0.5 * noise
    scale = math.sqrt(tot)
    g = v / scale
    h = v * v / tot
    for i in range(y.shape[0]):
        s_re = 1.0 if y[i].real >= 0 else -1.0
        s_im = 1.0 if y[i].imag >= 0 else -1.0
        m_re = p[i].real
        m_im = p[i].imag
        c = s_re * m_re / scale
        lam = _mills_scalar(c)
        zr = m_re + s_re * g * lam
        vr = v - h * lam * (c + lam)
        c = s_im * m_im / scale
        lam = _mills_scalar(c)
        zi = m_im + s_im * g * lam
        vi = v - h * lam * (c + lam)
        z_out[i] = complex(zr, zi)
        var_out[i] = max(vr, 0.0) + max(vi, 0.0)


@njit(cache=True)
def probit_moments_hetero(y, p, mu_p, noise, z_out, var_out):
    """As :func:`probit_moments` with a per-measurement noise variance."""
    v = 0.5 * mu_p
    h0 = v * v
    for i in range(y.shape[0]):
        tot = v + 0.5 * noise[i]
        scale = math.sqrt(tot)
        g = v / scale
        h = h0 / tot
        s_re = 1.0 if y[i].real >= 0 else -1.0
        s_im = 1.0 if y[i].imag >= 0 else -1.0
        c = s_re * p[i].real / scale
        lam = _mills_scalar(c)
        zr = p[i].real + s_re * g * lam
        vr = v - h * lam * (c + lam)
        c = s_im * p[i].imag / scale
        lam = _mills_scalar(c)
        zi = p[i].imag + s_im * g * lam
        vi = v - h * lam * (c + lam)
        z_out[i] = complex(zr, zi)
        var_out[i] = max(vr, 0.0) + max(vi, 0.0)


@njit(cache=True)
def gm_moments(r, mu_r, log_prior_slab, log_prior_spike, means, variances,
               x_out, var_out, pi_out, beta_out, gamma_out, log_zeta_out):
    """Bernoulli-GM posterior for ``r = x + CN(0, mu_r)`` (scalar ``mu_r``)."""
    n_l = means.shape[0]
    tot = np.empty(n_l)
    gain = np.empty(n_l)
    base = np.empty(n_l)
    for l in range(n_l):
        tot[l] = variances[l] + mu_r
        gain[l] = variances[l] / tot[l]
        base[l] = log_prior_slab[l] - math.log(math.pi * tot[l])
    spike_base = log_prior_spike - math.log(math.pi * mu_r)
    ls = np.empty(n_l)
    for i in range(r.shape[0]):
        ri = r[i]
        a2 = ri.real * ri.real + ri.imag * ri.imag
        lsp = spike_base - a2 / mu_r
        top = lsp
        for l in range(n_l):
            d = ri - means[l]
            ls[l] = base[l] - (d.real * d.real + d.imag * d.imag) / tot[l]
            if ls[l] > top:
                top = ls[l]
        slab = 0.0
        for l in range(n_l):
            ls[l] = math.exp(ls[l] - top)
            slab += ls[l]
        spike = math.exp(lsp - top)
        total = slab + spike
        log_zeta_out[i] = top + math.log(total)
        pi = slab / total
        pi_out[i] = pi
        mean = 0j
        m2 = 0.0
        for l in range(n_l):
            b = ls[l] / slab
            gm = means[l] + gain[l] * (ri - means[l])
            beta_out[i, l] = b
            gamma_out[i, l] = gm
            mean += b * gm
            m2 += b * (gain[l] * mu_r + gm.real * gm.real + gm.imag * gm.imag)
        xh = pi * mean
        x_out[i] = xh
        var_out[i] = max(pi * m2 - (xh.real * xh.real + xh.imag * xh.imag), 0.0)


@njit(cache=True)
def admm_split_step(y, observed, y_hat, dual, mu, gamma, masked, y_bar, pre):
    """Elementwise half of one ADMM iteration, in place.

    Writes ``y_bar = P_inf(target)``, updates ``dual`` and writes the
    nuclear-projection input ``pre = y_bar - 2 dual / (2 + mu)``.
    """
    a = 1.0 / (4.0 + mu)
    b = 1.0 / (2.0 + mu)
    g2 = gamma * gamma
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            f = dual[i, j]
            yh = y_hat[i, j]
            if observed[i, j] or not masked:
                t = (2.0 * y[i, j] + 2.0 * f + (2.0 + mu) * yh) * a
            else:
                t = (2.0 * f + (2.0 + mu) * yh) * b
            mag2 = t.real * t.real + t.imag * t.imag
            if mag2 > g2:
                t = t * (gamma / math.sqrt(mag2))
            y_bar[i, j] = t
            f = f + mu * (yh - t)
            dual[i, j] = f
            pre[i, j] = t - 2.0 * f * b


@njit(cache=True)
def admm_norms(y, observed, y_hat, y_bar):
    """Observed-entry residual and feasibility gap; NaN on a non-finite iterate."""
    res = 0.0
    gap = 0.0
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            v = y_hat[i, j]
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                return math.nan, math.nan
            d = v - y_bar[i, j]
            gap += d.real * d.real + d.imag * d.imag
            if observed[i, j]:
                d = v - y[i, j]
                res += d.real * d.real + d.imag * d.imag
    return math.sqrt(res), math.sqrt(gap)


@vectorize(["complex128(complex128)", "complex128(float64)"], cache=True)
def quantize(m):
    # sign(0) = +1 on both parts
    re = _SQRT1_2 if m.real >= 0 else -_SQRT1_2
    im = _SQRT1_2 if m.imag >= 0 else -_SQRT1_2
    return complex(re, im)
