"""EM-GM-GAMP: GAMP with a Bernoulli/Gaussian-mixture prior, 1-bit (or AWGN)
output channel, and EM learning of the prior and noise variance.

All variables are circular complex; ``CN(x; m, v)`` has ``E|x - m|^2 = v``.
The GAMP recursion uses scalar ("uniform") variances so that the mixing
matrix is only touched through forward/adjoint applications.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .config import EmGampParams
from . import _kernels
from .observation import quantize_1bit

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-12


class GampDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class GmPrior:
    """``(1 - eta) delta(x) + eta * sum_l w_l CN(x; theta_l, phi_l)`` plus the
    output noise variance ``noise_var``."""

    eta: float
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    noise_var: float

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_1d(np.asarray(self.means, dtype=complex))
        v = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if not (w.shape == m.shape == v.shape) or w.ndim != 1:
            raise ValueError("weights, means and variances must be equal-length vectors")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"sparsity rate {self.eta} outside [0, 1]")
        if abs(w.sum() - 1.0) > 1e-10 or np.any(w < 0):
            raise ValueError("mixture weights must form a probability vector")
        if np.any(v <= 0) or not self.noise_var > 0:
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def q(self) -> np.ndarray:
        """Flattened hyperparameter vector ``[eta, w, theta, phi, noise_var]``."""
        return np.concatenate(
            [[self.eta], self.weights, self.means, self.variances, [self.noise_var]]
        )

    def second_moment(self) -> float:
        return float(
            self.eta * np.sum(self.weights * (np.abs(self.means) ** 2 + self.variances))
        )

    @classmethod
    def initial(cls, n_components=3, eta=0.1, energy=1.0, noise_var=1.0):
        """Zero means and geometrically spaced variances with
        ``E|x|^2 = energy``."""
        spacing = 10.0 ** np.arange(n_components)
        spacing = spacing / spacing.mean()
        variances = energy / eta * spacing / n_components
        weights = np.full(n_components, 1.0 / n_components)
        # rescale so the mixture second moment is exactly energy / eta
        variances = variances * (energy / eta) / np.sum(weights * variances)
        return cls(eta, weights, np.zeros(n_components), variances, noise_var)


@dataclass(frozen=True, eq=False)
class PosteriorCoeffs:
    pi: np.ndarray  # (N,) support posterior
    beta: np.ndarray  # (N, L) responsibilities
    gamma: np.ndarray  # (N, L) component means
    nu: np.ndarray  # (N, L) component variances
    log_zeta: np.ndarray  # (N,) log normalizer (marginal evidence of r)


def _abs2(z):
    return z.real * z.real + z.imag * z.imag


def _log_cn(x, mean, var):
    return -_abs2(x - mean) / var - np.log(np.pi * var)


def input_moments(r, mu_r, prior: GmPrior):
    """Posterior mean/variance of ``x`` under the GM prior given
    ``r = x + CN(0, mu_r)``.

    Returns ``(x_hat, var, coeffs)``; evidence is combined in the log domain.
    """
    r = np.asarray(r, dtype=complex)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    mu_r = np.asarray(mu_r, dtype=float)
    if np.any(mu_r <= 0):
        raise ValueError("input variance must be positive")
    mu_r = mu_r if mu_r.ndim == 0 else np.broadcast_to(mu_r, r.shape)
    n_l = prior.n_components
    if prior.eta == 0.0:
        zeros = np.zeros(r.shape + (n_l,))
        coeffs = PosteriorCoeffs(
            np.zeros(r.shape), zeros + 1.0 / n_l, zeros.astype(complex), zeros,
            _log_cn(r, 0.0, mu_r),
        )
        out = np.zeros_like(r), np.zeros(r.shape), coeffs
        return (out[0][0], out[1][0], coeffs) if scalar else out

    if np.ndim(mu_r) == 0:
        n = r.size
        x_hat, var, pi, log_zeta = (np.empty(n, complex), np.empty(n), np.empty(n), np.empty(n))
        beta, gamma = np.empty((n, n_l)), np.empty((n, n_l), complex)
        with np.errstate(divide="ignore"):
            log_slab_prior = np.log(prior.eta) + np.log(prior.weights)
            log_spike_prior = float(np.log1p(-prior.eta))
        _kernels.gm_moments(
            r, float(mu_r), log_slab_prior, log_spike_prior, prior.means,
            prior.variances, x_hat, var, pi, beta, gamma, log_zeta,
        )
        gain = prior.variances / (prior.variances + mu_r)
        nu = np.broadcast_to((gain * mu_r)[None, :], beta.shape)
        coeffs = PosteriorCoeffs(pi, beta, gamma, nu, log_zeta)
        if scalar:
            return x_hat[0], var[0], coeffs
        return x_hat, var, coeffs

    rr = r[:, None]
    mr = mu_r[..., None]
    th = prior.means[None, :]
    ph = prior.variances[None, :]
    tot = ph + mr
    with np.errstate(divide="ignore"):
        log_slab = (np.log(prior.eta) + np.log(prior.weights))[None, :] - np.log(np.pi * tot)
        log_spike = np.log1p(-prior.eta) - np.log(np.pi * mu_r)
    if np.any(prior.means != 0):
        log_slab = log_slab - _abs2(rr - th) / tot
    else:
        log_slab = log_slab - _abs2(rr) / tot
    log_spike = log_spike - _abs2(r) / mu_r
    top = np.maximum(log_slab.max(axis=1), log_spike)
    slab = np.exp(log_slab - top[:, None])
    spike = np.exp(log_spike - top)
    slab_sum = slab.sum(axis=1)
    total = slab_sum + spike
    log_zeta = top + np.log(total)
    pi = slab_sum / total
    beta = slab / slab_sum[:, None]
    gain = ph / tot
    gamma = th + gain * (rr - th)
    nu = np.broadcast_to(gain * mr, gamma.shape)
    slab_mean = np.einsum("nl,nl->n", beta, gamma)
    slab_m2 = np.einsum("nl,nl->n", beta, nu + _abs2(gamma))
    x_hat = pi * slab_mean
    var = np.maximum(pi * slab_m2 - _abs2(x_hat), 0.0)
    coeffs = PosteriorCoeffs(pi, beta, gamma, nu, log_zeta)
    if scalar:
        return x_hat[0], var[0], coeffs
    return x_hat, var, coeffs


def _mills(c):
    """``phi(c) / Phi(c)``, stable for large negative ``c``."""
    return _kernels.mills(np.asarray(c, dtype=float))


def _probit_parts(s, m, v, noise):
    """Moments of a real Gaussian ``N(m, v)`` observed through ``sign(u + e)``,
    ``e ~ N(0, noise)``.  Returns posterior mean, variance, and
    ``(c, lam)`` for reuse."""
    scale = np.sqrt(v + noise)
    c = s * m / scale
    lam = _mills(c)
    mean = m + s * (v / scale) * lam
    var = v - (v * v / (v + noise)) * lam * (c + lam)
    return mean, np.maximum(var, 0.0), c, lam


def output_moments(y, p_hat, mu_p, noise_var):
    """Posterior mean/variance of ``z`` given a 1-bit symbol
    ``y = Q(z + w)``, ``z ~ CN(p_hat, mu_p)``, ``w ~ CN(0, noise_var)``.

    Real and imaginary parts are independent probit channels.
    """
    mu_p = np.asarray(mu_p, dtype=float)
    if np.any(mu_p <= 0) or not np.all(np.asarray(noise_var) > 0):
        raise ValueError("output variances must be positive")
    y = np.asarray(y)
    p_hat = np.asarray(p_hat, dtype=complex)
    if mu_p.ndim == 0 and p_hat.ndim == 1 and y.shape == p_hat.shape:
        z = np.empty_like(p_hat)
        var = np.empty(p_hat.shape)
        noise = np.asarray(noise_var, dtype=float)
        if noise.ndim == 0:
            _kernels.probit_moments(y, p_hat, float(mu_p), float(noise), z, var)
        else:
            _kernels.probit_moments_hetero(
                y, p_hat, float(mu_p), np.broadcast_to(noise, p_hat.shape).copy(), z, var
            )
        return z, var
    s_re = np.where(y.real >= 0, 1.0, -1.0)
    s_im = np.where(y.imag >= 0, 1.0, -1.0)
    half_v, half_n = mu_p / 2, np.asarray(noise_var) / 2
    m_re, v_re, _, _ = _probit_parts(s_re, p_hat.real, half_v, half_n)
    m_im, v_im, _, _ = _probit_parts(s_im, p_hat.imag, half_v, half_n)
    return m_re + 1j * m_im, v_re + v_im


def output_moments_awgn(y, p_hat, mu_p, noise_var):
    """Linear-Gaussian output channel ``y = z + w``."""
    z = (p_hat * noise_var + y * mu_p) / (mu_p + noise_var)
    return z, mu_p * noise_var / (mu_p + noise_var) * np.ones(np.shape(z))


def noise_second_moment_1bit(y, p_hat, mu_p, noise_var):
    """``E[|w|^2 | y]`` under the 1-bit channel, per measurement."""
    y = np.asarray(y)
    tot = np.asarray(mu_p) + noise_var
    out = 0.0
    for s, m in ((np.where(y.real >= 0, 1.0, -1.0), p_hat.real),
                 (np.where(y.imag >= 0, 1.0, -1.0), p_hat.imag)):
        v = tot / 2
        c = s * m / np.sqrt(v)
        lam = _mills(c)
        out = out + v * (1 - lam * c)  # E[(u - m)^2] for the truncated sum u
    shrink = noise_var / tot
    return shrink**2 * out + np.asarray(mu_p) * shrink


@dataclass
class GampResult:
    x: np.ndarray
    x_var: np.ndarray
    coeffs: PosteriorCoeffs
    r: np.ndarray
    mu_r: float
    p: np.ndarray
    mu_p: float
    z: np.ndarray
    mu_z: np.ndarray
    s: np.ndarray
    mu_s: float
    iterations: int
    min_mu_p: float = np.inf
    min_mu_r: float = np.inf


def gamp_run(
    y,
    op,
    prior: GmPrior,
    t_max: int = 15,
    eps2: float | None = None,
    channel: str = "1bit",
    damping: float = 0.7,
    warm: GampResult | None = None,
    noise_var=None,
) -> GampResult:
    """Run GAMP for ``y ~ p(y | A x)`` with ``x`` drawn from ``prior``.

    ``op`` needs ``forward``, ``adjoint``, ``shape`` and
    ``frobenius_norm_sq``.  ``warm`` resumes from a previous result.
    ``noise_var`` overrides ``prior.noise_var``, possibly per measurement.
    """
    if channel not in ("1bit", "awgn"):
        raise ValueError(f"unknown output channel {channel!r}")
    out_fn = output_moments if channel == "1bit" else output_moments_awgn
    m, n = op.shape
    y = np.asarray(y)
    if y.shape != (m,):
        raise ValueError(f"measurement length {y.shape} does not match operator {op.shape}")
    fro = op.frobenius_norm_sq
    a2m, a2n = fro / m, fro / n
    beta = float(damping)
    noise = prior.noise_var if noise_var is None else noise_var

    if warm is None:
        x = np.zeros(n, dtype=complex)
        x_var = np.full(n, prior.second_moment())
        s = np.zeros(m, dtype=complex)
        mu_s = 0.0
    else:
        x, x_var, s, mu_s = warm.x.copy(), warm.x_var.copy(), warm.s.copy(), warm.mu_s
    scale_ref = max(np.sqrt(n * prior.second_moment()), np.linalg.norm(x), 1e-30)
    coeffs = warm.coeffs if warm is not None else None
    r = warm.r if warm is not None else x.copy()
    mu_r = warm.mu_r if warm is not None else np.inf
    p = warm.p if warm is not None else np.zeros(m, dtype=complex)
    mu_p = warm.mu_p if warm is not None else a2m * float(np.mean(x_var))
    z = warm.z if warm is not None else p.copy()
    mu_z = warm.mu_z if warm is not None else np.full(m, mu_p)
    min_mu_p = min_mu_r = np.inf
    it = 0
    for it in range(1, t_max + 1):
        mu_p = max(a2m * float(np.mean(x_var)), VAR_FLOOR)
        p = op.forward(x) - mu_p * s
        z, mu_z = out_fn(y, p, mu_p, noise)
        s_new = (z - p) / mu_p
        mu_s_new = float(np.mean((1.0 - mu_z / mu_p) / mu_p))
        mu_s_new = max(mu_s_new, VAR_FLOOR)
        if mu_s == 0.0:
            s, mu_s = s_new, mu_s_new
        else:
            s = beta * s_new + (1 - beta) * s
            mu_s = beta * mu_s_new + (1 - beta) * mu_s
        mu_r = max(1.0 / (a2n * mu_s), VAR_FLOOR)
        r = x + mu_r * op.adjoint(s)
        x_new, x_var_new, coeffs = input_moments(r, mu_r, prior)
        x_old = x
        x = beta * x_new + (1 - beta) * x
        x_var = beta * x_var_new + (1 - beta) * x_var
        min_mu_p, min_mu_r = min(min_mu_p, mu_p), min(min_mu_r, mu_r)
        norm = np.linalg.norm(x)
        if not np.isfinite(norm) or norm > 1e3 * scale_ref:
            raise GampDivergence(
                f"GAMP diverged at iteration {it}; increase damping (now {damping})"
            )
        if eps2 is not None and np.linalg.norm(x - x_old) <= eps2:
            break
    if coeffs is None:
        _, _, coeffs = input_moments(r if np.all(np.isfinite(r)) else x, 1.0, prior)
    return GampResult(
        x, x_var, coeffs, r, mu_r, p, mu_p, z, mu_z, s, mu_s, it, min_mu_p, min_mu_r
    )


def input_log_evidence(r, mu_r, prior: GmPrior) -> float:
    """``sum_n log p(r_n; q)`` for ``r = x + CN(0, mu_r)``: the quantity each
    prior M-step cannot decrease."""
    _, _, coeffs = input_moments(r, mu_r, prior)
    return float(np.sum(coeffs.log_zeta))


def em_update(
    prior: GmPrior,
    result: GampResult,
    y=None,
    channel: str = "1bit",
    learn_noise: bool = True,
    prune_below: float = VAR_FLOOR,
    noise_var=None,
    select=None,
) -> GmPrior:
    """Closed-form M-step from the cached posteriors of one GAMP pass.

    ``noise_var`` is the (possibly per-measurement) noise variance the pass
    used; ``select`` restricts the noise update to a subset of measurements.
    """
    c = result.coeffs
    pi = c.pi
    n = pi.size
    eta = float(np.clip(np.mean(pi), 1e-12 if prior.eta > 0 else 0.0, 1.0))
    resp = pi[:, None] * c.beta
    mass = resp.sum(axis=0)
    if pi.sum() <= 0:
        weights, means, variances = prior.weights, prior.means, prior.variances
    else:
        weights = mass / mass.sum()
        safe = np.where(mass > 0, mass, 1.0)
        means = np.sum(resp * c.gamma, axis=0) / safe
        variances = (
            np.sum(resp * (np.abs(c.gamma - means[None, :]) ** 2 + c.nu), axis=0) / safe
        )
        empty = mass <= 0
        means = np.where(empty, prior.means, means)
        variances = np.where(empty, prior.variances, variances)
    keep = variances >= prune_below
    if not np.all(keep):
        if not np.any(keep):
            keep = variances == variances.max()
        log.debug("pruning %d collapsed mixture components", int((~keep).sum()))
        weights, means, variances = weights[keep], means[keep], variances[keep]
    weights = weights / weights.sum()

    new_noise = prior.noise_var
    if learn_noise and y is not None:
        new_noise = learn_noise_var(
            y, result, channel, prior.noise_var if noise_var is None else noise_var, select
        )
    del n
    return GmPrior(eta, weights, means, variances, new_noise)


def learn_noise_var(y, result: GampResult, channel="1bit", noise_var=1.0, select=None) -> float:
    """M-step for the noise variance over the measurements in ``select``."""
    y = np.asarray(y)
    if channel == "awgn":
        second = np.abs(y - result.z) ** 2 + result.mu_z
    else:
        second = noise_second_moment_1bit(y, result.p, result.mu_p, noise_var)
    second = np.broadcast_to(second, y.shape)
    if select is not None:
        second = second[select]
    return max(float(np.mean(second)), VAR_FLOOR)


def normalize_scale(prior: GmPrior, op, warm: GampResult | None = None, extra=()):
    """Rescale a 1-bit model so that ``E|z|^2 = 1``.

    ``Q(z + w)`` is invariant to a common scaling of ``x`` and ``w``; without
    a fixed gauge EM lets the prior and noise variances drift together.
    Returns the rescaled prior, warm state and ``extra`` noise variances.
    """
    m, _ = op.shape
    power = op.frobenius_norm_sq / m * prior.second_moment()
    if not power > 0:
        return prior, warm, tuple(extra)
    c = 1.0 / np.sqrt(power)
    c2 = c * c
    prior = GmPrior(
        prior.eta, prior.weights, prior.means * c, prior.variances * c2, prior.noise_var * c2
    )
    if warm is not None:
        warm = replace(
            warm, x=warm.x * c, x_var=warm.x_var * c2, r=warm.r * c, mu_r=warm.mu_r * c2,
            p=warm.p * c, mu_p=warm.mu_p * c2, z=warm.z * c, mu_z=warm.mu_z * c2,
            s=warm.s / c, mu_s=warm.mu_s / c2,
        )
    return prior, warm, tuple(v * c2 for v in extra)


@dataclass
class EstimateResult:
    x: np.ndarray
    prior: GmPrior
    outer_iterations: int
    inner_iterations: int
    history: list = field(default_factory=list)
    completion_noise_var: float | None = None


def initial_prior(op, params: EmGampParams, noise_var: float = 0.1) -> GmPrior:
    """Initial prior scaled so that ``A x`` has unit per-entry power."""
    m, n = op.shape
    energy = m / op.frobenius_norm_sq
    return GmPrior.initial(params.n_components, params.eta0, energy, noise_var)


def estimate_channel(
    y_hat,
    op,
    params: EmGampParams = EmGampParams(),
    prior: GmPrior | None = None,
    diagnostics=None,
    observed=None,
    completion_noise_var: float | None = None,
) -> EstimateResult:
    """Alternate GAMP (E-step) and EM (M-step) on the measurement vector.

    With the 1-bit channel, ``y_hat`` is requantized by ``Q`` first, so a
    completed (continuous) matrix can be passed directly.  ``diagnostics``,
    if given, receives ``(outer, inner, residual, eta, noise_var)`` rows.

    ``observed`` flags the directly measured entries.  The remaining
    (imputed) entries get a separate noise variance, starting at
    ``completion_noise_var`` (default ``params.completion_noise_var``) and
    learned alongside ``prior.noise_var``.
    """
    y = np.asarray(y_hat).ravel()
    if params.channel == "1bit":
        y = quantize_1bit(y)
    prior = initial_prior(op, params) if prior is None else prior
    m, n = op.shape
    if observed is not None:
        observed = np.asarray(observed, dtype=bool).ravel()
        if observed.shape != (m,):
            raise ValueError("observed flags must match the measurement vector")
        if observed.all():
            observed = None
    if completion_noise_var is None:
        completion_noise_var = params.completion_noise_var
    comp_nv = float(completion_noise_var) if observed is not None else None
    x = np.zeros(n, dtype=complex)
    history = []
    warm = None
    inner_total = 0
    t = 0
    for t in range(1, params.t_max + 1):
        noise = None if observed is None else np.where(observed, prior.noise_var, comp_nv)
        res = gamp_run(
            y, op, prior, params.inner_iters, None, params.channel, params.damping, warm, noise
        )
        inner_total += res.iterations
        prior = em_update(
            prior, res, y, params.channel, params.learn_noise, noise_var=noise, select=observed
        )
        if observed is not None and params.learn_noise and observed.any():
            comp_nv = learn_noise_var(y, res, params.channel, noise, ~observed)
        warm = res
        if params.channel == "1bit":
            prior, warm, extra = normalize_scale(
                prior, op, warm, () if comp_nv is None else (comp_nv,)
            )
            comp_nv = extra[0] if extra else comp_nv
            ref = np.linalg.norm(res.x)
            if ref > 0:
                x = x * (np.linalg.norm(warm.x) / ref)
        step = np.linalg.norm(warm.x - x)
        x = warm.x
        history.append((t, res.iterations, float(step), prior.eta, prior.noise_var))
        if diagnostics is not None:
            diagnostics(history[-1])
        if step <= params.eps2_rel * max(np.linalg.norm(x), 1e-30):
            break
    else:
        t = params.t_max
    return EstimateResult(x, prior, t, inner_total, history, comp_nv)
