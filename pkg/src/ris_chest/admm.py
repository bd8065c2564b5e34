"""ADMM for relaxed 1-bit matrix completion.

Solves ``min ||Y_hat - Y_obs||_F^2`` subject to ``||Y_hat||_* <= sigma`` and
``||Y_hat||_inf <= gamma`` through the split ``Y_hat = Y_bar``; both norm
constraints are enforced by exact projections.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .config import AdmmParams

log = logging.getLogger(__name__)


class AdmmError(RuntimeError):
    pass


def project_inf_ball(m, gamma: float) -> np.ndarray:
    """Clip every entry's modulus to ``gamma`` (Frobenius projection onto
    ``{||M||_inf <= gamma}``)."""
    if not gamma > 0:
        raise ValueError("radius must be positive")
    m = np.asarray(m)
    mag = np.abs(m)
    over = mag > gamma
    if not over.any():
        return m.copy()
    out = m.astype(np.result_type(m, float), copy=True)
    out[over] *= gamma / mag[over]
    return out


def project_l1_nonneg(s, radius: float) -> tuple[np.ndarray, float]:
    """Project a nonnegative vector onto ``{v >= 0, sum v <= radius}``.

    Returns the projection and the threshold ``tau`` (0 when inside).
    """
    s = np.asarray(s, dtype=float)
    if s.sum() <= radius:
        return s.copy(), 0.0
    u = np.sort(s)[::-1]
    cs = np.cumsum(u)
    j = np.arange(1, u.size + 1)
    k = np.nonzero(u - (cs - radius) / j > 0)[0][-1]
    tau = (cs[k] - radius) / (k + 1)
    return np.maximum(s - tau, 0.0), float(tau)


def _svd(m):
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        pass
    # the divide-and-conquer driver occasionally fails to converge
    try:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise AdmmError(f"SVD failed: {exc}") from exc


def project_nuclear_ball(m, sigma: float) -> np.ndarray:
    """Frobenius projection onto ``{||M||_* <= sigma}`` by an l1-ball
    projection of the singular values."""
    if not sigma > 0:
        raise ValueError("radius must be positive")
    m = np.asarray(m)
    u, s, vh = _svd(m)
    s_new, tau = project_l1_nonneg(s, sigma)
    if tau == 0.0:
        return m.copy()
    keep = s_new > 0
    return (u[:, keep] * s_new[keep]) @ vh[keep]


class NuclearProjector:
    """Nuclear-ball projection with a warm-started randomized partial SVD.

    The top ``rank`` singular triplets are refined by one subspace iteration
    started from the previous call's right singular vectors.  The result is
    exact whenever the l1 threshold falls below the computed spectrum;
    otherwise a full SVD is used.
    """

    def __init__(self, sigma: float, rank: int | None = None, oversample: int = 8, seed: int = 0):
        if not sigma > 0:
            raise ValueError("radius must be positive")
        self.sigma = sigma
        self.rank = rank
        self.oversample = oversample
        self._rng = np.random.default_rng(seed)
        self._basis = None
        self.full_svds = 0

    def _partial(self, m):
        k = min(self.rank + self.oversample, min(m.shape))
        if self._basis is None or self._basis.shape[1] != k:
            g = self._rng.standard_normal((m.shape[1], k))
            self._basis = g + 1j * self._rng.standard_normal((m.shape[1], k))
        q, _ = np.linalg.qr(m @ self._basis)
        q, _ = np.linalg.qr(m @ (m.conj().T @ q))
        u_b, s, vh = _svd(q.conj().T @ m)
        self._basis = vh.conj().T
        return q @ u_b, s, vh

    def __call__(self, m):
        # ||M||_* <= sqrt(rank) ||M||_F certifies an interior point without an SVD
        if math.sqrt(min(m.shape)) * np.linalg.norm(m) <= self.sigma:
            return np.array(m, copy=True)
        small = self.rank is None or self.rank + self.oversample >= min(m.shape)
        if not small:
            u, s, vh = self._partial(m)
            # the discarded spectrum has energy ||M||_F^2 - sum(s^2) spread
            # over at most min(m.shape) - k values
            tail = max(float(np.vdot(m, m).real) - float(np.sum(s * s)), 0.0)
            if s.sum() + math.sqrt(tail * (min(m.shape) - s.size)) <= self.sigma:
                return np.array(m, copy=True)
            s_new, tau = project_l1_nonneg(s, self.sigma)
            kept = int(np.count_nonzero(s_new))
            # exact iff every discarded singular value sits below the threshold
            if tau > 0 and kept < s.size and tau >= s[kept:].max(initial=0.0):
                return (u[:, :kept] * s_new[:kept]) @ vh[:kept]
        self.full_svds += 1
        u, s, vh = _svd(m)
        s_new, tau = project_l1_nonneg(s, self.sigma)
        if tau == 0.0:
            return np.array(m, copy=True)
        kept = int(np.count_nonzero(s_new))
        if not small:
            self._basis = vh[: self.rank + self.oversample].conj().T
        return (u[:, :kept] * s_new[:kept]) @ vh[:kept]


def nuclear_norm(m) -> float:
    return float(np.linalg.svd(m, compute_uv=False).sum())


def default_params(obs, n_path: int, base: AdmmParams = AdmmParams()) -> AdmmParams:
    """Resolve data-dependent radii and tolerance left unset in ``base``."""
    y_norm = float(np.linalg.norm(obs.y))
    rho = float(obs.observed.mean())
    sigma = base.sigma
    if sigma is None:
        sigma = SIGMA_SCALE * math.sqrt(n_path) * y_norm / math.sqrt(rho)
    gamma = base.gamma
    if gamma is None:
        obs_max = float(np.abs(obs.y[obs.observed]).max(initial=1.0))
        gamma = 1.05 * obs_max
    eps1 = base.eps1 if base.eps1 is not None else 1e-4 * y_norm
    rank = base.svd_rank if base.svd_rank is not None else 2 * n_path
    return AdmmParams(
        sigma=sigma, gamma=gamma, mu0=base.mu0, eps1=eps1, k_max=base.k_max,
        growth=base.growth, masked=base.masked, svd_rank=rank,
    )


SIGMA_SCALE = 1.2


@dataclass
class AdmmResult:
    y_hat: np.ndarray
    y_bar: np.ndarray
    dual: np.ndarray
    mu: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    @property
    def y_vec(self) -> np.ndarray:
        return self.y_hat.ravel()


DIAGNOSTIC_FIELDS = ("iteration", "residual", "feasibility_gap", "nuclear_norm")


def admm_complete(obs, params: AdmmParams, diagnostics=None, track_nuclear=False) -> AdmmResult:
    """Complete the partially observed 1-bit matrix.

    Per iteration ``k`` (``Y`` is the zero-filled observation)::

        Y_bar = P_inf((2Y + 2F + (2 + mu) Y_hat) / (4 + mu))
        F     = F + mu (Y_hat - Y_bar)
        Y_hat = P_nuc(Y_bar - 2F / (2 + mu))
        mu    = growth * mu

    With ``params.masked`` the data term only acts on observed entries, so
    unobserved entries of ``Y_bar`` use ``(2F + (2 + mu) Y_hat) / (2 + mu)``.

    ``diagnostics`` may be a callable or a CSV writer target (file object);
    it receives ``(iteration, residual, feasibility_gap, nuclear_norm)`` per
    iteration, the nuclear norm only when ``track_nuclear`` is set.
    """
    if params.sigma is None or params.gamma is None or params.eps1 is None:
        raise ValueError("radii unset; resolve them with default_params()")
    y = np.ascontiguousarray(obs.y, dtype=complex)
    observed = np.ascontiguousarray(obs.observed, dtype=bool)
    if not observed.any():
        raise ValueError("observation has no observed entries")
    emit = diagnostics
    if diagnostics is not None and hasattr(diagnostics, "write"):
        writer = csv.writer(diagnostics)
        writer.writerow(DIAGNOSTIC_FIELDS)
        emit = writer.writerow

    proj = NuclearProjector(params.sigma, params.svd_rank)
    y_hat = np.zeros_like(y)
    y_bar = np.zeros_like(y)
    dual = np.zeros_like(y)
    mu = params.mu0
    history = []
    converged = False
    k = 0
    pre = np.empty_like(y)
    for k in range(1, params.k_max + 1):
        _kernels.admm_split_step(
            y, observed, y_hat, dual, mu, params.gamma, params.masked, y_bar, pre
        )
        y_hat = np.ascontiguousarray(proj(pre))
        mu *= params.growth
        residual, gap = _kernels.admm_norms(y, observed, y_hat, y_bar)
        if not math.isfinite(residual):
            raise AdmmError(f"non-finite iterate at ADMM iteration {k}")
        row = (k, residual, gap, nuclear_norm(y_hat) if track_nuclear else float("nan"))
        history.append(row)
        if emit is not None:
            emit(row)
        if residual <= params.eps1 or gap <= params.eps1:
            converged = True
            break
    log.debug("ADMM stopped after %d iterations (%d full SVDs)", k, proj.full_svds)
    return AdmmResult(y_hat, y_bar, dual, mu, k, converged, history)
