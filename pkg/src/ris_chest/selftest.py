"""Fast invariant checks behind ``ris-chest selftest``.

Each check compares a fast path against an independent reference (explicit
matrices, quadrature, brute force) on a tiny instance and returns an error
message or ``None``.
"""

from __future__ import annotations

import math
import traceback

import numpy as np
from scipy import integrate

from .admm import admm_complete, project_inf_ball, project_nuclear_ball
from .config import AdmmParams, RunConfig, SystemConfig
from .emgamp import GmPrior, input_moments, output_moments
from .harness import ExperimentSpec, nmse, run_trial
from .observation import Observation, draw_mask, quantize_1bit, sample, zadoff_chu
from .transforms import ImplicitOperator, UpaBasis

TINY = SystemConfig(rx_h=2, rx_v=2, tx_h=2, tx_v=1, n_k=4, n_p=3, n_cl=1, n_sp=2)


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_operator(rng):
    pilots = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    for mode in ("basis", "dictionary"):
        op = ImplicitOperator(4, UpaBasis(2, 2), UpaBasis(2, 1), pilots, mode)
        dense = op.explicit()
        x = rng.standard_normal(op.shape[1]) + 1j * rng.standard_normal(op.shape[1])
        z = rng.standard_normal(op.shape[0]) + 1j * rng.standard_normal(op.shape[0])
        if _rel(op.forward(x), dense @ x) > 1e-10:
            return f"{mode} forward differs from the explicit matrix"
        lhs, rhs = np.vdot(z, op.forward(x)), np.vdot(op.adjoint(z), x)
        if abs(lhs - rhs) > 1e-8 * abs(lhs):
            return f"{mode} adjoint test failed"
    return None


def check_projections(rng):
    if not np.isclose(project_inf_ball(np.array([3 + 4j]), 1.0)[0], 0.6 + 0.8j):
        return "inf-ball projection of 3+4j"
    out = project_nuclear_ball(np.diag([3.0, 1.0]), 2.0)
    if not np.allclose(out, np.diag([2.0, 0.0])):
        return "nuclear projection of diag(3, 1)"
    m = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
    p = project_nuclear_ball(m, 1.0)
    if np.linalg.svd(p, compute_uv=False).sum() > 1.0 + 1e-9:
        return "nuclear projection leaves the ball"
    if _rel(project_nuclear_ball(p, 1.0), p) > 1e-9:
        return "nuclear projection is not idempotent"
    return None


def check_moments(rng):
    prior = GmPrior(0.5, np.array([1.0]), np.array([0.0j]), np.array([1.0]), 1.0)
    r, mu_r = 2.0 + 0.0j, 1.0
    x_hat, _, _ = input_moments(np.array([r]), mu_r, prior)
    # the posterior factorizes; integrate the real part of a real-valued r
    def post(x, k):
        slab = prior.eta / (math.pi * 2.0) * math.exp(-(r.real**2) / 2.0)
        spike = (1 - prior.eta) / math.pi * math.exp(-(r.real**2))
        w_slab = slab / (slab + spike)
        return w_slab * (x ** k) * math.exp(-((x - r.real / 2) ** 2)) / math.sqrt(math.pi)
    mean = integrate.quad(post, -20, 20, args=(1,), epsabs=1e-13)[0]
    if abs(x_hat[0].real - mean) > 1e-8:
        return f"input mean {x_hat[0].real} vs quadrature {mean}"
    z, _ = output_moments(np.array([1 + 1j]) / math.sqrt(2), np.array([0j]), 1.0, 1.0)
    ref = integrate.quad(
        lambda u: u * math.exp(-u * u) * 0.5 * math.erfc(-u / math.sqrt(1.0)) / math.sqrt(math.pi),
        -30, 30, epsabs=1e-13,
    )[0] / 0.5
    if abs(z[0].real - ref) > 1e-8:
        return f"output mean {z[0].real} vs quadrature {ref}"
    return None


def check_observation(rng):
    zc = zadoff_chu(13, 1)
    if not np.allclose(np.abs(zc), 1.0):
        return "ZC sequence is not constant-modulus"
    corr = np.array([np.vdot(zc, np.roll(zc, s)) for s in range(1, 13)])
    if np.abs(corr).max() > 1e-9:
        return "ZC periodic autocorrelation is not ideal"
    mask = draw_mask(8, 3, 2, rng)
    if not np.all(mask.omega.sum(axis=0) == 2):
        return "mask column counts"
    qz = quantize_1bit(rng.standard_normal((8, 6)) + 1j * rng.standard_normal((8, 6)))
    obs = sample(qz, mask, 2, 0.25)
    back = Observation.from_bytes(obs.to_bytes())
    if not (np.array_equal(back.y, obs.y) and np.array_equal(back.observed, obs.observed)):
        return "observation bytes do not round-trip"
    return None


def check_admm(rng):
    u = rng.standard_normal((12, 2)) + 1j * rng.standard_normal((12, 2))
    v = rng.standard_normal((2, 12)) + 1j * rng.standard_normal((2, 12))
    y = u @ v
    mask = draw_mask(12, 12, 12, rng)
    obs = Observation(y, mask.omega, mask, 0.0, 1)
    sigma = float(np.linalg.svd(y, compute_uv=False).sum())
    params = AdmmParams(sigma=sigma, gamma=float(np.abs(y).max()) * 1.01, eps1=1e-6, k_max=300)
    res = admm_complete(obs, params)
    if _rel(res.y_hat, y) > 1e-4:
        return f"fully observed completion error {_rel(res.y_hat, y):.2e}"
    return None


def check_harness(rng):
    x = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    if nmse(5j * x, x) > 1e-24:
        return "NMSE alignment does not remove a complex scale"
    spec = ExperimentSpec(run=RunConfig(system=TINY.replace(rho=0.5)), snr_grid=(20.0,), trials=1)
    a = run_trial(spec, "proposed", 20.0, 3)
    b = run_trial(spec, "proposed", 20.0, 3)
    if a.error is not None:
        return f"trial failed: {a.error}"
    if a.nmse != b.nmse:
        return "trial is not deterministic"
    return None


CHECKS = {
    "operator": check_operator,
    "projections": check_projections,
    "moments": check_moments,
    "observation": check_observation,
    "admm": check_admm,
    "harness": check_harness,
}


def run_selftest(run: RunConfig | None = None, seed: int = 0) -> list[tuple[str, str]]:
    """Run every check; return ``(name, message)`` for each failure."""
    failures = []
    for name, fn in CHECKS.items():
        rng = np.random.default_rng(seed)
        try:
            msg = fn(rng)
        except Exception:
            msg = traceback.format_exc(limit=3)
        if msg is not None:
            failures.append((name, msg))
    return failures
