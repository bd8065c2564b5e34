"""Seeded Monte-Carlo trials, NMSE and SNR sweeps.

A trial is fully determined by ``(base seed + trial index, estimator, snr)``.
The channel, mask and unit-variance noise draw come from independent child
streams of that seed, so every SNR of one trial sees the same channel and the
same noise direction (common random numbers).
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .admm import admm_complete, default_params
from .baselines import (
    omp,
    qiht,
    single_subcarrier_operator,
    sparsity_from_energy,
    spectral_norm,
    subcarrier_rows,
)
from .channel import draw_channel, draw_on_grid_channel, stack_channel
from .config import RunConfig, SystemConfig
from .emgamp import estimate_channel
from .observation import (
    add_awgn,
    from_rx_matrix,
    mask_for,
    noiseless_block,
    quantize_1bit,
    sample,
    zc_pilot_block,
)
from .transforms import ImplicitOperator

log = logging.getLogger(__name__)

ESTIMATORS = ("proposed", "qiht", "omp")
CSV_HEADER = ("estimator", "snr_db", "nmse_db_mean", "nmse_db_stderr", "trials")


def nmse(x_hat, x, alignment: str = "optimal") -> float:
    """``||c x_hat - x||^2 / ||x||^2`` after scalar alignment.

    ``alignment="optimal"`` uses the least-squares complex scalar (removing
    the scale and global phase that 1-bit data cannot resolve); ``"unit"``
    only rescales ``x_hat`` to the norm of ``x``.  Returns 1 for ``x_hat = 0``.
    """
    x_hat = np.asarray(x_hat, dtype=complex).ravel()
    x = np.asarray(x, dtype=complex).ravel()
    if x_hat.shape != x.shape:
        raise ValueError("estimate and truth differ in length")
    ref = float(np.vdot(x, x).real)
    if ref == 0:
        raise ValueError("truth must be nonzero")
    energy = float(np.vdot(x_hat, x_hat).real)
    if energy == 0:
        return 1.0
    if alignment == "optimal":
        c = np.vdot(x_hat, x) / energy
    elif alignment == "unit":
        c = math.sqrt(ref / energy)
    else:
        raise ValueError(f"unknown alignment {alignment!r}")
    err = c * x_hat - x
    return float(np.vdot(err, err).real / ref)


def to_db(value: float) -> float:
    return 10.0 * math.log10(value) if value > 0 else -math.inf


@dataclass(frozen=True)
class ExperimentSpec:
    """Protocol of one sweep.  Trial ``i`` uses seed ``base_seed + i``."""

    run: RunConfig = field(default_factory=RunConfig)
    snr_grid: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    trials: int = 50
    estimators: tuple = ESTIMATORS
    base_seed: int = 0
    out: str | None = None
    workers: int = 1
    alignment: str = "optimal"
    baseline_rho: float = 1.0
    on_grid: bool = False
    quantize: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        if len(self.snr_grid) == 0:
            raise ValueError("SNR grid must be nonempty")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))

    @property
    def system(self) -> SystemConfig:
        return self.run.system

    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.trials)]


@dataclass
class TrialResult:
    estimator: str
    snr_db: float
    seed: int
    nmse: float
    nmse_db: float
    wall_time: float
    iterations: dict = field(default_factory=dict)
    error: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrialData:
    """Everything an estimator sees for one (seed, snr), plus the truth."""

    config: SystemConfig
    op: ImplicitOperator
    x: np.ndarray
    h: np.ndarray
    observation: object
    z_noisy: np.ndarray
    noise_var: float
    true_support: float | None = None


_OPERATORS: dict = {}
_STEPS: dict = {}


def operator_for(config: SystemConfig) -> ImplicitOperator:
    """ZC-pilot dictionary of ``config`` (cached per process)."""
    op = _OPERATORS.get(config)
    if op is None:
        op = ImplicitOperator.from_config(config, zc_pilot_block(config).pilots)
        _OPERATORS[config] = op
    return op


def _qiht_step(op: ImplicitOperator, config: SystemConfig, step: float | None) -> float:
    if step is not None:
        return step
    if config not in _STEPS:
        _STEPS[config] = 1.0 / spectral_norm(op)
    return _STEPS[config]


def _streams(seed: int):
    ch, mask, noise = np.random.SeedSequence(seed).spawn(3)
    return ch, mask, noise


def estimator_rho(spec: ExperimentSpec, estimator: str) -> float:
    return spec.system.rho if estimator == "proposed" else spec.baseline_rho


def prepare(spec: ExperimentSpec, estimator: str, snr_db: float, seed: int, channel=None):
    """Channel, operator, noisy block and masked observation for one trial."""
    config = spec.system
    ch_seq, mask_seq, noise_seq = _streams(seed)
    if channel is None:
        draw = draw_on_grid_channel if spec.on_grid else draw_channel
        channel = draw(config, np.random.default_rng(ch_seq))
    h, x = stack_channel(channel, config)
    op = operator_for(config)
    z = noiseless_block(x, op)
    z_noisy, noise_var = add_awgn(z, snr_db, np.random.default_rng(noise_seq))
    qz = quantize_1bit(z_noisy) if spec.quantize else z_noisy
    rho = estimator_rho(spec, estimator)
    mask = mask_for(config, np.random.default_rng(mask_seq), rho)
    obs = sample(qz, mask, config.n_k, noise_var)
    support = None
    if spec.on_grid:
        support = float(np.count_nonzero(np.abs(x) > 1e-9 * np.abs(x).max()) / x.size)
    return TrialData(config, op, x, h, obs, z_noisy, noise_var, support), channel


def _run_proposed(spec: ExperimentSpec, data: TrialData):
    config, run = data.config, spec.run
    obs = data.observation
    admm = admm_complete(obs, default_params(obs, config.n_path, run.admm))
    gamp = run.gamp if spec.quantize else replace(run.gamp, channel="awgn")
    y_hat = from_rx_matrix(admm.y_hat, config.n_k, config.n_r, config.n_p).ravel()
    observed = None
    if gamp.split_noise:
        observed = from_rx_matrix(obs.observed, config.n_k, config.n_r, config.n_p).ravel()
    est = estimate_channel(y_hat, data.op, gamp, observed=observed)
    iters = {"admm": admm.iterations, "em_outer": est.outer_iterations, "gamp_inner": est.inner_iterations}
    extra = {"eta": est.prior.eta, "noise_var": est.prior.noise_var}
    return est.x, data.x, iters, extra


def _observed_vector(data: TrialData) -> np.ndarray:
    config = data.config
    obs = data.observation
    y = from_rx_matrix(obs.y, config.n_k, config.n_r, config.n_p).ravel()
    keep = from_rx_matrix(obs.observed, config.n_k, config.n_r, config.n_p).ravel()
    return y, keep


def _run_qiht(spec: ExperimentSpec, data: TrialData):
    base = spec.run.baseline
    y, keep = _observed_vector(data)
    if not keep.all():
        raise ValueError("QIHT expects every measurement (baseline rho = 1)")
    k = sparsity_from_energy(data.x, base.support_energy)
    res = qiht(y, data.op, k, _qiht_step(data.op, data.config, base.qiht_step), base.qiht_iters)
    return res.x, data.x, {"qiht": res.iterations, "k": k}, {"consistency": res.consistency}


def _run_omp(spec: ExperimentSpec, data: TrialData):
    base = spec.run.baseline
    config = data.config
    y, keep = _observed_vector(data)
    if not keep.all():
        raise ValueError("OMP expects every measurement (baseline rho = 1)")
    sub = base.omp_subcarrier
    if not 0 <= sub < config.n_k:
        raise ValueError("OMP subcarrier index out of range")
    op1 = single_subcarrier_operator(data.op)
    h_k = data.h.reshape(config.n_k, config.n_r, config.n_t)[sub]
    truth = op1.with_mode("basis").forward(h_k.ravel())
    k = sparsity_from_energy(truth, base.support_energy)
    res = omp(subcarrier_rows(y, sub, config.n_k, config.n_r), op1, k, base.omp_tol)
    return res.x, truth, {"omp_atoms": int(len(res.support)), "k": k}, {}


_RUNNERS = {"proposed": _run_proposed, "qiht": _run_qiht, "omp": _run_omp}


def _evaluate(spec, estimator, snr_db, seed, data) -> TrialResult:
    t0 = time.perf_counter()
    try:
        x_hat, truth, iters, extra = _RUNNERS[estimator](spec, data)
        value = nmse(x_hat, truth, spec.alignment)
        error = None
    except Exception as exc:  # recorded, the sweep goes on
        log.warning("%s failed at snr %s seed %d: %s", estimator, snr_db, seed, exc)
        value, iters, extra, error = math.nan, {}, {}, f"{type(exc).__name__}: {exc}"
    if data.true_support is not None:
        extra = {**extra, "true_support": data.true_support}
    return TrialResult(
        estimator, float(snr_db), seed, value, to_db(value) if error is None else math.nan,
        time.perf_counter() - t0, iters, error, extra,
    )


def run_trial(spec: ExperimentSpec, estimator: str, snr_db: float, seed: int) -> TrialResult:
    """Draw, observe and estimate one channel; failures are recorded, not raised."""
    if estimator not in _RUNNERS:
        raise ValueError(f"unknown estimator {estimator!r}")
    data, _ = prepare(spec, estimator, snr_db, seed)
    return _evaluate(spec, estimator, snr_db, seed, data)


def _trial_job(args) -> list[TrialResult]:
    """All SNRs of one (estimator, seed); the channel is drawn once."""
    spec, estimator, seed = args
    out = []
    channel = None
    for snr in spec.snr_grid:
        data, channel = prepare(spec, estimator, snr, seed, channel)
        out.append(_evaluate(spec, estimator, snr, seed, data))
    return out


def run_trials(spec: ExperimentSpec, progress=None) -> list[TrialResult]:
    """Every trial of ``spec``, ordered by (estimator, snr, seed)."""
    jobs = [(spec, est, seed) for est in spec.estimators for seed in spec.seeds()]
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            batches = list(pool.map(_trial_job, jobs))
    else:
        batches = []
        for job in jobs:
            batches.append(_trial_job(job))
            if progress is not None:
                progress(job[1], job[2])
    results = [r for batch in batches for r in batch]
    order = {e: i for i, e in enumerate(spec.estimators)}
    results.sort(key=lambda r: (order[r.estimator], spec.snr_grid.index(r.snr_db), r.seed))
    return results


@dataclass(frozen=True)
class SweepRow:
    estimator: str
    snr_db: float
    nmse_db_mean: float
    nmse_db_stderr: float
    trials: int
    failures: int = 0


def aggregate(results, spec: ExperimentSpec) -> list[SweepRow]:
    rows = []
    for est in spec.estimators:
        for snr in spec.snr_grid:
            cell = [r for r in results if r.estimator == est and r.snr_db == snr]
            good = np.array([r.nmse_db for r in cell if r.ok], dtype=float)
            failures = len(cell) - good.size
            if failures:
                log.warning("%s at %s dB: %d of %d trials failed", est, snr, failures, len(cell))
            if good.size == 0:
                mean, stderr = math.nan, math.nan
            else:
                mean = float(np.mean(good))
                stderr = float(np.std(good, ddof=1) / math.sqrt(good.size)) if good.size > 1 else 0.0
            rows.append(SweepRow(est, snr, mean, stderr, int(good.size), failures))
    return rows


def format_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        # repr keeps the shortest string that parses back to the same float
        writer.writerow([r.estimator, repr(r.snr_db), repr(r.nmse_db_mean), repr(r.nmse_db_stderr), r.trials])
    return buf.getvalue()


def parse_csv(text: str) -> list[SweepRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    return [SweepRow(e, float(s), float(m), float(se), int(n)) for e, s, m, se, n in reader]


def sweep(spec: ExperimentSpec, progress=None) -> tuple[list[SweepRow], list[TrialResult]]:
    """Mean and standard error of NMSE (dB) per (estimator, snr); writes
    ``spec.out`` when set."""
    results = run_trials(spec, progress)
    rows = aggregate(results, spec)
    if spec.out:
        with open(spec.out, "w", newline="") as fh:
            fh.write(format_csv(rows))
    return rows, results
