"""System, solver and experiment configuration.

Configuration files are flat ``key = value`` text; ``#`` starts a comment.
Every key matches a field name of :class:`SystemConfig`, :class:`AdmmParams`
or :class:`EmGampParams` (see ``known_keys()``).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SystemConfig:
    """Dimensional and physical parameters of one RIS-UE uplink."""

    rx_h: int = 16
    rx_v: int = 16
    tx_h: int = 4
    tx_v: int = 2
    n_k: int = 16
    n_p: int = 16
    delta_f: float = 2.88e6
    f_c: float = 28e9
    rho: float = 0.08
    snr_db: float = 20.0
    n_cl: int = 4
    n_sp: int = 5
    spread_deg: float = 7.5
    spacing: float = 0.5  # element spacing in wavelengths

    def __post_init__(self):
        for name in ("rx_h", "rx_v", "tx_h", "tx_v", "n_k", "n_p", "n_cl", "n_sp"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("delta_f", "f_c", "spacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.rho <= 1:
            raise ValueError("sampling ratio rho must lie in (0, 1]")
        if self.spread_deg < 0:
            raise ValueError("angular spread must be nonnegative")

    @property
    def n_r(self) -> int:
        return self.rx_h * self.rx_v

    @property
    def n_t(self) -> int:
        return self.tx_h * self.tx_v

    @property
    def n_path(self) -> int:
        return self.n_cl * self.n_sp

    @property
    def n_coeffs(self) -> int:
        return self.n_k * self.n_r * self.n_t

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def samples_per_symbol(self) -> int:
        """Receiver units active per pilot symbol, ``round(rho * N_r)``."""
        return max(1, int(round(self.rho * self.n_r)))

    @property
    def max_delay(self) -> float:
        return (self.n_k - 1) / (self.n_k * self.delta_f)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def desk(cls) -> "SystemConfig":
        """16x16 RIS, 2x4 UE, 16 sub-bands; a sweep finishes in minutes."""
        return cls()

    @classmethod
    def full(cls, n_p: int = 16) -> "SystemConfig":
        """32x32 RIS, 2x8 UE, 64 sub-bands of 4 RBs at 60 kHz, 8% sampling."""
        return cls(rx_h=32, rx_v=32, tx_h=8, tx_v=2, n_k=64, n_p=n_p)


@dataclass(frozen=True)
class AdmmParams:
    """ADMM settings for quantized matrix completion.

    ``sigma``/``gamma``/``eps1`` of ``None`` are resolved from the data by
    :func:`ris_chest.admm.default_params`.
    """

    sigma: float | None = None
    gamma: float | None = None
    mu0: float = 1e-2
    eps1: float | None = None
    k_max: int = 500
    growth: float = 1.01
    masked: bool = False
    svd_rank: int | None = None

    def __post_init__(self):
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.eps1 is not None and not self.eps1 > 0:
            raise ValueError("eps1 must be positive")
        if not self.mu0 > 0:
            raise ValueError("mu0 must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")


@dataclass(frozen=True)
class EmGampParams:
    """EM-GAMP settings (outer EM iterations, inner GAMP iterations)."""

    t_max: int = 6
    inner_iters: int = 10
    n_components: int = 3
    damping: float = 0.7
    eta0: float = 0.1
    eps2_rel: float = 1e-5
    learn_noise: bool = True
    channel: str = "1bit"  # or "awgn"
    split_noise: bool = True  # separate noise variance for imputed entries
    completion_noise_var: float = 1e4  # relative to unit signal power


@dataclass(frozen=True)
class BaselineParams:
    """Oracle-sparsity baselines."""

    qiht_iters: int = 100
    qiht_step: float | None = None
    omp_subcarrier: int = 0
    omp_tol: float = 1e-6
    support_energy: float = 0.99


@dataclass
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    admm: AdmmParams = field(default_factory=AdmmParams)
    gamp: EmGampParams = field(default_factory=EmGampParams)
    baseline: BaselineParams = field(default_factory=BaselineParams)


_SECTIONS = {
    "system": SystemConfig,
    "admm": AdmmParams,
    "gamp": EmGampParams,
    "baseline": BaselineParams,
}


def known_keys() -> dict[str, str]:
    """Map every config key to the section that owns it."""
    out = {}
    for section, cls in _SECTIONS.items():
        for f in fields(cls):
            if f.name in out:
                raise RuntimeError(f"duplicate config key {f.name}")
            out[f.name] = section
    return out


def _coerce(value: str, current, type_name: str):
    text = value.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if current is None:
        return int(text) if type_name.startswith("int") else float(text)
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, str):
        return text
    return float(text)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def apply_overrides(run: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Return a copy of ``run`` with string-valued overrides applied."""
    keys = known_keys()
    grouped: dict[str, dict] = {name: {} for name in _SECTIONS}
    for key, value in overrides.items():
        if key not in keys:
            raise KeyError(f"unknown config key {key!r}")
        section = keys[key]
        current = getattr(getattr(run, section), key)
        if isinstance(value, str):
            type_name = str(_SECTIONS[section].__dataclass_fields__[key].type)
            value = _coerce(value, current, type_name)
        grouped[section][key] = value
    return RunConfig(
        **{
            name: dataclasses.replace(getattr(run, name), **grouped[name])
            for name in _SECTIONS
        }
    )


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return apply_overrides(RunConfig(), parse_config_text(fh.read()))


def dump_config(run: RunConfig) -> str:
    lines = []
    for name in _SECTIONS:
        lines.append(f"# {name}")
        for f in fields(getattr(run, name)):
            lines.append(f"{f.name} = {getattr(getattr(run, name), f.name)}")
    return "\n".join(lines) + "\n"
