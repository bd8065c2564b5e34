"""Clustered wideband mmWave channel synthesis.

Gains, delays and angle distributions follow simple documented choices:

* cluster centres uniform over azimuth ``[-pi, pi)`` and zenith ``[0, pi]``;
* subpath angles uniform within ``+-spread`` of the centre;
* gains ``CN(0, 1/N_path)`` so that ``E||H||_F^2 = N_r N_t N_k``;
* cluster delay uniform on ``[0, (N_k-1)/(N_k df)]`` plus a per-subpath
  jitter uniform on ``[0, 1/(N_k df))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .transforms import ImplicitOperator, UpaBasis, basis_s_apply


@dataclass(frozen=True)
class ArrayGeometry:
    n_h: int
    n_v: int
    d_h: float
    d_v: float
    wavelength: float

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise ValueError("element counts must be positive")
        if not (self.d_h > 0 and self.d_v > 0 and self.wavelength > 0):
            raise ValueError("spacings and wavelength must be positive")

    @property
    def size(self) -> int:
        return self.n_h * self.n_v

    @classmethod
    def half_wavelength(cls, n_h, n_v, wavelength):
        return cls(n_h, n_v, wavelength / 2, wavelength / 2, wavelength)


@dataclass(frozen=True)
class PathParams:
    gain: complex
    delay: float
    aoa_az: float
    aoa_zen: float
    aod_az: float
    aod_zen: float


def wrap_azimuth(az):
    return (np.asarray(az) + np.pi) % (2 * np.pi) - np.pi


def fold_zenith(zen):
    """Reflect zenith angles into ``[0, pi]``."""
    z = np.mod(np.asarray(zen, dtype=float), 2 * np.pi)
    return np.where(z > np.pi, 2 * np.pi - z, z)


def array_response(azimuth, zenith, geometry: ArrayGeometry) -> np.ndarray:
    """UPA steering vector ``a_h(zen, az) (x) a_v(zen)``.

    Accepts scalar angles (returns shape ``(N,)``) or equal-length arrays
    (returns ``(N, P)``, one column per angle pair).
    """
    az = wrap_azimuth(azimuth)
    zen = fold_zenith(zenith)
    scalar = np.ndim(az) == 0
    az, zen = np.atleast_1d(az), np.atleast_1d(zen)
    u = geometry.d_h * np.sin(zen) * np.sin(az) / geometry.wavelength
    w = geometry.d_v * np.cos(zen) / geometry.wavelength
    a_h = np.exp(2j * np.pi * np.outer(np.arange(geometry.n_h), u))
    a_v = np.exp(2j * np.pi * np.outer(np.arange(geometry.n_v), w))
    a = (a_h[:, None, :] * a_v[None, :, :]).reshape(geometry.size, -1)
    return a[:, 0] if scalar else a


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One drawn channel: per-path parameters as flat arrays.

    Paths are stored cluster-major; ``cluster[i]`` names the owning cluster.
    """

    gains: np.ndarray
    delays: np.ndarray
    aoa_az: np.ndarray
    aoa_zen: np.ndarray
    aod_az: np.ndarray
    aod_zen: np.ndarray
    cluster: np.ndarray
    geometry_rx: ArrayGeometry
    geometry_tx: ArrayGeometry

    @property
    def n_path(self) -> int:
        return len(self.gains)

    @property
    def clusters(self) -> list[list[PathParams]]:
        out = []
        for c in np.unique(self.cluster):
            idx = np.flatnonzero(self.cluster == c)
            out.append([self.path(i) for i in idx])
        return out

    def path(self, i: int) -> PathParams:
        return PathParams(
            complex(self.gains[i]),
            float(self.delays[i]),
            float(self.aoa_az[i]),
            float(self.aoa_zen[i]),
            float(self.aod_az[i]),
            float(self.aod_zen[i]),
        )

    def steering(self) -> tuple[np.ndarray, np.ndarray]:
        a_r = array_response(self.aoa_az, self.aoa_zen, self.geometry_rx)
        a_t = array_response(self.aod_az, self.aod_zen, self.geometry_tx)
        return a_r, a_t

    def to_dict(self) -> dict:
        geo = lambda g: {  # noqa: E731
            "n_h": g.n_h, "n_v": g.n_v, "d_h_m": g.d_h, "d_v_m": g.d_v,
            "wavelength_m": g.wavelength,
        }
        paths = []
        for i in range(self.n_path):
            paths.append({
                "cluster": int(self.cluster[i]),
                "gain": [float(self.gains[i].real), float(self.gains[i].imag)],
                "delay_ns": float(self.delays[i] * 1e9),
                "aoa_azimuth_deg": float(np.degrees(self.aoa_az[i])),
                "aoa_zenith_deg": float(np.degrees(self.aoa_zen[i])),
                "aod_azimuth_deg": float(np.degrees(self.aod_az[i])),
                "aod_zenith_deg": float(np.degrees(self.aod_zen[i])),
            })
        return {"rx": geo(self.geometry_rx), "tx": geo(self.geometry_tx), "paths": paths}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelRealization":
        geo = lambda g: ArrayGeometry(  # noqa: E731
            g["n_h"], g["n_v"], g["d_h_m"], g["d_v_m"], g["wavelength_m"]
        )
        p = d["paths"]
        col = lambda key: np.array([q[key] for q in p], dtype=float)  # noqa: E731
        return cls(
            gains=np.array([complex(*q["gain"]) for q in p]),
            delays=col("delay_ns") * 1e-9,
            aoa_az=np.radians(col("aoa_azimuth_deg")),
            aoa_zen=np.radians(col("aoa_zenith_deg")),
            aod_az=np.radians(col("aod_azimuth_deg")),
            aod_zen=np.radians(col("aod_zenith_deg")),
            cluster=np.array([q["cluster"] for q in p], dtype=int),
            geometry_rx=geo(d["rx"]),
            geometry_tx=geo(d["tx"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "ChannelRealization":
        return cls.from_dict(json.loads(text))


def geometries(config: SystemConfig) -> tuple[ArrayGeometry, ArrayGeometry]:
    lam = config.wavelength
    d = config.spacing * lam
    rx = ArrayGeometry(config.rx_h, config.rx_v, d, d, lam)
    tx = ArrayGeometry(config.tx_h, config.tx_v, d, d, lam)
    return rx, tx


def draw_channel(config: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw a clustered channel realization (see module docstring)."""
    n_cl, n_sp = config.n_cl, config.n_sp
    n_path = n_cl * n_sp
    spread = np.radians(config.spread_deg)

    def angles():
        az_c = rng.uniform(-np.pi, np.pi, n_cl)
        zen_c = rng.uniform(0.0, np.pi, n_cl)
        az = np.repeat(az_c, n_sp) + rng.uniform(-spread, spread, n_path)
        zen = np.repeat(zen_c, n_sp) + rng.uniform(-spread, spread, n_path)
        return wrap_azimuth(az), fold_zenith(zen)

    aoa_az, aoa_zen = angles()
    aod_az, aod_zen = angles()
    bin_width = 1.0 / (config.n_k * config.delta_f)
    tau_c = rng.uniform(0.0, config.max_delay, n_cl)
    delays = np.repeat(tau_c, n_sp) + rng.uniform(0.0, bin_width, n_path)
    gains = (rng.standard_normal(n_path) + 1j * rng.standard_normal(n_path)) / np.sqrt(
        2 * n_path
    )
    rx, tx = geometries(config)
    return ChannelRealization(
        gains=gains,
        delays=delays,
        aoa_az=aoa_az,
        aoa_zen=aoa_zen,
        aod_az=aod_az,
        aod_zen=aod_zen,
        cluster=np.repeat(np.arange(n_cl), n_sp),
        geometry_rx=rx,
        geometry_tx=tx,
    )


def _grid_angles(n_h, n_v, spacing, rng, count):
    """Angle pairs whose steering vectors are exact DFT columns."""
    out = []
    while len(out) < count:
        m = int(rng.integers(n_h))
        l = int(rng.integers(n_v))
        # spatial frequencies on the DFT grid, folded into [-1/2, 1/2)
        fu = ((m / n_h + 0.5) % 1.0) - 0.5
        fw = ((l / n_v + 0.5) % 1.0) - 0.5
        u, w = fu / spacing, fw / spacing
        if u * u + w * w > 1.0:
            continue
        zen = float(np.arccos(w))
        s = np.sin(zen)
        az = float(np.arcsin(np.clip(u / s, -1, 1))) if s > 0 else 0.0
        out.append((az, zen, (m, l)))
    return out


def draw_on_grid_channel(config: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Channel whose paths sit exactly on DFT angle and delay bins.

    Its coefficient vector ``x`` is exactly sparse with at most ``N_path``
    nonzeros (fewer when two paths share a bin).
    """
    n_path = config.n_path
    rx_ang = _grid_angles(config.rx_h, config.rx_v, config.spacing, rng, n_path)
    tx_ang = _grid_angles(config.tx_h, config.tx_v, config.spacing, rng, n_path)
    delays = rng.integers(0, config.n_k, n_path) / (config.n_k * config.delta_f)
    gains = (rng.standard_normal(n_path) + 1j * rng.standard_normal(n_path)) / np.sqrt(
        2 * n_path
    )
    rx, tx = geometries(config)
    return ChannelRealization(
        gains=gains,
        delays=delays,
        aoa_az=np.array([a[0] for a in rx_ang]),
        aoa_zen=np.array([a[1] for a in rx_ang]),
        aod_az=np.array([a[0] for a in tx_ang]),
        aod_zen=np.array([a[1] for a in tx_ang]),
        cluster=np.arange(n_path) // config.n_sp,
        geometry_rx=rx,
        geometry_tx=tx,
    )


def subcarrier_frequencies(config: SystemConfig) -> np.ndarray:
    """Baseband sub-band offsets ``k * df``; the carrier phase sits in the gains."""
    return np.arange(config.n_k) * config.delta_f


def channel_at(realization: ChannelRealization, f_k: float) -> np.ndarray:
    """``H[f_k] = sum alpha a_r a_t^H exp(-2j pi f_k tau)`` of shape ``(N_r, N_t)``."""
    a_r, a_t = realization.steering()
    w = realization.gains * np.exp(-2j * np.pi * f_k * realization.delays)
    return (a_r * w) @ a_t.conj().T


def channel_tensor(realization: ChannelRealization, freqs) -> np.ndarray:
    """All subcarriers at once, shape ``(N_k, N_r, N_t)``."""
    a_r, a_t = realization.steering()
    phase = np.exp(-2j * np.pi * np.outer(freqs, realization.delays))
    w = realization.gains[None, :] * phase
    return np.einsum("rp,kp,tp->krt", a_r, w, a_t.conj(), optimize=True)


def stack_channel(realization: ChannelRealization, config: SystemConfig):
    """Stacked channel ``(N_k N_r, N_t)`` and its sparse coefficients ``x = S vec(H)``."""
    h = channel_tensor(realization, subcarrier_frequencies(config))
    op = ImplicitOperator(
        config.n_k, UpaBasis(config.rx_h, config.rx_v), UpaBasis(config.tx_h, config.tx_v),
        mode="basis",
    )
    x = basis_s_apply(h.ravel(), op)
    return h.reshape(config.n_k * config.n_r, config.n_t), x
