"""Simulated IM/DD link: bandwidth limitation, field modulator, fiber CD,
square-law detection and ROP-referenced receiver noise."""
from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .signal import Waveform, dft_grid

# Sign of the quadratic CD phase; the pre-distorter must use the same one.
CD_PHASE_SIGN = +1.0

BL_PLACEMENTS = ("tx-electrical", "rx-electrical", "split")


@dataclass(frozen=True)
class FiberParams:
    length_km: float = 50.0
    dispersion_ps_nm_km: float = 17.0
    wavelength_nm: float = 1550.0

    def __post_init__(self):
        if self.length_km < 0:
            raise ValueError("fiber length must be >= 0")
        if self.wavelength_nm <= 0:
            raise ValueError("wavelength must be > 0")


@dataclass(frozen=True)
class BlFilterSpec:
    """Super-Gaussian magnitude fitted to the 3-dB and 10-dB points.

    ``f_3db = inf`` bypasses the filter. ``taps`` replaces the fitted
    response by a centre-referenced FIR at the link sample rate.
    """

    f_3db: float = 9e9
    f_10db: float = 16e9
    taps: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.taps is not None:
            if len(self.taps) == 0:
                raise ValueError("BL taps must be non-empty")
            return
        if math.isinf(self.f_3db):
            return
        if not 0 < self.f_3db < self.f_10db:
            raise ValueError(
                f"need 0 < f_3db < f_10db, got f_3db={self.f_3db}, f_10db={self.f_10db}"
            )

    @property
    def bypassed(self) -> bool:
        return self.taps is None and math.isinf(self.f_3db)

    @property
    def order(self) -> float:
        """Exponent n of |H(f)|^2 = exp(-ln2 |f/f_3db|^(2n))."""
        if self.bypassed:
            return math.inf
        return math.log(math.log(10) / math.log(2)) / (2 * math.log(self.f_10db / self.f_3db))


@dataclass(frozen=True)
class NoiseSpec:
    sigma_ref: float = 0.0
    rop_dbm: float = 0.0
    seed: int | tuple[int, ...] = 0
    # ROP at which the detected signal has unit gain
    rop_ref_dbm: float = 0.0

    def __post_init__(self):
        if self.sigma_ref < 0:
            raise ValueError("sigma_ref must be >= 0")


@dataclass(frozen=True)
class LinkConfig:
    baud: float = 32e9
    sps: int = 2
    fiber: FiberParams = dc_field(default_factory=FiberParams)
    bl: BlFilterSpec = dc_field(default_factory=BlFilterSpec)
    noise: NoiseSpec = dc_field(default_factory=NoiseSpec)
    bl_placement: str = "tx-electrical"

    def __post_init__(self):
        if not self.baud > 0:
            raise ValueError("baud must be > 0")
        if self.sps < 2:
            raise ValueError("sps must be >= 2")
        if self.bl_placement not in BL_PLACEMENTS:
            raise ValueError(f"bl_placement must be one of {BL_PLACEMENTS}")
        if self.bl_placement == "split" and self.bl.taps is not None:
            raise ValueError("split placement needs a zero-phase BL response, not FIR taps")

    @property
    def sample_rate(self) -> float:
        return self.baud * self.sps


@dataclass(frozen=True)
class FreqResponse:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if np.shape(self.grid) != np.shape(self.values):
            raise ValueError("grid and values must have equal length")

    def __mul__(self, other: FreqResponse) -> FreqResponse:
        if not np.array_equal(self.grid, other.grid):
            raise ValueError("frequency grids differ")
        return FreqResponse(self.grid, self.values * other.values)

    def apply(self, x: Waveform | np.ndarray) -> np.ndarray:
        """Circular frequency-domain filtering."""
        s = x.samples if isinstance(x, Waveform) else x
        if s.size != self.values.size:
            raise ValueError("signal length does not match frequency grid")
        return np.fft.ifft(np.fft.fft(s) * self.values)


def cd_phase_coefficient(fiber: FiberParams) -> float:
    """pi * lambda^2 * D * L / c in rad/Hz^2."""
    lam = fiber.wavelength_nm * 1e-9
    d = fiber.dispersion_ps_nm_km * 1e-6  # s/m^2
    length = fiber.length_km * 1e3
    return math.pi * lam**2 * d * length / SPEED_OF_LIGHT


def cd_response(fiber: FiberParams, grid: np.ndarray) -> FreqResponse:
    grid = np.asarray(grid, dtype=np.float64)
    phase = CD_PHASE_SIGN * cd_phase_coefficient(fiber) * grid**2
    return FreqResponse(grid, np.exp(1j * phase))


def bl_response(
    spec: BlFilterSpec, grid: np.ndarray, sample_rate: float | None = None
) -> FreqResponse:
    grid = np.asarray(grid, dtype=np.float64)
    if spec.taps is not None:
        if sample_rate is None:
            raise ValueError("FIR bandwidth limitation needs the sample rate")
        n = np.arange(len(spec.taps)) - len(spec.taps) // 2
        z = np.exp(-2j * np.pi * np.outer(grid / sample_rate, n))
        return FreqResponse(grid, z @ np.asarray(spec.taps, dtype=np.complex128))
    if spec.bypassed:
        return FreqResponse(grid, np.ones(grid.size, dtype=np.complex128))
    power = np.exp(-math.log(2) * np.abs(grid / spec.f_3db) ** (2 * spec.order))
    return FreqResponse(grid, np.sqrt(power).astype(np.complex128))


def modulate(drive: Waveform) -> tuple[Waveform, int]:
    """Ideal chirp-free field modulator; returns the field and the clip count."""
    if not drive.is_real:
        raise ValueError("modulator drive must be real")
    clipped = int(np.count_nonzero(drive.samples < 0))
    return drive.replace(np.maximum(drive.samples, 0.0), "field"), clipped


def photodetect(field: Waveform) -> Waveform:
    s = field.samples
    return field.replace((s.real**2 + s.imag**2) if not field.is_real else s * s, "detected")


def add_noise(x: Waveform, noise: NoiseSpec) -> Waveform:
    if not x.is_real:
        raise ValueError("noise is added to the real detected signal")
    gain = 10 ** ((noise.rop_dbm - noise.rop_ref_dbm) / 10)
    y = gain * x.samples
    if noise.sigma_ref > 0:
        rng = np.random.default_rng(noise.seed)
        y = y + noise.sigma_ref * rng.standard_normal(y.size)
    return x.replace(y)


def received_clean(tx: Waveform, cfg: LinkConfig) -> Waveform:
    """Noiseless, unit-gain detected signal after AC coupling."""
    if not tx.is_real:
        raise ValueError("tx waveform must be real")
    if not math.isclose(tx.sample_rate, cfg.sample_rate, rel_tol=1e-12):
        raise ValueError(
            f"tx sample rate {tx.sample_rate} != baud*sps {cfg.sample_rate}"
        )
    grid = dft_grid(len(tx), tx.sample_rate)
    bl = bl_response(cfg.bl, grid, tx.sample_rate)
    if cfg.bl_placement == "split":
        # equal magnitude share on each side; zero-phase responses only
        bl_tx = bl_rx = FreqResponse(grid, np.sqrt(bl.values))
    elif cfg.bl_placement == "tx-electrical":
        bl_tx, bl_rx = bl, None
    else:
        bl_tx, bl_rx = None, bl

    drive = tx.samples
    if bl_tx is not None and not cfg.bl.bypassed:
        drive = bl_tx.apply(drive).real
    fld, _ = modulate(tx.replace(drive))
    fld = cd_response(cfg.fiber, grid).apply(fld)
    det = photodetect(Waveform(fld, tx.sample_rate)).samples
    det = det - det.mean()
    if bl_rx is not None and not cfg.bl.bypassed:
        det = bl_rx.apply(det).real
    return Waveform(det, tx.sample_rate, "received")


def simulate_link(tx: Waveform, cfg: LinkConfig) -> Waveform:
    return add_noise(received_clean(tx, cfg), cfg.noise)
