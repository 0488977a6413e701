"""Signal generation, pulse shaping, transforms and spectral estimation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

# Maximal-length Fibonacci LFSR taps, polynomial x^a + x^b (+ ...) + 1.
PRBS_TAPS: dict[int, tuple[int, ...]] = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
    17: (17, 14),
    18: (18, 11),
    19: (19, 6, 2, 1),
    20: (20, 17),
    21: (21, 19),
    22: (22, 21),
    23: (23, 18),
    24: (24, 23, 22, 17),
    25: (25, 22),
    26: (26, 6, 2, 1),
    27: (27, 5, 2, 1),
    28: (28, 25),
    29: (29, 27),
    30: (30, 6, 4, 1),
    31: (31, 28),
}

DEFAULT_PSD_SEGMENT = 1024
DEFAULT_PSD_OVERLAP = 0.5


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled real or complex signal."""

    samples: np.ndarray
    sample_rate: float
    label: str = ""

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("waveform needs a non-empty 1-D sample vector")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        s = s.astype(np.complex128 if np.iscomplexobj(s) else np.float64, copy=True)
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.samples)

    def __len__(self) -> int:
        return self.samples.size

    def replace(self, samples: np.ndarray, label: str | None = None) -> Waveform:
        return Waveform(samples, self.sample_rate, self.label if label is None else label)


@dataclass(frozen=True)
class BitSequence:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 1 or b.size == 0:
            raise ValueError("bit sequence must be non-empty and 1-D")
        if not np.all((b == 0) | (b == 1)):
            raise ValueError("bits must be 0 or 1")
        b = b.astype(np.uint8, copy=True)
        b.flags.writeable = False
        object.__setattr__(self, "bits", b)

    @property
    def length(self) -> int:
        return self.bits.size

    def __len__(self) -> int:
        return self.bits.size


@dataclass(frozen=True)
class PulseShape:
    taps: np.ndarray
    span_symbols: int
    sps: int
    rolloff: float

    @property
    def center(self) -> int:
        return self.span_symbols * self.sps // 2


def generate_prbs(order: int, seed: int, length: int) -> BitSequence:
    """Fibonacci LFSR output bits, wrapped cyclically past one period.

    Stage ``i`` (1-based) of the register holds bit ``i - 1`` of ``seed``; the
    output is the last stage and the XOR of the tapped stages is shifted in.
    """
    if order not in PRBS_TAPS:
        raise ValueError(f"unsupported PRBS order {order}")
    mask = (1 << order) - 1
    state = seed & mask
    if state == 0:
        raise ValueError("PRBS seed must have at least one nonzero bit in range")
    if length < 1:
        raise ValueError("length must be >= 1")

    period = mask
    n = min(length, period)
    shifts = [t - 1 for t in PRBS_TAPS[order]]
    out_shift = order - 1
    out = np.empty(n, dtype=np.uint8)
    for i in range(n):
        out[i] = (state >> out_shift) & 1
        fb = 0
        for s in shifts:
            fb ^= state >> s
        state = ((state << 1) | (fb & 1)) & mask
    if length > n:
        out = np.resize(out, length)
    return BitSequence(out)


def map_ook(bits: BitSequence, baud: float = 1.0) -> Waveform:
    return Waveform(bits.bits.astype(np.float64), baud, "ook")


def upsample(symbols: Waveform, sps: int) -> Waveform:
    """Zero-insertion upsampling."""
    if sps < 1:
        raise ValueError(f"sps must be >= 1, got {sps}")
    x = symbols.samples
    out = np.zeros(x.size * sps, dtype=x.dtype)
    out[::sps] = x
    return Waveform(out, symbols.sample_rate * sps, symbols.label)


def raised_cosine(rolloff: float, span_symbols: int = 16, sps: int = 2) -> PulseShape:
    """Time-domain raised-cosine impulse response with unit center tap."""
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError(f"rolloff must lie in [0, 1], got {rolloff}")
    if span_symbols < 2 or span_symbols % 2:
        raise ValueError(f"span_symbols must be even and positive, got {span_symbols}")
    if sps < 1:
        raise ValueError(f"sps must be >= 1, got {sps}")

    n = span_symbols * sps + 1
    t = (np.arange(n) - (n - 1) // 2) / sps
    h = np.sinc(t)
    if rolloff > 0:
        denom = 1.0 - (2.0 * rolloff * t) ** 2
        singular = np.isclose(np.abs(denom), 0.0, atol=1e-12)
        safe = np.where(singular, 1.0, denom)
        h = np.where(
            singular,
            np.pi / 4 * np.sinc(1.0 / (2.0 * rolloff)),
            h * np.cos(np.pi * rolloff * t) / safe,
        )
    # exact zeros at nonzero symbol offsets and where cos(pi*rolloff*t) vanishes
    h[np.abs(h) < 1e-14] = 0.0
    on_symbol = (np.arange(n) - (n - 1) // 2) % sps == 0
    h[on_symbol] = 0.0
    h[(n - 1) // 2] = 1.0
    return PulseShape(h, span_symbols, sps, rolloff)


def convolve_same(x: Waveform, taps: np.ndarray, delay: int = 0) -> Waveform:
    """Zero-padded linear convolution with the reference delay removed.

    ``y[n] = sum_k taps[k] * x[n - k + delay]``, same length as ``x``.
    """
    taps = np.asarray(taps)
    if taps.ndim != 1 or taps.size == 0:
        raise ValueError("taps must be a non-empty vector")
    if not 0 <= delay < taps.size:
        raise ValueError(f"delay {delay} outside [0, {taps.size})")
    full = np.convolve(x.samples, taps)
    return x.replace(full[delay : delay + len(x)])


def shape_pulses(symbols: Waveform, pulse: PulseShape) -> Waveform:
    up = upsample(symbols, pulse.sps)
    return convolve_same(up, pulse.taps, pulse.center)


def ook_target(
    bits: BitSequence,
    baud: float,
    sps: int = 2,
    rolloff: float = 1.0,
    span_symbols: int = 16,
    bias: float = 1.0,
) -> Waveform:
    """Receiver amplitude target: sqrt(bias + RC-shaped OOK intensity).

    ``bias`` sets the extinction ratio (1 + bias) / bias of the intended
    received intensity; it must be positive for the GS loop to have a
    reachable target.
    """
    if bias < 0:
        raise ValueError("bias must be >= 0")
    shaped = shape_pulses(map_ook(bits, baud), raised_cosine(rolloff, span_symbols, sps))
    return shaped.replace(np.sqrt(bias + np.maximum(shaped.samples, 0.0)), "target")


def dft(x: Waveform | np.ndarray) -> np.ndarray:
    """Forward DFT, unnormalized."""
    s = x.samples if isinstance(x, Waveform) else np.asarray(x)
    return np.fft.fft(s)


def idft(spectrum: np.ndarray, sample_rate: float = 1.0, label: str = "") -> Waveform:
    """Inverse DFT carrying the 1/N factor."""
    return Waveform(np.fft.ifft(np.asarray(spectrum)), sample_rate, label)


def dft_grid(n: int, sample_rate: float) -> np.ndarray:
    """Two-sided bin frequencies in DFT order."""
    return np.fft.fftfreq(n, 1.0 / sample_rate)


def psd_estimate(
    x: Waveform,
    segment_len: int = DEFAULT_PSD_SEGMENT,
    overlap: float = DEFAULT_PSD_OVERLAP,
) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed averaged periodogram (density scaling, no detrending).

    Real inputs give a one-sided estimate whose sum times the bin spacing is
    the mean signal power; complex inputs give a two-sided estimate.
    """
    if segment_len > len(x):
        raise ValueError(f"segment_len {segment_len} exceeds signal length {len(x)}")
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must lie in [0, 1), got {overlap}")
    f, p = welch(
        x.samples,
        fs=x.sample_rate,
        window="hann",
        nperseg=segment_len,
        noverlap=int(overlap * segment_len),
        detrend=False,
        return_onesided=x.is_real,
        scaling="density",
    )
    if not x.is_real:
        f, p = np.fft.fftshift(f), np.fft.fftshift(p)
    return f, p


def band_energy_fraction(
    x: Waveform,
    f_lo: float,
    f_hi: float,
    segment_len: int = DEFAULT_PSD_SEGMENT,
) -> float:
    """Share of one-sided PSD power in ``[f_lo, f_hi)``; ``f_hi`` is inclusive at Nyquist."""
    nyq = x.sample_rate / 2
    if not 0.0 <= f_lo < f_hi <= nyq:
        raise ValueError(f"need 0 <= f_lo < f_hi <= {nyq}, got [{f_lo}, {f_hi}]")
    f, p = psd_estimate(x, min(segment_len, len(x)))
    f = np.abs(f)
    inside = (f >= f_lo) & ((f < f_hi) | ((f_hi >= nyq) & (f <= nyq)))
    total = p.sum()
    return float(p[inside].sum() / total) if total > 0 else 0.0
