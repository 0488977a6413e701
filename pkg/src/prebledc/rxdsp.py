"""Offline receiver DSP: synchronization, downsampling, FFE, decisions, BER."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .fir import FirFilter, TrainingError
from .signal import BitSequence, Waveform, convolve_same

HD_FEC_THRESHOLD = 3.8e-3
SCHEMES = ("none", "modified-gs", "pre-bl-edc")


class SyncError(RuntimeError):
    pass


class DecisionError(RuntimeError):
    pass


class NotReachedError(RuntimeError):
    """BER never crosses the requested threshold."""


@dataclass(frozen=True)
class BerRecord:
    bit_errors: int
    bits_total: int
    rop_dbm: float = float("nan")
    baud: float = float("nan")
    scheme: str = "none"
    ffe_used: bool = False
    ffe_taps: int = 0
    status: str = "ok"

    def __post_init__(self):
        if self.bits_total <= 0:
            raise ValueError("bits_total must be > 0")

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_total


@dataclass
class EqualizerState:
    taps: FirFilter
    mu: float
    trained_symbols: int
    final_mse: float
    sps: int = 1
    # windowed MSE at the end of each epoch
    mse_history: tuple[float, ...] = ()
    # MSE of the last 10% of training over that of the 10% before it
    tail_growth: float = 1.0

    @property
    def diverging(self) -> bool:
        return not math.isfinite(self.final_mse) or self.tail_growth > 1.5


def _circular_xcorr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """c[lag] = sum_n a[n] * b[n - lag] (circular)."""
    return np.fft.ifft(np.fft.fft(a) * np.conj(np.fft.fft(b))).real


def synchronize(
    rx: Waveform, reference: Waveform, max_lag: int, use_abs: bool = True, min_peak: float = 0.2
) -> int:
    """Lag of ``rx`` against ``reference`` by normalized circular cross-correlation.

    With ``use_abs`` the correlation magnitude is maximized, so an inverted
    copy still locks. Ties go to the smallest ``|lag|``.
    """
    a = rx.samples.real - rx.samples.real.mean()
    b = reference.samples.real - reference.samples.real.mean()
    if a.size != b.size:
        raise ValueError("rx and reference lengths differ")
    if not 0 <= max_lag < a.size:
        raise ValueError("max_lag must be < signal length")
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        raise SyncError("constant signal cannot be synchronized")
    c = _circular_xcorr(a, b) / denom
    lags = np.concatenate((np.arange(0, max_lag + 1), np.arange(-max_lag, 0)))
    vals = c[lags % a.size]
    score = np.abs(vals) if use_abs else vals
    order = np.lexsort((np.abs(lags), -np.round(score, 12)))
    best = order[0]
    if score[best] < min_peak:
        raise SyncError(f"correlation peak {score[best]:.3f} below {min_peak}")
    return int(lags[best])


def eye_opening(x: np.ndarray) -> float:
    """Two-level separation (mu1 - mu0) / (s1 + s0) after 2-means split."""
    try:
        thr = _two_means_threshold(x)
    except DecisionError:
        return 0.0
    lo, hi = x[x <= thr], x[x > thr]
    spread = lo.std() + hi.std()
    return float((hi.mean() - lo.mean()) / spread) if spread > 0 else math.inf


def select_phase(x: Waveform, sps: int) -> int:
    """Sampling phase with the widest eye."""
    s = x.samples
    return int(np.argmax([eye_opening(s[p::sps].real) for p in range(sps)]))


def downsample(x: Waveform, sps: int, phase: int | None = None) -> Waveform:
    """Keep samples ``phase + n*sps``; picks the widest eye when ``phase`` is None."""
    if sps < 1:
        raise ValueError("sps must be >= 1")
    s = x.samples
    if phase is None:
        phase = select_phase(x, sps)
    if not 0 <= phase < sps:
        raise ValueError(f"phase must lie in [0, {sps})")
    return Waveform(s[phase::sps], x.sample_rate / sps, x.label)


def _regressors(x: np.ndarray, n_taps: int, delay: int, sps: int = 1) -> np.ndarray:
    """Rows u_n with ``u_n @ w == convolve_same(x, w, delay)[n*sps]``."""
    padded = np.concatenate((np.zeros(n_taps - 1 - delay), x, np.zeros(delay)))
    return sliding_window_view(padded, n_taps)[: x.size : sps, ::-1]


def ffe_train(
    rx: Waveform,
    known: Waveform,
    n_taps: int,
    mu: float = 5e-4,
    epochs: int = 3,
    sps: int = 1,
) -> EqualizerState:
    """Data-aided LMS feed-forward equalizer with a centre reference tap.

    ``rx`` runs at ``sps`` samples per symbol, ``known`` at one; the
    equalizer output is taken every ``sps`` input samples.
    """
    if n_taps < 1 or n_taps % 2 == 0:
        raise ValueError("n_taps must be odd")
    if mu <= 0:
        raise ValueError("mu must be > 0")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    d = known.samples.real
    x = rx.samples.real
    n_sym = min(d.size, x.size // sps)
    if n_sym < 1:
        raise ValueError("no training symbols")
    d = d[:n_sym]
    delay = n_taps // 2
    U = _regressors(x[: n_sym * sps], n_taps, delay, sps)
    w = np.zeros(n_taps)
    w[delay] = 1.0
    win = max(1, n_sym // 10)
    history = []
    err = np.empty(n_sym)
    for _ in range(epochs):
        # overflow is caught by the finiteness check below
        with np.errstate(over="ignore", invalid="ignore"):
            for n in range(n_sym):
                u = U[n]
                e = d[n] - w @ u
                w += (mu * e) * u
                err[n] = e
        if not np.all(np.isfinite(w)):
            raise TrainingError("FFE taps became non-finite; reduce mu")
        history.append(float(np.mean(err[-win:] ** 2)))
    prev = float(np.mean(err[-2 * win : -win] ** 2)) if n_sym >= 2 * win else history[-1]
    growth = history[-1] / prev if prev > 0 else 1.0
    return EqualizerState(
        FirFilter(w, delay), mu, n_sym * epochs, history[-1], sps, tuple(history), growth
    )


def ls_equalizer(rx: Waveform, known: Waveform, n_taps: int, sps: int = 1) -> tuple[np.ndarray, float]:
    """Normal-equations equalizer with the same alignment as ``ffe_train``."""
    d = known.samples.real
    x = rx.samples.real
    n_sym = min(d.size, x.size // sps)
    U = _regressors(x[: n_sym * sps], n_taps, n_taps // 2, sps)
    w, *_ = np.linalg.lstsq(U, d[:n_sym], rcond=None)
    mse = float(np.mean((d[:n_sym] - U @ w) ** 2))
    return w, mse


def ffe_apply(x: Waveform, eq: EqualizerState) -> Waveform:
    """Filter at the input rate; decimate by ``eq.sps`` afterwards if needed."""
    return convolve_same(x, eq.taps.taps, eq.taps.delay)


def normalize(x: Waveform) -> Waveform:
    """Zero mean, unit standard deviation (receiver AGC)."""
    s = x.samples.real
    sd = s.std()
    return x.replace((s - s.mean()) / sd if sd > 0 else s - s.mean())


def front_end(
    rx: Waveform,
    reference: Waveform,
    sps: int,
    max_lag: int | None = None,
    phase: int | None = None,
) -> Waveform:
    """Synchronize to the known reference, then downsample and normalize.

    Returns one sample per symbol when ``phase`` is given or chosen by eye
    opening; pass ``phase=-1`` to keep all ``sps`` samples per symbol.
    """
    if max_lag is None:
        max_lag = min(len(rx) - 1, 64 * sps)
    lag = synchronize(rx, reference, max_lag)
    aligned = rx.replace(np.roll(rx.samples, -lag))
    if phase == -1:
        return normalize(aligned)
    return normalize(downsample(aligned, sps, phase))


def _two_means_threshold(x: np.ndarray, max_iter: int = 100) -> float:
    lo_v, hi_v = x.min(), x.max()
    if not hi_v > lo_v:
        raise DecisionError("single-level input has no decision threshold")
    thr = x.mean()
    above = x > thr
    for _ in range(max_iter):
        if above.all() or not above.any():
            raise DecisionError("degenerate level split")
        thr = 0.5 * (x[above].mean() + x[~above].mean())
        new = x > thr
        if np.array_equal(new, above):
            break
        above = new
    return float(thr)


def decide_ook(x: Waveform) -> BitSequence:
    s = x.samples.real
    return BitSequence((s > _two_means_threshold(s)).astype(np.uint8))


def count_ber(decided: BitSequence, reference: BitSequence, **fields) -> BerRecord:
    if len(decided) != len(reference):
        raise ValueError(f"length mismatch: {len(decided)} vs {len(reference)}")
    errors = int(np.count_nonzero(decided.bits != reference.bits))
    return BerRecord(errors, len(reference), **fields)


def sensitivity_at(records: Sequence[BerRecord], threshold_ber: float = HD_FEC_THRESHOLD) -> float:
    """ROP where log10(BER) linearly interpolated crosses ``threshold_ber``."""
    recs = sorted(records, key=lambda r: r.rop_dbm)
    if len(recs) < 2:
        raise ValueError("need at least two records")
    target = math.log10(threshold_ber)
    for r in recs:
        if r.ber == threshold_ber:
            return r.rop_dbm
    for a, b in zip(recs, recs[1:]):
        if (a.ber - threshold_ber) * (b.ber - threshold_ber) < 0:
            la = math.log10(a.ber) if a.ber > 0 else -math.inf
            lb = math.log10(b.ber) if b.ber > 0 else -math.inf
            if math.isinf(lb):
                return b.rop_dbm
            if math.isinf(la):
                return a.rop_dbm
            return a.rop_dbm + (target - la) * (b.rop_dbm - a.rop_dbm) / (lb - la)
    raise NotReachedError(f"BER does not cross {threshold_ber:g} over the given records")
