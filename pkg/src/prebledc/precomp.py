"""Gerchberg-Saxton pre-distortion and the two-phase joint bandwidth/CD
pre-compensation built on it.

The GS loop alternates between the transmitter, where only a real
nonnegative drive amplitude is realizable, and the receiver, where only the
detected amplitude is observed. ``forward`` maps the transmitted field to
the received field; for plain CD pre-compensation it is the fiber response,
for the joint scheme it is the fiber response times a bandwidth-limitation
model recovered from a trained receiver equalizer.
"""
from __future__ import annotations

import logging
import math
import dataclasses
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.fft as sfft

from .channel import FreqResponse, LinkConfig, cd_response, simulate_link
from .fir import FirFilter, TrainingError
from .rxdsp import ffe_train, front_end
from .signal import BitSequence, Waveform, dft_grid, generate_prbs, ook_target

log = logging.getLogger(__name__)

# taps below this fraction of the peak are numerical residue of the inversion
_TAP_TRIM = 1e-12


@dataclass(frozen=True)
class GsConfig:
    n_iter: int = 200
    alpha_amp: float = 0.8
    alpha_phase: float = 1.0
    normalize_output: bool = True
    clip_percentile: float | None = None

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if self.alpha_amp < 0:
            raise ValueError("alpha_amp must be >= 0")
        if not 0.0 <= self.alpha_phase <= 1.0:
            raise ValueError("alpha_phase must lie in [0, 1]")


def invert_response(H: FreqResponse, eps: float = 0.0) -> FreqResponse:
    """Tikhonov-regularized inverse conj(H) / (|H|^2 + eps)."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    h = H.values
    mag2 = h.real**2 + h.imag**2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.conj(h) / (mag2 + eps)
    if eps == 0:
        inv = np.where(mag2 == 0, 0.0, inv)
    return FreqResponse(H.grid, inv)


def _gs_steps(
    target: np.ndarray, forward: np.ndarray, backward: np.ndarray, cfg: GsConfig
) -> Iterator[np.ndarray]:
    x = target.astype(np.complex128)
    keep_phase = 1.0 - cfg.alpha_phase
    for _ in range(cfg.n_iter):
        y = sfft.ifft(sfft.fft(x) * forward)
        # receiver: impose the (error-reversed) target amplitude, keep phase
        mag = np.abs(y)
        new_mag = np.maximum(target + cfg.alpha_amp * (target - mag), 0.0)
        nz = mag > 0
        y = np.where(nz, y * (new_mag / np.where(nz, mag, 1.0)), new_mag)
        x = sfft.ifft(sfft.fft(y) * backward)
        # transmitter: real amplitude, phase shrunk towards zero
        if keep_phase == 0.0:
            x = np.abs(x).astype(np.complex128)
        else:
            x = np.abs(x) * np.exp(1j * keep_phase * np.angle(x))
        yield x


def _gs_operators(
    target: Waveform, forward: FreqResponse, eps: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = target.samples
    if not target.is_real or np.any(t < 0):
        raise ValueError("GS target must be real and nonnegative")
    grid = dft_grid(len(target), target.sample_rate)
    if forward.values.size != t.size or not np.allclose(forward.grid, grid, rtol=1e-12, atol=0):
        raise ValueError("forward response grid does not match the target's DFT grid")
    peak = float(np.max(np.abs(forward.values)) ** 2)
    backward = invert_response(forward, eps * peak).values
    return t, forward.values, backward


def gs_predistort(
    target: Waveform, forward: FreqResponse, cfg: GsConfig = GsConfig(), eps: float = 0.0
) -> Waveform:
    """Modified GS pre-distortion; returns the real nonnegative drive amplitude.

    ``eps`` regularizes the backward step relative to the peak of ``|forward|^2``.
    """
    t, fwd, bwd = _gs_operators(target, forward, eps)
    x = t.astype(np.complex128)
    for x in _gs_steps(t, fwd, bwd, cfg):
        pass
    a = np.abs(x)
    if cfg.clip_percentile is not None:
        a = np.minimum(a, np.percentile(a, cfg.clip_percentile))
    if cfg.normalize_output:
        p = np.mean(a**2)
        if p > 0:
            a = a / math.sqrt(p)
    return Waveform(a, target.sample_rate, "a_tx")


def gs_residuals(
    target: Waveform, forward: FreqResponse, cfg: GsConfig = GsConfig(), eps: float = 0.0
) -> np.ndarray:
    """Relative receiver-amplitude residual after each iteration."""
    t, fwd, bwd = _gs_operators(target, forward, eps)
    norm = np.linalg.norm(t)
    out = []
    for x in _gs_steps(t, fwd, bwd, cfg):
        y = sfft.ifft(sfft.fft(x) * fwd)
        out.append(np.linalg.norm(t - np.abs(y)) / norm)
    return np.asarray(out)


def _fft_len_for(n_taps: int, k_out: int) -> int:
    return 1 << max(10, math.ceil(math.log2(4 * (n_taps + k_out))))


def invert_fir(
    h: FirFilter, k_out: int, eps: float = 1e-4, fft_len: int | None = None
) -> FirFilter:
    """Regularized frequency-domain inverse of ``h`` truncated to ``k_out`` taps.

    The retained window is the circular ``k_out``-sample span with the most
    energy; the result is scaled so ``conv(h, inverse)`` peaks at exactly 1.
    ``eps`` is relative to the peak of ``|H|^2``.
    """
    if k_out < 1:
        raise ValueError("k_out must be >= 1")
    if fft_len is None:
        fft_len = _fft_len_for(len(h), k_out)
    if fft_len < 4 * (len(h) + k_out):
        raise ValueError(f"fft_len {fft_len} < 4 * (taps + k_out)")

    H = np.fft.fft(h.taps, fft_len)
    mag2 = np.abs(H) ** 2
    g = np.fft.ifft(np.conj(H) / (mag2 + eps * mag2.max())).real
    # undo the reference delay of h so the inverse is centred near index 0
    g = np.roll(g, h.delay)
    g[np.abs(g) < _TAP_TRIM * np.abs(g).max()] = 0.0

    e = g**2
    csum = np.concatenate(([0.0], np.cumsum(np.concatenate((e, e[: k_out - 1])))))
    window_energy = csum[k_out : k_out + fft_len] - csum[:fft_len]
    start = int(np.argmax(window_energy))
    idx = (start + np.arange(k_out)) % fft_len
    taps = g[idx]
    captured = float(window_energy[start] / e.sum())

    conv = np.convolve(h.taps, taps)
    peak = int(np.argmax(np.abs(conv)))
    taps = taps / conv[peak]
    delay = int(np.argmax(np.abs(taps)))
    status = "ok"
    if captured < 0.9:
        status = f"warning: window keeps {captured:.1%} of inverse energy"
        log.warning("invert_fir: %s", status)
    return FirFilter(taps, delay, status)


def response_from_fir(h: FirFilter, grid: np.ndarray, sample_rate: float) -> FreqResponse:
    """Delay-normalized tap polynomial evaluated at z = exp(j 2 pi f / fs)."""
    grid = np.asarray(grid, dtype=np.float64)
    n = np.arange(len(h)) - h.delay
    z = np.exp(-2j * np.pi * np.outer(grid / sample_rate, n))
    return FreqResponse(grid, z @ h.taps.astype(np.complex128))


def pre_edc(target: Waveform, cfg: LinkConfig, gs: GsConfig = GsConfig()) -> Waveform:
    """Modified GS pre-EDC against fiber CD alone."""
    grid = dft_grid(len(target), target.sample_rate)
    return gs_predistort(target, cd_response(cfg.fiber, grid), gs)


def bl_model_response(
    h_bl: FirFilter,
    grid: np.ndarray,
    tap_rate: float,
    k: int | None = None,
    eps: float = 1e-4,
) -> FreqResponse:
    """Bandwidth-limitation model: response of the k-tap inverse of the trained FFE."""
    inv = invert_fir(h_bl, k if k is not None else len(h_bl), eps)
    return response_from_fir(inv, grid, tap_rate)


DEFAULT_GS_EPS = 3e-3


def pre_bl_edc(
    target: Waveform,
    cfg: LinkConfig,
    gs: GsConfig,
    h_bl: FirFilter,
    k: int | None = None,
    eps: float = 1e-4,
    tap_rate: float | None = None,
    gs_eps: float = DEFAULT_GS_EPS,
) -> Waveform:
    """Joint pre-compensation with forward operator H_CD * H_BL.

    ``h_bl`` holds the Phase-I FFE taps; its ``k``-tap inverse (``eps``
    regularized) models the bandwidth limitation. ``tap_rate`` is the rate
    the taps were trained at and defaults to the symbol rate. ``gs_eps``
    regularizes the GS backward step, which is no longer all-pass.
    """
    grid = dft_grid(len(target), target.sample_rate)
    h_model = bl_model_response(h_bl, grid, tap_rate or cfg.baud, k, eps)
    forward = cd_response(cfg.fiber, grid) * h_model
    return gs_predistort(target, forward, gs, gs_eps)


def phase1_train(
    cfg: LinkConfig,
    gs: GsConfig = GsConfig(),
    ffe_taps: int = 21,
    train_symbols: int = 20000,
    seed: int | tuple[int, ...] = 0,
    *,
    mu: float = 5e-4,
    epochs: int = 3,
    fractional: bool = False,
    bits: BitSequence | None = None,
    target: Waveform | None = None,
) -> FirFilter:
    """Phase I: CD-only GS pre-EDC over the link, then harvest the FFE taps.

    ``seed`` drives the link noise. Without ``bits``/``target`` a PRBS15
    frame with the default OOK target is used. The returned taps are
    symbol-spaced unless ``fractional``, in which case they run at the link
    sample rate.
    """
    if train_symbols < 20 * ffe_taps:
        raise ValueError("train_symbols must be >= 20 * ffe_taps")
    if bits is None:
        bits = generate_prbs(15, 0x7FFF, 2**15)
    if target is None:
        target = ook_target(bits, cfg.baud, cfg.sps)
    if train_symbols > len(bits):
        raise ValueError("train_symbols exceeds the frame length")

    a_tx = pre_edc(target, cfg, gs)
    link = dataclasses.replace(cfg, noise=dataclasses.replace(cfg.noise, seed=seed))
    rx = simulate_link(a_tx, link)
    reference = target.replace(target.samples**2)
    sym = front_end(rx, reference, cfg.sps, phase=-1 if fractional else 0)
    known = Waveform(2.0 * bits.bits[:train_symbols] - 1.0, cfg.baud)
    sps = cfg.sps if fractional else 1
    eq = ffe_train(sym.replace(sym.samples[: train_symbols * sps]), known, ffe_taps, mu, epochs, sps)
    if eq.diverging:
        raise TrainingError(
            f"Phase I FFE diverging: tail MSE grew by {eq.tail_growth:.2f}x (mu={mu})"
        )
    log.info("phase I: %d taps, final MSE %.4g", ffe_taps, eq.final_mse)
    return eq.taps
