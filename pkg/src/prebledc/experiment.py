"""End-to-end experiments: pre-distortion per scheme, Monte-Carlo BER points,
ROP/baud sweeps and spectral comparisons."""
from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .channel import LinkConfig, add_noise, received_clean
from .config import ExperimentConfig, fingerprint
from .fir import FirFilter, TrainingError
from .io import import_taps, write_sweep_csv, write_table_csv
from .precomp import phase1_train, pre_bl_edc, pre_edc
from .rxdsp import (
    BerRecord,
    DecisionError,
    NotReachedError,
    SyncError,
    count_ber,
    decide_ook,
    ffe_train,
    normalize,
    downsample,
    select_phase,
    sensitivity_at,
    synchronize,
)
from .signal import (
    BitSequence,
    Waveform,
    band_energy_fraction,
    convolve_same,
    generate_prbs,
    ook_target,
    psd_estimate,
)

log = logging.getLogger(__name__)

# noise stream reserved for Phase-I training, disjoint from sweep point indices
PHASE1_STREAM = 2**31 - 1
HIGH_BAND_START_HZ = 8e9


@dataclass(frozen=True)
class PreparedTx:
    """Everything about one operating point that does not depend on ROP."""

    bits: BitSequence
    target: Waveform
    tx: Waveform
    # noiseless unit-gain detected signal; noise is added per frame
    clean: Waveform
    h_bl: FirFilter | None = None


@dataclass(frozen=True)
class SweepResult:
    records: tuple[BerRecord, ...]
    config_fingerprint: str
    tool_version: str
    variable: str
    sensitivity_dbm: float | None = None
    csv_path: Path | None = None


@dataclass(frozen=True)
class SpectrumReport:
    freq_hz: np.ndarray
    tx_psd: dict[str, np.ndarray]
    rx_psd: dict[str, np.ndarray]
    high_band_fraction: dict[str, float]
    rx_flatness_db2: dict[str, float]
    paths: tuple[Path, ...] = ()


def link_at(cfg: ExperimentConfig, point: float | None = None, variable: str | None = None) -> LinkConfig:
    """Link config with the sweep variable set to ``point``."""
    link = cfg.link
    if point is None:
        return link
    variable = variable or cfg.sweep.variable
    if variable == "rop_dbm":
        return dataclasses.replace(link, noise=dataclasses.replace(link.noise, rop_dbm=float(point)))
    return dataclasses.replace(link, baud=float(point))


def frame_bits(cfg: ExperimentConfig) -> BitSequence:
    s = cfg.signal
    return generate_prbs(s.prbs_order, s.prbs_seed, s.n_bits)


def build_target(cfg: ExperimentConfig, link: LinkConfig) -> tuple[BitSequence, Waveform]:
    s = cfg.signal
    bits = frame_bits(cfg)
    return bits, ook_target(bits, link.baud, link.sps, s.rolloff, s.span_symbols, s.bias)


def _unit_power(w: Waveform, label: str) -> Waveform:
    p = float(np.mean(w.samples**2))
    return w.replace(w.samples / math.sqrt(p) if p > 0 else w.samples, label)


def obtain_h_bl(cfg: ExperimentConfig, link: LinkConfig | None = None) -> FirFilter:
    """Phase-I taps: read from ``phase1.taps_file`` or trained on the link."""
    p1 = cfg.phase1
    if p1.taps_file:
        return import_taps(p1.taps_file)
    link = link or cfg.link
    bits, target = build_target(cfg, link)
    train_link = dataclasses.replace(
        link, noise=dataclasses.replace(link.noise, rop_dbm=p1.rop_dbm)
    )
    return phase1_train(
        train_link,
        cfg.gs,
        p1.ffe_taps,
        min(p1.train_symbols, len(bits)),
        seed=(cfg.seed, PHASE1_STREAM),
        mu=p1.mu,
        epochs=p1.epochs,
        fractional=p1.fractional,
        bits=bits,
        target=target,
    )


def predistort(
    cfg: ExperimentConfig,
    link: LinkConfig,
    scheme: str,
    target: Waveform,
    h_bl: FirFilter | None = None,
) -> Waveform:
    """Transmit drive amplitude for ``scheme``, at unit mean power."""
    if scheme == "none":
        return _unit_power(target, "a_tx")
    if scheme == "modified-gs":
        return pre_edc(target, link, cfg.gs)
    if h_bl is None:
        raise ValueError("pre-bl-edc needs Phase-I taps")
    p1 = cfg.phase1
    tap_rate = link.sample_rate if p1.fractional else link.baud
    return pre_bl_edc(target, link, cfg.gs, h_bl, p1.k, p1.eps, tap_rate, p1.gs_eps)


def prepare(
    cfg: ExperimentConfig,
    link: LinkConfig | None = None,
    scheme: str | None = None,
    h_bl: FirFilter | None = None,
) -> PreparedTx:
    link = link or cfg.link
    scheme = scheme or cfg.scheme
    bits, target = build_target(cfg, link)
    if scheme == "pre-bl-edc" and h_bl is None:
        h_bl = obtain_h_bl(cfg, link)
    tx = predistort(cfg, link, scheme, target, h_bl)
    return PreparedTx(bits, target, tx, received_clean(tx, link), h_bl)


def _equalize(sym: Waveform, taps: FirFilter) -> Waveform:
    """FFE applied circularly, matching the circular frame."""
    n = len(taps)
    s = sym.samples
    ext = sym.replace(np.concatenate((s[-n:], s, s[:n])))
    return sym.replace(convolve_same(ext, taps.taps, taps.delay).samples[n:-n])


def _receive(rx: Waveform, lag: int, sps: int, phase: int) -> Waveform:
    """Align by the calibrated lag, downsample and normalize."""
    return normalize(downsample(rx.replace(np.roll(rx.samples, -lag)), sps, phase))


def _select_ffe(
    cfg: ExperimentConfig, sym: Waveform, bits: BitSequence
) -> tuple[FirFilter, int]:
    """Train each candidate tap count on the head of the calibration frame and
    keep the one with the fewest errors on the rest of it."""
    f = cfg.ffe
    n_train = min(f.train_symbols, len(bits) // 2)
    known = Waveform(2.0 * bits.bits[:n_train] - 1.0, sym.sample_rate)
    head = sym.replace(sym.samples[:n_train])
    best = None
    for n in (f.tap_grid if f.n_taps is None else (f.n_taps,)):
        eq = ffe_train(head, known, n, f.mu, f.epochs)
        if eq.diverging:
            log.warning("FFE with %d taps diverging (tail growth %.2f)", n, eq.tail_growth)
            continue
        dec = decide_ook(_equalize(sym, eq.taps))
        errors = int(np.count_nonzero(dec.bits[n_train:] != bits.bits[n_train:]))
        if best is None or errors < best[0]:
            best = (errors, eq.taps, n)
    if best is None:
        raise TrainingError("every FFE candidate diverged")
    return best[1], best[2]


def measure(
    cfg: ExperimentConfig, prep: PreparedTx, link: LinkConfig, index: int
) -> BerRecord:
    """Monte-Carlo BER at one operating point.

    Frame 0 calibrates the sync lag, the sampling phase and, if enabled, the FFE; frames 1.. with
    fresh noise are counted until ``mc.min_errors`` errors or ``mc.max_bits``
    bits. Receiver failures give a record with BER 1 and a status string.
    """
    scheme = cfg.scheme
    use_ffe = cfg.ffe_enabled
    fields = dict(rop_dbm=link.noise.rop_dbm, baud=link.baud, scheme=scheme, ffe_used=use_ffe)
    bits = prep.bits
    n = len(bits)
    reference = prep.target.replace(prep.target.samples**2)

    def frame(k: int) -> Waveform:
        noise = dataclasses.replace(link.noise, seed=(cfg.seed, index, k))
        return add_noise(prep.clean, noise)

    n_taps = 0
    try:
        rx0 = frame(0)
        lag = synchronize(rx0, reference, min(len(rx0) - 1, 64 * link.sps))
        phase = select_phase(rx0.replace(np.roll(rx0.samples, -lag)), link.sps)
        taps = None
        if use_ffe:
            taps, n_taps = _select_ffe(cfg, _receive(rx0, lag, link.sps, phase), bits)
        errors = total = 0
        k = 1
        while errors < cfg.mc.min_errors and total < cfg.mc.max_bits:
            sym = _receive(frame(k), lag, link.sps, phase)
            if taps is not None:
                sym = _equalize(sym, taps)
            errors += count_ber(decide_ook(sym), bits).bit_errors
            total += n
            k += 1
    except (SyncError, DecisionError, TrainingError) as e:
        status = {SyncError: "sync-failed", DecisionError: "decision-failed"}.get(
            type(e), "training-diverged"
        )
        log.warning("point %d (%s): %s", index, scheme, e)
        return BerRecord(n, n, ffe_taps=n_taps, status=status, **fields)
    return BerRecord(errors, total, ffe_taps=n_taps, **fields)


def run_single(
    cfg: ExperimentConfig, point: float | None = None, index: int = 0, h_bl: FirFilter | None = None
) -> BerRecord:
    """Full pipeline at one sweep point (``None``: the config's own link)."""
    link = link_at(cfg, point)
    return measure(cfg, prepare(cfg, link, h_bl=h_bl), link, index)


def _meta(cfg: ExperimentConfig) -> dict[str, str]:
    return {
        "tool": "prebledc",
        "tool_version": __version__,
        "config_fingerprint": fingerprint(cfg),
        "seed": str(cfg.seed),
        "scheme": cfg.scheme,
    }


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_sweep(cfg: ExperimentConfig, write: bool = True) -> SweepResult:
    """One record per sweep value, in sweep order.

    ROP sweeps share the pre-distorted frame and the noiseless link output
    across points; baud sweeps rebuild both per point. Point ``i`` draws its
    noise from seeds ``(seed, i, frame)``.
    """
    values = cfg.sweep.values
    links = [link_at(cfg, v) for v in values]
    if cfg.sweep.variable == "rop_dbm":
        shared = prepare(cfg, links[0])

        def task(i: int) -> BerRecord:
            return measure(cfg, shared, links[i], i)

    else:

        def task(i: int) -> BerRecord:
            return measure(cfg, prepare(cfg, links[i]), links[i], i)

    if cfg.mc.jobs > 1:
        with ThreadPoolExecutor(cfg.mc.jobs) as pool:
            records = tuple(pool.map(task, range(len(values))))
    else:
        records = tuple(task(i) for i in range(len(values)))

    sens = None
    if cfg.sweep.variable == "rop_dbm":
        try:
            sens = sensitivity_at(records, cfg.fec_threshold)
        except (NotReachedError, ValueError) as e:
            log.info("sensitivity: %s", e)
    path = None
    if write:
        meta = _meta(cfg)
        meta["sweep_variable"] = cfg.sweep.variable
        meta["fec_threshold"] = repr(cfg.fec_threshold)
        if sens is not None:
            meta["sensitivity_dbm"] = repr(sens)
        path = Path(cfg.out_dir) / f"sweep_{cfg.sweep.variable}_{cfg.scheme}.csv"
        write_sweep_csv(records, path, meta, _timestamp())
    return SweepResult(records, fingerprint(cfg), __version__, cfg.sweep.variable, sens, path)


def rx_flatness_db2(freq: np.ndarray, psd: np.ndarray, f_max: float) -> float:
    """Variance of the dB PSD over ``0 < f <= f_max`` (DC is removed by AC coupling)."""
    band = (freq > 0) & (freq <= f_max)
    return float(np.var(10 * np.log10(psd[band])))


def run_spectrum_report(
    cfg: ExperimentConfig,
    schemes: tuple[str, ...] = ("modified-gs", "pre-bl-edc"),
    write: bool = True,
) -> SpectrumReport:
    """PSDs of the pre-distorted and the noiseless received signals per scheme."""
    for s in schemes:
        if s not in ("modified-gs", "pre-bl-edc"):
            raise ValueError(f"spectrum report compares pre-distortion schemes, got {s!r}")
    link = cfg.link
    h_bl = obtain_h_bl(cfg, link) if "pre-bl-edc" in schemes else None
    _, target = build_target(cfg, link)
    tx_psd, rx_psd, hb, flat = {}, {}, {}, {}
    freq = None
    for s in schemes:
        if s in tx_psd:
            continue
        tx = predistort(cfg, link, s, target, h_bl)
        rx = received_clean(tx, link)
        freq, tx_psd[s] = psd_estimate(tx)
        _, rx_psd[s] = psd_estimate(rx)
        hb[s] = band_energy_fraction(tx, HIGH_BAND_START_HZ, tx.sample_rate / 2)
        flat[s] = rx_flatness_db2(freq, rx_psd[s], 0.8 * link.baud / 2)

    paths: tuple[Path, ...] = ()
    if write:
        meta = _meta(cfg)
        names = list(tx_psd)
        footer = [
            f"high_band_fraction[{HIGH_BAND_START_HZ:g},{link.sample_rate / 2:g}] "
            + " ".join(f"{s}={hb[s]!r}" for s in names),
            f"rx_db_psd_variance[0,{0.8 * link.baud / 2:g}] "
            + " ".join(f"{s}={flat[s]!r}" for s in names),
        ]
        cols = ["freq_hz"] + [f"psd_{s}" for s in names]
        out = Path(cfg.out_dir)
        paths = (
            write_table_csv(
                out / "spectrum_tx.csv", cols, zip(freq, *(tx_psd[s] for s in names)), meta, footer
            ),
            write_table_csv(
                out / "spectrum_rx.csv", cols, zip(freq, *(rx_psd[s] for s in names)), meta, footer
            ),
        )
    return SpectrumReport(freq, tx_psd, rx_psd, hb, flat, paths)
