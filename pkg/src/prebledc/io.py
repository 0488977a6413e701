"""Waveform, tap and result file formats."""
from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fir import FirFilter
from .rxdsp import BerRecord
from .signal import Waveform

RAW_MAGIC = b"PBLW"
_RAW_HEADER = struct.Struct("<4sQ4s")

SWEEP_COLUMNS = (
    "rop_dbm",
    "baud",
    "scheme",
    "ffe_used",
    "ffe_taps",
    "bit_errors",
    "bits_total",
    "ber",
    "status",
)
TIMESTAMP_PREFIX = "# timestamp="


class FileFormatError(ValueError):
    """Malformed input file; the message carries path and line number."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from e


def _read_text(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as e:
        raise OSError(f"cannot read {path}: {e.strerror or e}") from e


def _header_lines(meta: dict[str, str]) -> list[str]:
    return [f"# {k}={v}" for k, v in meta.items() if v is not None]


def export_waveform(
    w: Waveform, path: str | Path, fmt: str = "csv", fingerprint: str | None = None
) -> Path:
    """Write a real waveform as 17-digit CSV or as little-endian float64 raw.

    The raw layout has no room for metadata, so ``fingerprint`` is only
    recorded in CSV files.
    """
    path = Path(path)
    s = np.asarray(w.samples)
    if s.size == 0:
        raise ValueError("refusing to write an empty waveform")
    if np.iscomplexobj(s):
        raise ValueError("only real waveforms can be exported")
    if fmt == "csv":
        lines = [f"# samples={s.size} fs={_fmt(w.sample_rate)}"]
        if fingerprint:
            lines.append(f"# config_fingerprint={fingerprint}")
        lines.extend(_fmt(v) for v in s)
        _write_text(path, "\n".join(lines) + "\n")
    elif fmt == "raw":
        blob = _RAW_HEADER.pack(RAW_MAGIC, s.size, b"\0" * 4) + s.astype("<f8").tobytes()
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(blob)
        except OSError as e:
            raise OSError(f"cannot write {path}: {e.strerror or e}") from e
    else:
        raise ValueError(f"unknown waveform format {fmt!r}")
    return path


def import_waveform(path: str | Path, sample_rate: float | None = None) -> Waveform:
    """Read either export format. Raw files carry no rate, so pass ``sample_rate``."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise OSError(f"cannot read {path}: {e.strerror or e}") from e
    if blob[:4] == RAW_MAGIC:
        if len(blob) < _RAW_HEADER.size:
            raise FileFormatError(f"{path}: truncated raw header")
        _, n, _ = _RAW_HEADER.unpack_from(blob)
        if len(blob) != _RAW_HEADER.size + 8 * n:
            raise FileFormatError(f"{path}: size does not match sample count {n}")
        samples = np.frombuffer(blob, "<f8", count=n, offset=_RAW_HEADER.size)
        return Waveform(samples.astype(np.float64), sample_rate or 1.0)

    n_decl = fs = None
    values = []
    for lineno, line in enumerate(blob.decode().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                k, _, v = tok.partition("=")
                try:
                    if k == "samples":
                        n_decl = int(v)
                    elif k == "fs":
                        fs = float(v)
                except ValueError:
                    raise FileFormatError(f"{path}:{lineno}: bad header value {tok!r}") from None
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise FileFormatError(f"{path}:{lineno}: not a number: {line!r}") from None
    if n_decl is None or fs is None:
        raise FileFormatError(f"{path}: missing '# samples=<N> fs=<Hz>' header")
    if n_decl != len(values):
        raise FileFormatError(f"{path}: header says {n_decl} samples, found {len(values)}")
    return Waveform(np.array(values), fs)


def export_taps(h: FirFilter, path: str | Path, fingerprint: str | None = None) -> Path:
    path = Path(path)
    lines = [f"# delay={h.delay}"]
    if fingerprint:
        lines.append(f"# config_fingerprint={fingerprint}")
    lines.extend(_fmt(t) for t in h.taps)
    _write_text(path, "\n".join(lines) + "\n")
    return path


def import_taps(path: str | Path) -> FirFilter:
    path = Path(path)
    delay = None
    taps = []
    for lineno, line in enumerate(_read_text(path).splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            if k.strip() == "delay":
                try:
                    delay = int(v)
                except ValueError:
                    raise FileFormatError(f"{path}:{lineno}: bad delay {v!r}") from None
            continue
        try:
            taps.append(float(line))
        except ValueError:
            raise FileFormatError(f"{path}:{lineno}: not a tap value: {line!r}") from None
    if delay is None:
        raise FileFormatError(f"{path}: missing '# delay=<d>' header")
    if not taps:
        raise FileFormatError(f"{path}: no taps")
    if not 0 <= delay < len(taps):
        raise FileFormatError(f"{path}: delay {delay} outside [0, {len(taps)})")
    return FirFilter(np.array(taps), delay)


def sweep_csv_text(
    records: Sequence[BerRecord], meta: dict[str, str], timestamp: str | None = None
) -> str:
    lines = _header_lines(meta)
    if timestamp is not None:
        lines.append(TIMESTAMP_PREFIX + timestamp)
    lines.append(",".join(SWEEP_COLUMNS))
    for r in records:
        lines.append(
            ",".join(
                (
                    _fmt(r.rop_dbm),
                    _fmt(r.baud),
                    r.scheme,
                    str(int(r.ffe_used)),
                    str(r.ffe_taps),
                    str(r.bit_errors),
                    str(r.bits_total),
                    _fmt(r.ber),
                    r.status,
                )
            )
        )
    return "\n".join(lines) + "\n"


def write_sweep_csv(
    records: Sequence[BerRecord],
    path: str | Path,
    meta: dict[str, str],
    timestamp: str | None = None,
) -> Path:
    path = Path(path)
    _write_text(path, sweep_csv_text(records, meta, timestamp))
    return path


def data_section(text: str) -> str:
    """File content with the timestamp line removed (the determinism contract)."""
    return "".join(
        l for l in text.splitlines(keepends=True) if not l.startswith(TIMESTAMP_PREFIX)
    )


def read_sweep_csv(path: str | Path) -> tuple[list[BerRecord], dict[str, str]]:
    path = Path(path)
    meta: dict[str, str] = {}
    records = []
    header_seen = False
    for lineno, line in enumerate(_read_text(path).splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
            continue
        cells = line.split(",")
        if not header_seen:
            if tuple(cells) != SWEEP_COLUMNS:
                raise FileFormatError(f"{path}:{lineno}: unexpected columns {cells}")
            header_seen = True
            continue
        if len(cells) != len(SWEEP_COLUMNS):
            raise FileFormatError(f"{path}:{lineno}: expected {len(SWEEP_COLUMNS)} cells")
        row = dict(zip(SWEEP_COLUMNS, cells))
        try:
            records.append(
                BerRecord(
                    bit_errors=int(row["bit_errors"]),
                    bits_total=int(row["bits_total"]),
                    rop_dbm=float(row["rop_dbm"]),
                    baud=float(row["baud"]),
                    scheme=row["scheme"],
                    ffe_used=bool(int(row["ffe_used"])),
                    ffe_taps=int(row["ffe_taps"]),
                    status=row["status"],
                )
            )
        except ValueError as e:
            raise FileFormatError(f"{path}:{lineno}: {e}") from None
    return records, meta


def write_table_csv(
    path: str | Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[float]],
    meta: dict[str, str],
    footer: Sequence[str] = (),
) -> Path:
    """Numeric table with ``# key=value`` header and optional ``#`` footer lines."""
    path = Path(path)
    lines = _header_lines(meta)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) if not math.isnan(v) else "nan" for v in row))
    lines.extend("# " + f for f in footer)
    _write_text(path, "\n".join(lines) + "\n")
    return path
