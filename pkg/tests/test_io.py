import struct

import numpy as np
import pytest

from prebledc.fir import FirFilter
from prebledc.io import (
    SWEEP_COLUMNS,
    FileFormatError,
    data_section,
    export_taps,
    export_waveform,
    import_taps,
    import_waveform,
    read_sweep_csv,
    write_sweep_csv,
)
from prebledc.rxdsp import BerRecord, sensitivity_at
from prebledc.signal import Waveform


def wave(n=257):
    rng = np.random.default_rng(0)
    return Waveform(np.abs(rng.standard_normal(n)) * np.pi, 64e9)


class TestWaveformFiles:
    def test_csv_roundtrip_bit_exact(self, tmp_path):
        w = wave()
        p = export_waveform(w, tmp_path / "a.csv", "csv")
        back = import_waveform(p)
        np.testing.assert_array_equal(back.samples, w.samples)
        assert back.sample_rate == w.sample_rate

    def test_csv_header(self, tmp_path):
        p = export_waveform(wave(5), tmp_path / "a.csv", "csv", fingerprint="abc")
        lines = p.read_text().splitlines()
        assert lines[0] == "# samples=5 fs=64000000000"
        assert lines[1] == "# config_fingerprint=abc"
        assert len(lines) == 7

    def test_raw_roundtrip_and_layout(self, tmp_path):
        w = wave(100)
        p = export_waveform(w, tmp_path / "a.raw", "raw")
        blob = p.read_bytes()
        assert len(blob) == 16 + 8 * 100
        assert blob[:4] == b"PBLW"
        assert struct.unpack("<Q", blob[4:12])[0] == 100
        assert blob[12:16] == b"\0\0\0\0"
        back = import_waveform(p, sample_rate=w.sample_rate)
        np.testing.assert_array_equal(back.samples, w.samples)

    def test_empty_rejected(self, tmp_path):
        class Empty:
            samples = np.array([])
            sample_rate = 1.0

        with pytest.raises(ValueError):
            export_waveform(Empty(), tmp_path / "e.csv")
        with pytest.raises(ValueError):
            Waveform(np.array([]), 1.0)

    def test_complex_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_waveform(Waveform(np.array([1j]), 1.0), tmp_path / "c.csv")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            export_waveform(wave(), tmp_path / "a.bin", "hdf5")

    def test_io_error_has_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            export_waveform(wave(), blocker / "sub" / "a.csv")

    def test_truncated_raw(self, tmp_path):
        p = export_waveform(wave(10), tmp_path / "a.raw", "raw")
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(FileFormatError):
            import_waveform(p)

    def test_csv_count_mismatch(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("# samples=3 fs=1\n1\n2\n")
        with pytest.raises(FileFormatError):
            import_waveform(p)


class TestTapFiles:
    def test_roundtrip_exact(self, tmp_path):
        h = FirFilter(np.random.default_rng(1).standard_normal(21) / 3, 7)
        back = import_taps(export_taps(h, tmp_path / "h.csv"))
        np.testing.assert_array_equal(back.taps, h.taps)
        assert back.delay == 7

    def test_header(self, tmp_path):
        p = export_taps(FirFilter(np.array([0.5, 1.0]), 1), tmp_path / "h.csv")
        assert p.read_text().splitlines()[0] == "# delay=1"

    def test_malformed_line_number(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("# delay=0\n1.0\nabc\n")
        with pytest.raises(FileFormatError, match=r"h\.csv:3"):
            import_taps(p)

    @pytest.mark.parametrize(
        "text", ["1.0\n2.0\n", "# delay=x\n1.0\n", "# delay=0\n", "# delay=5\n1.0\n2.0\n"]
    )
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "h.csv"
        p.write_text(text)
        with pytest.raises(FileFormatError):
            import_taps(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError, match="absent"):
            import_taps(tmp_path / "absent.csv")


class TestSweepFiles:
    records = [
        BerRecord(1000, 100_000, -10.0, 32e9, "pre-bl-edc", False, 0),
        BerRecord(100, 100_000, -8.0, 32e9, "pre-bl-edc", False, 0),
    ]

    def test_columns(self, tmp_path):
        p = write_sweep_csv(self.records, tmp_path / "s.csv", {"config_fingerprint": "f"}, "now")
        lines = p.read_text().splitlines()
        header = next(l for l in lines if not l.startswith("#"))
        assert tuple(header.split(",")) == SWEEP_COLUMNS

    def test_roundtrip(self, tmp_path):
        p = write_sweep_csv(self.records, tmp_path / "s.csv", {"config_fingerprint": "f"})
        back, meta = read_sweep_csv(p)
        assert back == self.records
        assert meta["config_fingerprint"] == "f"

    def test_timestamp_outside_data_section(self, tmp_path):
        a = write_sweep_csv(self.records, tmp_path / "a.csv", {"k": "v"}, "2026-01-01").read_text()
        b = write_sweep_csv(self.records, tmp_path / "b.csv", {"k": "v"}, "2030-12-31").read_text()
        assert a != b
        assert data_section(a) == data_section(b)

    def test_sensitivity_fixture_through_file(self, tmp_path):
        p = write_sweep_csv(self.records, tmp_path / "s.csv", {})
        back, _ = read_sweep_csv(p)
        assert sensitivity_at(back, 3.8e-3) == pytest.approx(-9.16, abs=0.01)

    def test_bad_columns(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(FileFormatError):
            read_sweep_csv(p)
