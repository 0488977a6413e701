import dataclasses
import math

import numpy as np
import pytest

from prebledc.channel import BlFilterSpec, FiberParams, NoiseSpec
from prebledc.config import apply_overrides
from prebledc.experiment import (
    build_target,
    obtain_h_bl,
    predistort,
    prepare,
    run_single,
    run_spectrum_report,
    run_sweep,
)
from prebledc.io import data_section, export_taps, read_sweep_csv
from prebledc.precomp import pre_bl_edc


def clean_cfg(cfg, scheme="none"):
    link = dataclasses.replace(
        cfg.link,
        fiber=FiberParams(length_km=0),
        bl=BlFilterSpec(f_3db=math.inf),
        noise=NoiseSpec(0.0, 0.0),
    )
    return dataclasses.replace(cfg, link=link, scheme=scheme)


class TestRunSingle:
    @pytest.mark.parametrize("scheme", ["none", "modified-gs", "pre-bl-edc"])
    def test_clean_channel_error_free(self, small_cfg, scheme):
        rec = run_single(clean_cfg(small_cfg, scheme))
        assert rec.status == "ok"
        assert rec.bit_errors == 0
        assert rec.bits_total >= 4096

    def test_deterministic(self, small_cfg):
        cfg = dataclasses.replace(small_cfg, scheme="modified-gs")
        assert run_single(cfg, -9.0) == run_single(cfg, -9.0)

    def test_record_fields(self, small_cfg):
        rec = run_single(dataclasses.replace(small_cfg, scheme="none"), -6.0)
        assert rec.rop_dbm == -6.0 and rec.baud == 32e9
        assert rec.ffe_used and rec.ffe_taps == 11

    def test_pre_bl_edc_defaults_to_no_ffe(self, small_cfg):
        rec = run_single(small_cfg)
        assert rec.scheme == "pre-bl-edc" and not rec.ffe_used and rec.ffe_taps == 0

    def test_stops_at_min_errors(self, small_cfg):
        cfg = dataclasses.replace(small_cfg, scheme="none")
        cfg = apply_overrides(cfg, {"mc.min_errors": "1", "mc.max_bits": "1e6"})
        rec = run_single(cfg, -14.0)
        assert rec.bits_total == 4096

    def test_baud_point(self, small_cfg):
        cfg = apply_overrides(small_cfg, {"sweep.variable": "baud", "sweep.values": "20e9, 28e9"})
        assert run_single(cfg, 20e9).baud == 20e9

    def test_failure_recorded_not_raised(self, small_cfg):
        # noise swamps the signal, so the correlation peak stays below the lock level
        cfg = apply_overrides(clean_cfg(small_cfg), {"link.noise.sigma_ref": "100"})
        rec = run_single(cfg)
        assert rec.status == "sync-failed"
        assert rec.ber == 1.0


class TestRunSweep:
    def test_rows_and_order(self, small_cfg):
        res = run_sweep(dataclasses.replace(small_cfg, scheme="none"))
        assert [r.rop_dbm for r in res.records] == [-12.0, -8.0, -4.0]
        back, meta = read_sweep_csv(res.csv_path)
        assert back == list(res.records)
        assert meta["config_fingerprint"] == res.config_fingerprint
        assert meta["tool_version"] == res.tool_version

    def test_rerun_identical_bytes(self, small_cfg, tmp_path):
        a = run_sweep(small_cfg).csv_path.read_text()
        other = dataclasses.replace(small_cfg, out_dir=str(tmp_path / "again"))
        b = run_sweep(other).csv_path.read_text()
        assert data_section(a) == data_section(b)

    def test_jobs_do_not_change_results(self, small_cfg):
        cfg = dataclasses.replace(small_cfg, scheme="modified-gs")
        par = apply_overrides(cfg, {"mc.jobs": "3"})
        assert run_sweep(cfg, write=False).records == run_sweep(par, write=False).records

    def test_seed_changes_noise(self, small_cfg):
        cfg = dataclasses.replace(small_cfg, scheme="none")
        a = run_sweep(cfg, write=False).records
        b = run_sweep(dataclasses.replace(cfg, seed=7), write=False).records
        assert a != b

    def test_baud_sweep(self, small_cfg):
        cfg = apply_overrides(
            small_cfg, {"scheme": "none", "sweep.variable": "baud", "sweep.values": "20e9, 32e9"}
        )
        res = run_sweep(cfg, write=False)
        assert [r.baud for r in res.records] == [20e9, 32e9]
        assert res.sensitivity_dbm is None


class TestSpectrum:
    def test_self_comparison_zero_difference(self, small_cfg):
        rep = run_spectrum_report(small_cfg, ("modified-gs", "modified-gs"), write=False)
        a = run_spectrum_report(small_cfg, ("modified-gs",), write=False)
        np.testing.assert_array_equal(rep.tx_psd["modified-gs"], a.tx_psd["modified-gs"])
        assert np.all(rep.tx_psd["modified-gs"] - a.tx_psd["modified-gs"] == 0)

    def test_files(self, small_cfg):
        rep = run_spectrum_report(small_cfg)
        assert len(rep.paths) == 2
        text = rep.paths[0].read_text()
        assert "freq_hz,psd_modified-gs,psd_pre-bl-edc" in text
        assert "high_band_fraction" in text
        assert set(rep.high_band_fraction) == {"modified-gs", "pre-bl-edc"}

    def test_rejects_none(self, small_cfg):
        with pytest.raises(ValueError):
            run_spectrum_report(small_cfg, ("none",), write=False)


class TestPhaseHandoff:
    def test_file_handoff_bit_identical(self, small_cfg, tmp_path):
        link = small_cfg.link
        h = obtain_h_bl(small_cfg)
        path = export_taps(h, tmp_path / "h_bl.csv")
        from_file = apply_overrides(small_cfg, {"phase1.taps_file": str(path)})
        a = prepare(small_cfg, h_bl=h).tx
        b = prepare(from_file).tx
        np.testing.assert_array_equal(a.samples, b.samples)
        _, t = build_target(small_cfg, link)
        direct = pre_bl_edc(t, link, small_cfg.gs, h, tap_rate=link.baud)
        np.testing.assert_array_equal(a.samples, direct.samples)

    def test_pre_bl_edc_needs_taps(self, small_cfg):
        _, t = build_target(small_cfg, small_cfg.link)
        with pytest.raises(ValueError):
            predistort(small_cfg, small_cfg.link, "pre-bl-edc", t)
