import dataclasses
import math

import pytest

from prebledc.config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    fingerprint,
    flatten,
    load_config,
    parse_config_text,
    parse_override,
)


class TestParse:
    def test_comments_and_blank_lines(self):
        text = "# header\n\nlink.baud = 28e9  # trailing\nscheme=none\n"
        assert parse_config_text(text) == {"link.baud": "28e9", "scheme": "none"}

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match=":2:"):
            parse_config_text("seed = 1\nlink.baud 2\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("seed = 1\nseed = 2\n")

    def test_override_syntax(self):
        assert parse_override("a.b = 3") == ("a.b", "3")
        with pytest.raises(ConfigError):
            parse_override("a.b")


class TestResolve:
    def test_nested_values(self):
        cfg = apply_overrides(
            ExperimentConfig(),
            {
                "link.fiber.length_km": "25",
                "link.bl.f_3db": "inf",
                "link.noise.sigma_ref": "0.02",
                "ffe.enabled": "true",
                "ffe.n_taps": "31",
                "sweep.values": "-10, -8, -6",
                "phase1.k": "none",
                "seed": "0x10",
            },
        )
        assert cfg.link.fiber.length_km == 25.0
        assert math.isinf(cfg.link.bl.f_3db) and cfg.link.bl.bypassed
        assert cfg.link.noise.sigma_ref == 0.02
        assert cfg.ffe.enabled is True and cfg.ffe.n_taps == 31
        assert cfg.sweep.values == (-10.0, -8.0, -6.0)
        assert cfg.phase1.k is None
        assert cfg.seed == 16

    def test_fir_taps_key(self):
        cfg = apply_overrides(
            ExperimentConfig(), {"link.bl_placement": "rx-electrical", "link.bl.taps": "0.2, 1, 0.3"}
        )
        assert cfg.link.bl.taps == (0.2, 1.0, 0.3)

    def test_integer_in_float_notation(self):
        assert apply_overrides(ExperimentConfig(), {"mc.max_bits": "1e6"}).mc.max_bits == 10**6
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), {"mc.max_bits": "1.5"})

    @pytest.mark.parametrize(
        "key, value",
        [
            ("link.fiber.colour", "1"),
            ("nonsense", "1"),
            ("link", "1"),
            ("link.baud.x", "1"),
        ],
    )
    def test_unknown_keys_are_errors(self, key, value):
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), {key: value})

    @pytest.mark.parametrize(
        "key, value",
        [
            ("link.baud", "fast"),
            ("ffe.enabled", "maybe"),
            ("seed", "-1"),
            ("scheme", "magic"),
            ("link.sps", "1"),
            ("link.bl.f_10db", "1e9"),
            ("sweep.values", "-2,-3,-2"),
            ("sweep.values", ""),
            ("sweep.variable", "temperature"),
            ("ffe.n_taps", "10"),
            ("link.noise.sigma_ref", "nan"),
        ],
    )
    def test_invalid_values(self, key, value):
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), {key: value})

    def test_noise_seed_is_derived(self):
        with pytest.raises(ConfigError, match="seed"):
            apply_overrides(ExperimentConfig(), {"link.noise.seed": "3"})

    def test_descending_sweep_allowed(self):
        cfg = apply_overrides(ExperimentConfig(), {"sweep.values": "-2, -6, -10"})
        assert cfg.sweep.values == (-2.0, -6.0, -10.0)

    def test_ffe_default_per_scheme(self):
        assert ExperimentConfig(scheme="none").ffe_enabled
        assert ExperimentConfig(scheme="modified-gs").ffe_enabled
        assert not ExperimentConfig(scheme="pre-bl-edc").ffe_enabled
        cfg = apply_overrides(ExperimentConfig(), {"ffe.enabled": "yes"})
        assert cfg.ffe_enabled

    def test_load_file_then_overrides(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("scheme = none\nlink.baud = 20e9\n")
        cfg = load_config(p, {"link.baud": "28e9"})
        assert cfg.scheme == "none" and cfg.link.baud == 28e9

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")

    def test_flatten_roundtrip(self):
        cfg = apply_overrides(ExperimentConfig(), {"link.baud": "20e9", "ffe.n_taps": "21"})
        flat = {k: v for k, v in flatten(cfg).items() if k != "link.noise.seed"}
        text = {
            k: (", ".join(map(repr, v)) if isinstance(v, tuple) else repr(v) if isinstance(v, float) else str(v))
            for k, v in flat.items()
        }
        assert apply_overrides(ExperimentConfig(), text) == cfg


class TestFingerprint:
    def test_stable(self):
        assert fingerprint(ExperimentConfig()) == fingerprint(ExperimentConfig())
        assert len(fingerprint(ExperimentConfig())) == 64

    def test_out_dir_excluded(self):
        assert fingerprint(ExperimentConfig(out_dir="a")) == fingerprint(ExperimentConfig(out_dir="b"))

    def test_sensitive_to_values(self):
        base = ExperimentConfig()
        assert fingerprint(base) != fingerprint(dataclasses.replace(base, seed=1))
        other = apply_overrides(base, {"link.fiber.length_km": "50.000001"})
        assert fingerprint(base) != fingerprint(other)
