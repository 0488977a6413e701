"""Experiment configuration: flat dotted ``key = value`` files resolved onto
nested frozen dataclasses, plus a stable fingerprint of the result."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import types
from dataclasses import dataclass
from dataclasses import field as dc_field
from pathlib import Path
from typing import Any, Mapping, Union, get_args, get_origin, get_type_hints

from .channel import CD_PHASE_SIGN, BlFilterSpec, FiberParams, LinkConfig, NoiseSpec
from .precomp import DEFAULT_GS_EPS, GsConfig
from .rxdsp import HD_FEC_THRESHOLD, SCHEMES

SWEEP_VARIABLES = ("rop_dbm", "baud")
# derived per frame from the master seed
_FORBIDDEN_KEYS = {"link.noise.seed"}


class ConfigError(ValueError):
    """Malformed, unknown or inconsistent configuration."""


@dataclass(frozen=True)
class SignalConfig:
    prbs_order: int = 15
    prbs_seed: int = 0x7FFF
    n_bits: int = 2**15
    rolloff: float = 1.0
    span_symbols: int = 16
    # intensity offset of the receiver target; sets its extinction ratio
    bias: float = 1.0

    def __post_init__(self):
        if self.n_bits < 1:
            raise ValueError("signal.n_bits must be >= 1")


@dataclass(frozen=True)
class FfeConfig:
    # None: on for every scheme except pre-bl-edc
    enabled: bool | None = None
    # None: pick the best count from tap_grid on the calibration frame
    n_taps: int | None = None
    tap_grid: tuple[int, ...] = (11, 21, 31, 41, 51)
    mu: float = 5e-4
    epochs: int = 3
    train_symbols: int = 10_000

    def __post_init__(self):
        counts = self.tap_grid if self.n_taps is None else (self.n_taps,)
        if not counts or any(n < 1 or n % 2 == 0 for n in counts):
            raise ValueError("FFE tap counts must be odd and positive")
        if self.mu <= 0 or self.epochs < 1 or self.train_symbols < 1:
            raise ValueError("ffe.mu, ffe.epochs and ffe.train_symbols must be positive")


@dataclass(frozen=True)
class Phase1Config:
    # tap file from an earlier phase1-train run; None trains inline
    taps_file: str | None = None
    ffe_taps: int = 21
    train_symbols: int = 20_000
    rop_dbm: float = -2.0
    fractional: bool = False
    mu: float = 5e-4
    epochs: int = 3
    # inverse length; None uses the tap count of h_BL
    k: int | None = None
    eps: float = 1e-4
    gs_eps: float = DEFAULT_GS_EPS


@dataclass(frozen=True)
class SweepConfig:
    variable: str = "rop_dbm"
    values: tuple[float, ...] = tuple(float(v) for v in range(-14, -1))

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep.variable must be one of {SWEEP_VARIABLES}")
        v = self.values
        if not v:
            raise ValueError("sweep.values must be non-empty")
        d = [b - a for a, b in zip(v, v[1:])]
        if not (all(x > 0 for x in d) or all(x < 0 for x in d)):
            raise ValueError("sweep.values must be strictly monotone")


@dataclass(frozen=True)
class MonteCarloConfig:
    min_errors: int = 100
    max_bits: int = 10_000_000
    jobs: int = 1

    def __post_init__(self):
        if self.min_errors < 1 or self.max_bits < 1 or self.jobs < 1:
            raise ValueError("mc.min_errors, mc.max_bits and mc.jobs must be positive")


def _default_link() -> LinkConfig:
    return LinkConfig(noise=NoiseSpec(sigma_ref=0.01, rop_dbm=-8.0))


@dataclass(frozen=True)
class ExperimentConfig:
    link: LinkConfig = dc_field(default_factory=_default_link)
    gs: GsConfig = dc_field(default_factory=GsConfig)
    scheme: str = "pre-bl-edc"
    ffe: FfeConfig = dc_field(default_factory=FfeConfig)
    phase1: Phase1Config = dc_field(default_factory=Phase1Config)
    signal: SignalConfig = dc_field(default_factory=SignalConfig)
    sweep: SweepConfig = dc_field(default_factory=SweepConfig)
    mc: MonteCarloConfig = dc_field(default_factory=MonteCarloConfig)
    fec_threshold: float = HD_FEC_THRESHOLD
    seed: int = 0
    out_dir: str = "results"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if not 0 < self.fec_threshold < 1:
            raise ValueError("fec_threshold must lie in (0, 1)")

    @property
    def ffe_enabled(self) -> bool:
        if self.ffe.enabled is None:
            return self.scheme != "pre-bl-edc"
        return self.ffe.enabled


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Duplicate keys are errors."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(raw: str, tp: Any, key: str) -> Any:
    origin = get_origin(tp)
    if origin in (Union, types.UnionType):
        args = get_args(tp)
        if type(None) in args and raw.strip().lower() in ("none", "null", ""):
            return None
        for a in args:
            if a is type(None):
                continue
            try:
                return _coerce(raw, a, key)
            except ConfigError:
                pass
        raise ConfigError(f"{key}: cannot parse {raw!r} as {tp}")
    if origin is tuple:
        elem = get_args(tp)[0]
        parts = [p.strip() for p in raw.split(",")]
        if parts == [""]:
            return ()
        return tuple(_coerce(p, elem, key) for p in parts)
    s = raw.strip()
    if tp is bool:
        low = s.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if tp is int:
        try:
            return int(s, 0)
        except ValueError:
            pass
        try:
            f = float(s)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        if not f.is_integer():
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(f)
    if tp is float:
        try:
            v = float(s)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
        if math.isnan(v):
            raise ConfigError(f"{key}: NaN is not a valid value")
        return v
    if tp is str:
        return s
    raise ConfigError(f"{key}: names a section, not a value")


def _set_path(obj: Any, path: list[str], raw: str, key: str) -> Any:
    if not dataclasses.is_dataclass(obj):
        raise ConfigError(f"unknown config key {key!r}")
    hints = get_type_hints(type(obj))
    name = path[0]
    if name not in {f.name for f in dataclasses.fields(obj)}:
        raise ConfigError(f"unknown config key {key!r}")
    if len(path) == 1:
        value = _coerce(raw, hints[name], key)
    else:
        value = _set_path(getattr(obj, name), path[1:], raw, key)
    return dataclasses.replace(obj, **{name: value})


def apply_overrides(cfg: ExperimentConfig, values: Mapping[str, str]) -> ExperimentConfig:
    """Apply dotted ``key -> raw value`` pairs in order; validation errors become ConfigError."""
    for key, raw in values.items():
        if key in _FORBIDDEN_KEYS:
            raise ConfigError(f"{key} cannot be set: noise seeds derive from 'seed'")
        try:
            cfg = _set_path(cfg, key.split("."), raw, key)
        except ConfigError:
            raise
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{key} = {raw}: {e}") from e
    return cfg


def parse_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not 'key=value'")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def load_config(
    path: str | Path | None = None, overrides: Mapping[str, str] | None = None
) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e
        cfg = apply_overrides(cfg, parse_config_text(text, str(path)))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float):
        # repr round-trips exactly and spells inf the same everywhere
        return repr(v)
    return v


def resolved_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    d = dataclasses.asdict(cfg)
    d.pop("out_dir")
    d["cd_phase_sign"] = CD_PHASE_SIGN
    return d


def fingerprint(cfg: ExperimentConfig) -> str:
    """sha256 over the resolved config, excluding the output directory."""
    payload = json.dumps(_jsonable(resolved_dict(cfg)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def flatten(cfg: Any, prefix: str = "") -> dict[str, Any]:
    """Dotted key -> value view of a config, e.g. for writing it back out."""
    out: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(v):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


__all__ = [
    "BlFilterSpec",
    "ConfigError",
    "ExperimentConfig",
    "FfeConfig",
    "FiberParams",
    "MonteCarloConfig",
    "Phase1Config",
    "SignalConfig",
    "SweepConfig",
    "apply_overrides",
    "fingerprint",
    "flatten",
    "load_config",
    "parse_config_text",
    "parse_override",
]
