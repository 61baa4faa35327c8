"""Versioned analysis configuration.

A config file is a flat JSON object.  Every key is optional except
``config_version``; unknown keys are rejected so that a typo cannot
silently fall back to a default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .iv import IVConfig
from .model import Filter, SpecLimits

CONFIG_VERSION = 1


@dataclass(frozen=True)
class Config:
    config_version: int = CONFIG_VERSION
    # statistics
    iqr_filter: bool = True
    histogram_bins: int = 30
    # shorts
    assumed_rsd_sheet: float | None = None     # used when no sheet map is supplied
    be_width_nm: float = 350.0
    te_width_nm: float = 500.0
    offset_weighted: bool = True
    # junctions
    spec_min_ohm: float = 100.0
    spec_max_ohm: float = 50_000.0
    qubit_area_um2: float = 0.175
    target_r_jj_ohm: float = 7300.0
    # iv
    m_tol: float = 0.15
    trap_min_m: float = 2.0
    jump_ratio: float = 5.0
    noise_floor_a: float = 1e-11
    min_window: int = 4
    min_iv_points: int = 8
    overlap_factor: float = 0.5
    min_traces_per_size: int = 10
    # frequency
    c_q_f: float = 86e-15
    t_c_k: float = 0.71                         # used when no cryo data is supplied
    fit_cq: bool = False
    rn_offset_ohm: float = 0.0
    min_cryo_records: int = 5
    min_rn_spread_ratio: float = 1.5
    target_f01_hz: float = 4.42e9
    bin_tolerance: float = 0.10              # relative half-width
    n_bins: int = 5
    bin_policy: str = "all"
    # transition
    zero_threshold_ohm: float | None = None
    onset_fraction: float = 0.9

    @property
    def filter(self) -> Filter:
        return Filter.IQR_1_5 if self.iqr_filter else Filter.NONE

    @property
    def spec(self) -> SpecLimits:
        return SpecLimits(self.spec_min_ohm, self.spec_max_ohm)

    @property
    def iv(self) -> IVConfig:
        return IVConfig(self.m_tol, self.trap_min_m, self.jump_ratio, self.noise_floor_a,
                        self.min_window, self.min_iv_points)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(self, **kw) -> "Config":
        return validate(replace(self, **{k: v for k, v in kw.items() if v is not None}))


_FIELDS = {f.name: f for f in fields(Config)}


def _check_type(name: str, value: Any) -> Any:
    default = getattr(Config(), name)
    if name in ("assumed_rsd_sheet", "zero_threshold_ohm"):
        if value is None:
            return None
        default = 0.0
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def validate(cfg: Config) -> Config:
    if cfg.config_version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config_version {cfg.config_version}")
    if not 0 < cfg.spec_min_ohm < cfg.spec_max_ohm:
        raise ConfigError("need 0 < spec_min_ohm < spec_max_ohm")
    positive = ("be_width_nm", "te_width_nm", "qubit_area_um2", "target_r_jj_ohm", "m_tol",
                "jump_ratio", "c_q_f", "t_c_k", "target_f01_hz", "bin_tolerance",
                "overlap_factor")
    for name in positive:
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.min_window < 2 or cfg.n_bins < 1 or cfg.histogram_bins < 1:
        raise ConfigError("min_window >= 2, n_bins >= 1 and histogram_bins >= 1 required")
    if cfg.bin_policy not in ("all", "mean"):
        raise ConfigError(f"bin_policy must be 'all' or 'mean', got {cfg.bin_policy!r}")
    if cfg.assumed_rsd_sheet is not None and not 0 <= cfg.assumed_rsd_sheet < 1:
        raise ConfigError("assumed_rsd_sheet must lie in [0, 1)")
    if not 0 < cfg.onset_fraction < 1:
        raise ConfigError("onset_fraction must lie in (0, 1)")
    return cfg


def from_dict(data: Any, source: str = "<config>") -> Config:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", source=source)
    if "config_version" not in data:
        raise ConfigError("missing config_version", source=source)
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}", source=source)
    try:
        values = {k: _check_type(k, v) for k, v in data.items()}
        return validate(Config(**values))
    except ConfigError as exc:
        raise exc.with_source(source) from None


def load_config(path: Path | str | None) -> Config:
    if path is None:
        return Config()
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(p)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", source=str(p), row=exc.lineno) from None
    return from_dict(data, str(p))
