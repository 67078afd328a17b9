"""Nested dataclass configuration with JSON loading and range validation."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union


class ConfigError(ValueError):
    pass


@dataclass
class BgConfig:
    history: int = 100
    var_threshold: float = 25.0
    shadow_threshold: float = 0.5
    max_components: int = 5
    background_ratio: float = 0.9
    complexity_prior: float = 0.05
    var_init: float = 225.0
    var_min: float = 4.0
    var_max: float = 5 * 225.0
    chroma_spread: float = 0.12
    detect_shadows: bool = True

    def validate(self):
        _check(self.history >= 1, "bg.history must be >= 1")
        _check(self.var_threshold > 0, "bg.var_threshold must be > 0")
        _check(0 < self.shadow_threshold < 1, "bg.shadow_threshold must be in (0, 1)")
        _check(1 <= self.max_components <= 16, "bg.max_components must be in [1, 16]")
        _check(0 < self.background_ratio <= 1, "bg.background_ratio must be in (0, 1]")
        _check(0 <= self.complexity_prior < 1, "bg.complexity_prior must be in [0, 1)")
        _check(0 < self.var_min <= self.var_init <= self.var_max, "bg variances must satisfy 0 < min <= init <= max")
        _check(self.chroma_spread >= 0, "bg.chroma_spread must be >= 0")


@dataclass
class RegionsConfig:
    min_area_frac: float = 0.0002
    dilate_iters: int = 2
    erode_iters: int = 1
    kernel: int = 5

    def validate(self):
        _check(0 <= self.min_area_frac < 1, "regions.min_area_frac must be in [0, 1)")
        _check(self.dilate_iters >= 0 and self.erode_iters >= 0, "regions iterations must be >= 0")
        _check(self.kernel >= 1 and self.kernel % 2 == 1, "regions.kernel must be an odd size >= 1")


@dataclass
class TrackConfig:
    gate_min_px: float = 20.0
    coast_limit: Union[int, str] = "auto"

    def validate(self):
        _check(self.gate_min_px > 0, "track.gate_min_px must be > 0")
        _check(self.coast_limit == "auto" or (isinstance(self.coast_limit, int) and self.coast_limit >= 0),
               "track.coast_limit must be 'auto' or an int >= 0")


@dataclass
class SynopsisConfig:
    cluster_size: int = 15
    bg_snapshot_interval: int = 100
    labels: bool = True
    concurrent: bool = True
    render_workers: int = 1

    def validate(self):
        _check(self.cluster_size >= 1, "synopsis.cluster_size must be >= 1")
        _check(self.bg_snapshot_interval >= 1, "synopsis.bg_snapshot_interval must be >= 1")
        _check(self.render_workers >= 1, "synopsis.render_workers must be >= 1")


@dataclass
class FlowConfig:
    estimator: str = "blockmatch"
    levels: int = 3
    search_px: int = 4
    block: int = 8
    bins: int = 9

    def validate(self):
        _check(self.estimator in ("blockmatch", "farneback"), "flow.estimator must be 'blockmatch' or 'farneback'")
        _check(1 <= self.levels <= 6, "flow.levels must be in [1, 6]")
        _check(1 <= self.search_px <= 16, "flow.search_px must be in [1, 16]")
        _check(self.block in (4, 8, 16), "flow.block must be 4, 8 or 16")
        _check(self.bins in (9, 18), "flow.bins must be 9 or 18")


@dataclass
class ForgeryConfig:
    window: int = 50
    k: float = 3.0
    min_rel_scale: float = 0.5
    var_floor: float = 0.02       # px^2; sub-pixel jitter in a still or panning scene stays below this
    dup_eps: float = 1.0
    min_dup: int = 3
    rho: float = 0.98
    corr_len: int = 10

    def validate(self):
        _check(self.window >= 3, "forgery.window must be >= 3")
        _check(self.k > 0, "forgery.k must be > 0")
        _check(self.min_rel_scale >= 0, "forgery.min_rel_scale must be >= 0")
        _check(self.var_floor >= 0, "forgery.var_floor must be >= 0")
        _check(self.dup_eps >= 0, "forgery.dup_eps must be >= 0")
        _check(self.min_dup >= 1, "forgery.min_dup must be >= 1")
        _check(0 < self.rho <= 1, "forgery.rho must be in (0, 1]")
        _check(self.corr_len >= 3, "forgery.corr_len must be >= 3")


@dataclass
class TamperConfig:
    tau: float = 0.6
    persistence: int = 3

    def validate(self):
        _check(0 < self.tau <= 1, "tamper.tau must be in (0, 1]")
        _check(self.persistence >= 1, "tamper.persistence must be >= 1")


@dataclass
class BusynessConfig:
    window: int = 5
    margin: float = 0.1
    hits: int = 2
    min_magnitude: float = 0.5
    features: str = "dense"
    max_corners: int = 400

    def validate(self):
        _check(self.window >= 1, "busyness.window must be >= 1")
        _check(self.margin >= 0, "busyness.margin must be >= 0")
        _check(self.hits >= 1, "busyness.hits must be >= 1")
        _check(self.min_magnitude >= 0, "busyness.min_magnitude must be >= 0")
        _check(self.features in ("dense", "corners"), "busyness.features must be 'dense' or 'corners'")
        _check(self.max_corners >= 1, "busyness.max_corners must be >= 1")


@dataclass
class TrespassConfig:
    area_frac: float = 0.01
    persistence: int = 2

    def validate(self):
        _check(0 <= self.area_frac < 1, "trespass.area_frac must be in [0, 1)")
        _check(self.persistence >= 1, "trespass.persistence must be >= 1")


@dataclass
class EvalConfig:
    iou_threshold: float = 0.5

    def validate(self):
        _check(0 < self.iou_threshold <= 1, "eval.iou_threshold must be in (0, 1]")


@dataclass
class Config:
    bg: BgConfig = field(default_factory=BgConfig)
    regions: RegionsConfig = field(default_factory=RegionsConfig)
    track: TrackConfig = field(default_factory=TrackConfig)
    synopsis: SynopsisConfig = field(default_factory=SynopsisConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    forgery: ForgeryConfig = field(default_factory=ForgeryConfig)
    tamper: TamperConfig = field(default_factory=TamperConfig)
    busyness: BusynessConfig = field(default_factory=BusynessConfig)
    trespass: TrespassConfig = field(default_factory=TrespassConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> "Config":
        for f in dataclasses.fields(self):
            getattr(self, f.name).validate()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def set(self, dotted: str, value: Any) -> None:
        section, _, key = dotted.partition(".")
        sub = getattr(self, section, None)
        if sub is None or not dataclasses.is_dataclass(sub) or key not in _field_names(sub):
            raise ConfigError(f"unknown config key {dotted!r}")
        setattr(sub, key, _coerce(sub, key, value))


def _check(ok: bool, msg: str) -> None:
    if not ok:
        raise ConfigError(msg)


def _field_names(obj) -> set[str]:
    return {f.name for f in dataclasses.fields(obj)}


def _coerce(sub, key, value):
    current = getattr(sub, key)
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects a boolean, got {value!r}")
        return value
    if isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(current, int) and not isinstance(current, bool) and isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def from_dict(doc: dict) -> Config:
    """Build a Config from a nested dict; unknown sections or keys raise ConfigError."""
    cfg = Config()
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    for section, values in doc.items():
        if section not in _field_names(cfg):
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key, value in values.items():
            cfg.set(f"{section}.{key}", value)
    return cfg.validate()


def load_config(path: Optional[Union[str, Path]] = None) -> Config:
    if path is None:
        return Config().validate()
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return from_dict(doc)
