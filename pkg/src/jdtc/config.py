"""Scenario configuration: YAML schema, validation, overrides and model builders.

Key names carry their units (``_s``, ``_m``, ``_m2``, ...). Defaults reproduce
the reference scenario: 3 classes over 5 motion modes, 20 range sensors, a
class-2 target present for k = 6..90.
"""

from __future__ import annotations

import copy
import dataclasses
import math
import typing
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np
import yaml

from .density import ClassModePmf, GaussianMixture
from .fusion import NetworkGraph, geometric_edges, metropolis_weights, uniform_weights
from .models import BirthModel, ClassLibrary, MotionMode, RangeSensor
from .reduce import ReductionPolicy

SURVEILLANCE_RANGE_M = 5000.0 * math.sqrt(2.0)


class ConfigError(ValueError):
    pass


@dataclass
class ModeConfig:
    id: int
    kind: str = "cv"
    sigma_m_s2: float = 1.0
    turn_rate_rad_s: Optional[float] = None


@dataclass
class ClassConfig:
    id: int
    modes: list[int] = field(default_factory=list)
    transition: list[list[float]] = field(default_factory=list)


@dataclass
class BirthConfig:
    prob: float = 0.2
    # None means uniform
    class_pmf: Optional[dict[int, float]] = None
    mode_pmf: Optional[dict[int, dict[int, float]]] = None
    mean_m_mps: list[float] = field(default_factory=lambda: [4780.0, -8.0, 3590.0, -100.0])
    cov_diag_m2_m2ps2: list[float] = field(default_factory=lambda: [100.0, 100.0, 100.0, 100.0])


@dataclass
class SensorsConfig:
    layout: str = "grid"
    grid_rows: int = 4
    grid_cols: int = 5
    extent_m: float = 5000.0
    positions_m: Optional[list[list[float]]] = None
    # scalar, or mapping class id -> probability
    detection_prob: Union[float, dict[int, float]] = 0.95
    noise_var_m2: float = 25.0
    clutter_rate: float = 5.0
    clutter_range_m: list[float] = field(default_factory=lambda: [0.0, SURVEILLANCE_RANGE_M])


@dataclass
class NetworkConfig:
    topology: str = "geometric"
    radius_m: float = 1500.0
    consensus_steps: int = 3
    weights: str = "metropolis"


@dataclass
class ReductionConfig:
    prune_threshold: float = 1e-15
    merge_threshold: float = 20.0
    max_components: int = 6


@dataclass
class OspaConfig:
    order: float = 1.0
    cutoff_m: float = 150.0


@dataclass
class ExtractionConfig:
    threshold: float = 0.5
    criterion: str = "mmse"


@dataclass
class SegmentConfig:
    from_k: int
    to_k: int
    mode: int


@dataclass
class TruthConfig:
    class_id: int = 2
    initial_state_m_mps: list[float] = field(default_factory=lambda: [4786.0, -8.3, 3584.0, -100.9])
    schedule: list[SegmentConfig] = field(
        default_factory=lambda: [
            SegmentConfig(6, 25, 1),
            SegmentConfig(26, 50, 2),
            SegmentConfig(51, 60, 1),
            SegmentConfig(61, 90, 3),
        ]
    )
    process_noise: bool = False


def _default_modes():
    return [
        ModeConfig(1, "cv", 1.0),
        ModeConfig(2, "ct", 1.4, -0.1),
        ModeConfig(3, "ct", 1.4, 0.15),
        ModeConfig(4, "ct", 1.4, 1.0),
        ModeConfig(5, "ct", 1.4, -1.0),
    ]


def _default_classes():
    pi3 = [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]
    return [
        ClassConfig(1, [1], [[1.0]]),
        ClassConfig(2, [1, 2, 3], copy.deepcopy(pi3)),
        ClassConfig(3, [1, 4, 5], copy.deepcopy(pi3)),
    ]


@dataclass
class ScenarioConfig:
    timesteps: int = 100
    sampling_interval_s: float = 1.0
    survival_prob: float = 0.98
    modes: list[ModeConfig] = field(default_factory=_default_modes)
    classes: list[ClassConfig] = field(default_factory=_default_classes)
    birth: BirthConfig = field(default_factory=BirthConfig)
    sensors: SensorsConfig = field(default_factory=SensorsConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    reduction: ReductionConfig = field(default_factory=ReductionConfig)
    ospa: OspaConfig = field(default_factory=OspaConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    truth: TruthConfig = field(default_factory=TruthConfig)
    trials: int = 100
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


PRESETS = {"paper-reference": ScenarioConfig}

ALIASES = {
    "pD": "sensors.detection_prob",
    "pS": "survival_prob",
    "pB": "birth.prob",
    "R": "sensors.noise_var_m2",
    "lambda": "sensors.clutter_rate",
    "L": "network.consensus_steps",
    "T_p": "reduction.prune_threshold",
    "T_m": "reduction.merge_threshold",
    "J_max": "reduction.max_components",
    "radius": "network.radius_m",
}


# --------------------------------------------------------------------------
# dict -> dataclass with strict keys


def _unwrap_optional(tp):
    if typing.get_origin(tp) is Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return tp


def _convert(tp, value, path):
    tp = _unwrap_optional(tp)
    if value is None:
        return None
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    origin = typing.get_origin(tp)
    if origin is list:
        (inner,) = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return [_convert(inner, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if origin is dict:
        kt, vt = typing.get_args(tp)
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return {_convert(kt, k, path): _convert(vt, v, f"{path}.{k}") for k, v in value.items()}
    if origin is Union:
        for alt in typing.get_args(tp):
            try:
                return _convert(alt, value, path)
            except ConfigError:
                continue
        raise ConfigError(f"{path}: value {value!r} has the wrong type")
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if tp is float:
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected a number")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    return value


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown key '{path + '.' if path else ''}{key}'")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _convert(hints[f.name], data[f.name], f"{path + '.' if path else ''}{f.name}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"missing key '{path + '.' if path else ''}{f.name}'")
    return cls(**kwargs)


def _merge(base: dict, over: dict, path="") -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("class_pmf", "mode_pmf", "detection_prob"):
            out[k] = _merge(out[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


def from_dict(data: dict, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    """Layer ``data`` over ``base`` (default: the reference preset) and validate."""
    base_dict = (base or ScenarioConfig()).to_dict()
    # reject unknown keys before merging so the error names the user's key
    _check_keys(ScenarioConfig, data, "")
    cfg = _build(ScenarioConfig, _merge(base_dict, data), "")
    validate_config(cfg)
    return cfg


def _check_keys(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    for key, value in data.items():
        full = f"{path}.{key}" if path else str(key)
        if key not in hints:
            raise ConfigError(f"unknown key '{full}'")
        tp = _unwrap_optional(hints[key])
        if dataclasses.is_dataclass(tp) and isinstance(value, dict):
            _check_keys(tp, value, full)


def parse_config(path, overrides: Optional[dict] = None) -> ScenarioConfig:
    """Read a YAML scenario file, apply ``overrides`` (dotted keys) and validate.

    Raises ``OSError`` for unreadable files and ``ConfigError`` for syntax
    errors (with line and column) or invalid values (naming the key).
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ConfigError(f"{where}: {getattr(exc, 'problem', None) or exc}") from None
    if overrides:
        data = apply_overrides(data, overrides)
    return from_dict(data)


def apply_overrides(data: dict, overrides: dict) -> dict:
    """Set dotted keys (or aliases such as ``pD``) in a nested config dict."""
    out = copy.deepcopy(data)
    for key, value in overrides.items():
        dotted = ALIASES.get(key, key)
        parts = dotted.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{key}': '{p}' is not a section")
        node[parts[-1]] = value
    return out


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def _is_pmf(values, tol=1e-9):
    v = np.asarray(list(values), dtype=float)
    return np.all((v >= 0) & (v <= 1)) and abs(v.sum() - 1.0) <= tol


def validate_config(cfg: ScenarioConfig) -> None:
    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}")

    if cfg.timesteps < 1:
        fail("timesteps", "must be at least 1")
    if cfg.sampling_interval_s <= 0:
        fail("sampling_interval_s", "must be positive")
    if not 0 <= cfg.survival_prob <= 1:
        fail("survival_prob", "probability outside [0, 1]")
    mode_ids = [m.id for m in cfg.modes]
    if len(set(mode_ids)) != len(mode_ids):
        fail("modes", "duplicate mode id")
    for i, m in enumerate(cfg.modes):
        if m.kind not in ("cv", "ct"):
            fail(f"modes[{i}].kind", f"unknown kind {m.kind!r}")
        if m.kind == "ct" and not m.turn_rate_rad_s:
            fail(f"modes[{i}].turn_rate_rad_s", "coordinated turn needs a nonzero turn rate")
        if m.sigma_m_s2 <= 0:
            fail(f"modes[{i}].sigma_m_s2", "must be positive")
    class_ids = [c.id for c in cfg.classes]
    if len(set(class_ids)) != len(class_ids):
        fail("classes", "duplicate class id")
    for i, c in enumerate(cfg.classes):
        for m in c.modes:
            if m not in mode_ids:
                fail(f"classes[{i}].modes", f"unknown mode id {m}")
        pi = np.asarray(c.transition, dtype=float)
        if pi.shape != (len(c.modes), len(c.modes)):
            fail(f"classes[{i}].transition", f"expected a {len(c.modes)}x{len(c.modes)} matrix")
        if not all(_is_pmf(row, 1e-12) for row in pi):
            fail(f"classes[{i}].transition", "rows must be PMFs")
    b = cfg.birth
    if not 0 <= b.prob <= 1:
        fail("birth.prob", "probability outside [0, 1]")
    if b.class_pmf is not None:
        if set(b.class_pmf) != set(class_ids):
            fail("birth.class_pmf", "must cover every class id")
        if not _is_pmf(b.class_pmf.values(), 1e-12):
            fail("birth.class_pmf", f"classPmf sum = {sum(b.class_pmf.values()):.12g}")
    if b.mode_pmf is not None:
        for c in cfg.classes:
            row = b.mode_pmf.get(c.id)
            if row is None or set(row) != set(c.modes):
                fail(f"birth.mode_pmf.{c.id}", "must cover the class's mode set")
            if not _is_pmf(row.values(), 1e-12):
                fail(f"birth.mode_pmf.{c.id}", f"modePmf sum = {sum(row.values()):.12g}")
    if len(b.mean_m_mps) != 4 or len(b.cov_diag_m2_m2ps2) != 4:
        fail("birth", "mean and covariance diagonal must have 4 entries")
    if min(b.cov_diag_m2_m2ps2) <= 0:
        fail("birth.cov_diag_m2_m2ps2", "entries must be positive")
    s = cfg.sensors
    if s.layout not in ("grid", "explicit"):
        fail("sensors.layout", f"unknown layout {s.layout!r}")
    if s.layout == "explicit" and not s.positions_m:
        fail("sensors.positions_m", "explicit layout needs positions")
    if s.layout == "grid" and (s.grid_rows < 1 or s.grid_cols < 1):
        fail("sensors.grid_rows", "grid needs at least one row and column")
    pds = s.detection_prob.values() if isinstance(s.detection_prob, dict) else [s.detection_prob]
    if any(not 0 <= p <= 1 for p in pds):
        fail("sensors.detection_prob", "probability outside [0, 1]")
    if isinstance(s.detection_prob, dict) and set(s.detection_prob) != set(class_ids):
        fail("sensors.detection_prob", "per-class mapping must cover every class id")
    if s.noise_var_m2 <= 0:
        fail("sensors.noise_var_m2", "must be positive")
    if s.clutter_rate < 0:
        fail("sensors.clutter_rate", "must be nonnegative")
    if len(s.clutter_range_m) != 2 or not s.clutter_range_m[1] > s.clutter_range_m[0]:
        fail("sensors.clutter_range_m", "must be an increasing [lo, hi] pair")
    n = cfg.network
    if n.topology not in ("geometric", "complete"):
        fail("network.topology", f"unknown topology {n.topology!r}")
    if n.weights not in ("metropolis", "uniform"):
        fail("network.weights", f"unknown weight rule {n.weights!r}")
    if n.consensus_steps < 1:
        fail("network.consensus_steps", "must be at least 1")
    r = cfg.reduction
    if r.prune_threshold < 0:
        fail("reduction.prune_threshold", "must be non-negative")
    if r.merge_threshold <= 0:
        fail("reduction.merge_threshold", "must be positive")
    if r.max_components < 1:
        fail("reduction.max_components", "must be at least 1")
    if cfg.ospa.cutoff_m <= 0 or cfg.ospa.order < 1:
        fail("ospa", "cutoff must be positive and order at least 1")
    if cfg.extraction.criterion not in ("mmse", "map"):
        fail("extraction.criterion", "must be 'mmse' or 'map'")
    if not 0 <= cfg.extraction.threshold <= 1:
        fail("extraction.threshold", "must lie in [0, 1]")
    t = cfg.truth
    if t.class_id not in class_ids:
        fail("truth.class_id", f"unknown class {t.class_id}")
    allowed = next(c.modes for c in cfg.classes if c.id == t.class_id)
    prev_end = None
    for i, seg in enumerate(t.schedule):
        if seg.mode not in allowed:
            fail(f"truth.schedule[{i}].mode", f"mode {seg.mode} is not in the mode set of class {t.class_id}")
        if seg.to_k < seg.from_k or (prev_end is not None and seg.from_k != prev_end + 1):
            fail(f"truth.schedule[{i}]", "segments must be contiguous and ordered")
        prev_end = seg.to_k
    if len(t.initial_state_m_mps) != 4:
        fail("truth.initial_state_m_mps", "must have 4 entries")
    if cfg.trials < 1:
        fail("trials", "must be at least 1")


# --------------------------------------------------------------------------
# builders


def build_library(cfg: ScenarioConfig) -> ClassLibrary:
    T = cfg.sampling_interval_s
    modes = {m.id: MotionMode.planar(m.id, m.kind, m.sigma_m_s2, T, m.turn_rate_rad_s) for m in cfg.modes}
    return ClassLibrary(
        modes,
        {c.id: tuple(c.modes) for c in cfg.classes},
        {c.id: np.asarray(c.transition, dtype=float) for c in cfg.classes},
    )


def build_birth(cfg: ScenarioConfig, library: ClassLibrary) -> BirthModel:
    b = cfg.birth
    classes = library.classes
    gamma = dict(b.class_pmf) if b.class_pmf else {c: 1.0 / len(classes) for c in classes}
    if b.mode_pmf:
        beta = {c: dict(b.mode_pmf[c]) for c in classes}
    else:
        beta = {c: {m: 1.0 / len(library.mode_sets[c]) for m in library.mode_sets[c]} for c in classes}
    gm = GaussianMixture.single(b.mean_m_mps, np.diag(b.cov_diag_m2_m2ps2))
    return BirthModel(b.prob, ClassModePmf(gamma, beta), {s: gm for s in library.slots()})


def sensor_positions(cfg: ScenarioConfig) -> list[tuple[float, float]]:
    s = cfg.sensors
    if s.layout == "explicit":
        return [(float(p[0]), float(p[1])) for p in s.positions_m]
    xs = (np.arange(s.grid_cols) + 0.5) * s.extent_m / s.grid_cols
    ys = (np.arange(s.grid_rows) + 0.5) * s.extent_m / s.grid_rows
    return [(float(x), float(y)) for y in ys for x in xs]


def build_sensors(cfg: ScenarioConfig) -> dict[int, RangeSensor]:
    s = cfg.sensors
    classes = [c.id for c in cfg.classes]
    pd = dict(s.detection_prob) if isinstance(s.detection_prob, dict) else {c: float(s.detection_prob) for c in classes}
    out = {}
    for i, pos in enumerate(sensor_positions(cfg), start=1):
        out[i] = RangeSensor(
            id=i,
            noise_var=s.noise_var_m2,
            detection=pd,
            clutter_rate=s.clutter_rate,
            clutter_region=(s.clutter_range_m[0], s.clutter_range_m[1]),
            position=pos,
        )
    return out


def build_graph(cfg: ScenarioConfig, sensors: dict[int, RangeSensor]) -> NetworkGraph:
    n = cfg.network
    ids = sorted(sensors)
    if n.topology == "complete":
        edges = [(i, j) for a, i in enumerate(ids) for j in ids[a + 1 :]]
    else:
        edges = geometric_edges({i: sensors[i].position for i in ids}, n.radius_m)
    rule = metropolis_weights if n.weights == "metropolis" else uniform_weights
    return rule(ids, edges)


def build_policy(cfg: ScenarioConfig) -> ReductionPolicy:
    r = cfg.reduction
    return ReductionPolicy(r.prune_threshold, r.merge_threshold, r.max_components)
