"""Experiment configuration: one declarative JSON file per experiment.

Parsing is fail-closed: unknown keys anywhere in the file are rejected
with the offending section named, so typos cannot silently fall back to
defaults. The full raw dict is kept for embedding into checkpoints and
reports. ``docs/config_format.md`` documents every section.

Sections (all optional; commands validate that the ones they need exist):
``dataset``, ``split``, ``conditioning``, ``schedule``, ``denoiser``,
``optimizer``, ``sampler``, ``metrics``, ``rigsim``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .conditioning import MODES, CalibrationRanges
from .dataset import ForceVector
from .errors import ConfigError
from .rigsim import RenderConfig, TrajectoryConfig, make_shape


def _check_keys(d: dict, allowed, section: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown key(s) {', '.join(map(repr, unknown))} in section '{section}'"
        )


def _get(d: dict, key: str, default, caster, section: str):
    if key not in d:
        if default is _REQUIRED:
            raise ConfigError(f"missing required key '{key}' in section '{section}'")
        return default
    try:
        return caster(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for '{section}.{key}': {exc}") from exc


_REQUIRED = object()


@dataclass
class SplitConfig:
    ratio: float = 0.8
    seed: int = 42


@dataclass
class ConditioningConfig:
    mode: str = "banded"
    seed: int = 0
    ranges: CalibrationRanges | None = None  # None -> derived from the dataset

    def to_meta(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "ranges": None if self.ranges is None else self.ranges.to_dict(),
        }


@dataclass
class ScheduleConfig:
    steps: int = 200
    kind: str = "linear"
    beta_start: float = 1e-4
    beta_end: float = 0.1


@dataclass
class DenoiserConfig:
    depth: int = 3
    base_width: int = 32
    emb_dim: int = 16
    dtype: str = "float32"
    seed: int = 0


@dataclass
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4
    steps: int = 2000
    seed: int = 0
    checkpoint_every: int = 500
    log_every: int = 10


@dataclass
class SamplerConfig:
    seed: int = 0
    clip_denoised: bool = True


@dataclass
class MetricsConfig:
    grid_shape: tuple[int, int] = (18, 18)
    roi: float | None = None
    window: int | None = None
    offset: float = 4.0
    min_area: int = 3
    max_area: int | None = None
    match: str = "grid"
    flow_scale: float = 1.0
    markers: bool = False


@dataclass
class RigsimConfig:
    shapes: list = field(default_factory=list)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    seed: int = 0


@dataclass
class ExperimentConfig:
    dataset_manifest: Path | None = None
    split: SplitConfig = field(default_factory=SplitConfig)
    conditioning: ConditioningConfig = field(default_factory=ConditioningConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    rigsim: RigsimConfig | None = None
    raw: dict = field(default_factory=dict)


def _parse_conditioning(d: dict) -> ConditioningConfig:
    _check_keys(d, ("mode", "seed", "ranges"), "conditioning")
    mode = _get(d, "mode", "banded", str, "conditioning")
    if mode not in MODES:
        raise ConfigError(f"conditioning.mode must be one of {MODES}, got {mode!r}")
    seed = _get(d, "seed", 0, int, "conditioning")
    ranges = None
    if d.get("ranges") is not None:
        rd = d["ranges"]
        _check_keys(rd, ForceVector.AXES, "conditioning.ranges")
        missing = [a for a in ForceVector.AXES if a not in rd]
        if missing:
            raise ConfigError(f"conditioning.ranges missing axes: {missing}")
        try:
            ranges = CalibrationRanges.from_dict(rd)
        except Exception as exc:
            raise ConfigError(f"bad conditioning.ranges: {exc}") from exc
    return ConditioningConfig(mode=mode, seed=seed, ranges=ranges)


def _parse_simple(d: dict, cls, section: str, casters: dict):
    _check_keys(d, casters.keys(), section)
    kwargs = {}
    for key, caster in casters.items():
        if key in d:
            kwargs[key] = _get(d, key, _REQUIRED, caster, section)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad section '{section}': {exc}") from exc


def _opt(caster):
    return lambda v: None if v is None else caster(v)


def _pair(caster):
    def convert(v):
        a, b = v
        return (caster(a), caster(b))
    return convert


def _parse_rigsim(d: dict) -> RigsimConfig:
    _check_keys(d, ("shapes", "trajectory", "render", "seed"), "rigsim")
    shapes = []
    for i, sd in enumerate(d.get("shapes", [])):
        section = f"rigsim.shapes[{i}]"
        _check_keys(sd, ("kind", "size", "inner", "label", "texture_amp",
                         "texture_period", "texture_kind", "texture_seed"), section)
        try:
            shapes.append(make_shape(**sd))
        except Exception as exc:
            raise ConfigError(f"bad shape in {section}: {exc}") from exc
    traj = _parse_simple(d.get("trajectory", {}), TrajectoryConfig, "rigsim.trajectory", {
        "press_depth_step": float, "lateral_excursion": float, "twist_angle": float,
        "max_depth": float, "speed": float, "sample_rate": float,
        "twist_speed": float, "capture_period_s": float,
    })
    render = _parse_simple(d.get("render", {}), RenderConfig, "rigsim.render", {
        "sensor_type": str, "image_size": _pair(int), "plane_size_mm": float,
        "light_dirs": lambda v: tuple(tuple(float(c) for c in row) for row in v),
        "light_colors": lambda v: tuple(tuple(float(c) for c in row) for row in v),
        "ambient": float, "diffuse": float, "slope_gain": float,
        "proximity_gain": float, "gel_sigma_mm": float, "stiffness": float,
        "tangential_coupling": float, "torsion_coupling": float,
        "moment_coupling": float, "marker_rows": int, "marker_cols": int,
        "marker_spacing_px": _opt(float), "marker_radius_px": float,
        "marker_darkness": float, "shear_gain_px_per_mm": float,
        "decay_depth_mm": float, "noise_level": float,
    })
    seed = _get(d, "seed", 0, int, "rigsim")
    return RigsimConfig(shapes=shapes, trajectory=traj, render=render, seed=seed)


def parse_config(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    _check_keys(data, ("dataset", "split", "conditioning", "schedule", "denoiser",
                       "optimizer", "sampler", "metrics", "rigsim"), "<root>")
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

    manifest = None
    if "dataset" in data:
        _check_keys(data["dataset"], ("manifest",), "dataset")
        raw_path = _get(data["dataset"], "manifest", None, str, "dataset")
        if raw_path is not None:
            manifest = (base_dir / raw_path).resolve()

    cfg = ExperimentConfig(
        dataset_manifest=manifest,
        split=_parse_simple(data.get("split", {}), SplitConfig, "split",
                            {"ratio": float, "seed": int}),
        conditioning=_parse_conditioning(data.get("conditioning", {})),
        schedule=_parse_simple(data.get("schedule", {}), ScheduleConfig, "schedule", {
            "steps": int, "kind": str, "beta_start": float, "beta_end": float,
        }),
        denoiser=_parse_simple(data.get("denoiser", {}), DenoiserConfig, "denoiser", {
            "depth": int, "base_width": int, "emb_dim": int, "dtype": str, "seed": int,
        }),
        optimizer=_parse_simple(data.get("optimizer", {}), OptimizerConfig, "optimizer", {
            "lr": float, "beta1": float, "beta2": float, "eps": float,
            "batch_size": int, "steps": int, "seed": int,
            "checkpoint_every": int, "log_every": int,
        }),
        sampler=_parse_simple(data.get("sampler", {}), SamplerConfig, "sampler",
                              {"seed": int, "clip_denoised": bool}),
        metrics=_parse_simple(data.get("metrics", {}), MetricsConfig, "metrics", {
            "grid_shape": _pair(int), "roi": _opt(float), "window": _opt(int),
            "offset": float, "min_area": int, "max_area": _opt(int),
            "match": str, "flow_scale": float, "markers": bool,
        }),
        rigsim=_parse_rigsim(data["rigsim"]) if "rigsim" in data else None,
        raw=data,
    )
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(data, base_dir=path.parent)
