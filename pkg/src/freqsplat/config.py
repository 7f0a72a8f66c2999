"""Flat ``key=value`` run configuration files.

One setting per line, ``#`` starts a comment, nested settings use dotted keys
(``schedule.family=step``). Lists are comma separated. ``config_version``
identifies the schema; the current version is 1.

Top-level keys:   total_iterations seed mode init_count init_opacity
                  metrics_interval reset_moments_on_level bilateral_sigma_range
                  target target_size
schedule.*        family initial_kernel cutoff_iteration level_boundaries
                  filter step_sizes restarts exp_rate
adc.*             densification_interval densify_grad_threshold
                  prune_opacity_threshold split_scale_threshold
                  opacity_reset_interval opacity_reset_ceiling
                  densify_until_iteration split_children split_scale_shrink
                  max_gaussians reference_pixels
lr.*              position position_final_factor log_scale rotation
                  raw_opacity color
render.*          background cull_sigma transmittance_floor
loss.*            lambda_dssim

``target``/``target_size`` are consumed by the command line tool, not by
``TrainConfig``. A ``preset.total_iterations`` key (applied before anything
else) starts from ``TrainConfig.scaled`` instead of the 30k-iteration defaults.
"""

from __future__ import annotations

import dataclasses
import enum
from pathlib import Path

from .adc import AdcConfig
from .schedule import FrequencySchedule, default_step_sizes
from .splat import LossConfig, RenderSettings
from .trainer import LearningRates, TrainConfig

CONFIG_VERSION = 1
SECTIONS = {
    "schedule": FrequencySchedule,
    "adc": AdcConfig,
    "lr": LearningRates,
    "render": RenderSettings,
    "loss": LossConfig,
}
RUN_KEYS = ("target", "target_size")


class ConfigError(ValueError):
    pass


def _format(value) -> str:
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, (tuple, list)):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str, current):
    text = text.strip()
    try:
        if isinstance(current, bool):
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, enum.Enum):
            return type(current).parse(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float) or current is None:
            if text.lower() == "none":
                return None
            return float(text)
        if isinstance(current, tuple):
            if not text:
                return ()
            return tuple(int(t.strip()) for t in text.split(","))
        return text
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text!r}: {exc}") from None


def to_flat(cfg: TrainConfig) -> dict[str, str]:
    flat = {"config_version": str(CONFIG_VERSION)}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in SECTIONS:
            for sf in dataclasses.fields(value):
                v = getattr(value, sf.name)
                if f.name == "schedule" and sf.name == "step_sizes" and v == default_step_sizes(
                    value.initial_kernel, len(value.level_boundaries)
                ):
                    v = ()  # derived from initial_kernel
                flat[f"{f.name}.{sf.name}"] = _format(v)
        else:
            flat[f.name] = _format(value)
    return flat


_FLOAT_TUPLES = {"render.background"}


def apply_settings(cfg: TrainConfig, settings: dict[str, str]) -> TrainConfig:
    """Return ``cfg`` with every dotted ``key -> text`` setting applied."""
    top = {}
    nested: dict[str, dict] = {name: {} for name in SECTIONS}
    top_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    for key, text in settings.items():
        if key in ("config_version",) or key in RUN_KEYS or key.startswith("preset."):
            continue
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section {section!r} in key {key!r}")
            current = getattr(getattr(cfg, section), name, _MISSING)
            if current is _MISSING:
                raise ConfigError(f"unknown config key {key!r}")
            if key in _FLOAT_TUPLES:
                vals = tuple(float(t) for t in text.split(","))
                if len(vals) != 3:
                    raise ConfigError(f"{key} needs three comma-separated values")
                nested[section][name] = vals
            elif key == "render.cull_sigma":
                nested[section][name] = None if text.strip().lower() in ("none", "inf", "off") else float(text)
            else:
                nested[section][name] = _parse_value(text, current)
        else:
            if key not in top_fields or key in SECTIONS:
                raise ConfigError(f"unknown config key {key!r}")
            top[key] = _parse_value(text, getattr(cfg, key))
    sched = nested["schedule"]
    if sched:
        # keep derived schedule fields consistent when only their driver changes
        if "cutoff_iteration" in sched and "level_boundaries" not in sched:
            n = len(cfg.schedule.level_boundaries)
            c = sched["cutoff_iteration"]
            sched["level_boundaries"] = tuple(round(c * (i + 1) / n) for i in range(n))
        if "initial_kernel" in sched and "step_sizes" not in sched:
            sched["step_sizes"] = ()
    try:
        sections = {
            name: dataclasses.replace(getattr(cfg, name), **vals) for name, vals in nested.items() if vals
        }
        return dataclasses.replace(cfg, **top, **sections)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


_MISSING = object()


def parse_lines(lines) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(settings: dict[str, str]) -> TrainConfig:
    version = settings.get("config_version", str(CONFIG_VERSION))
    if version != str(CONFIG_VERSION):
        raise ConfigError(f"unsupported config_version {version}")
    base = TrainConfig()
    if "preset.total_iterations" in settings:
        base = TrainConfig.scaled(int(settings["preset.total_iterations"]))
    # schedule validation needs its fields applied together, then the rest
    return apply_settings(base, settings)


def load_config(path, overrides=None) -> tuple[TrainConfig, dict[str, str]]:
    """Parse a config file, apply ``overrides`` on top and return (config, run keys)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    settings = parse_lines(path.read_text().splitlines())
    extra = parse_overrides(overrides)
    if "preset.total_iterations" in extra:
        settings["preset.total_iterations"] = extra.pop("preset.total_iterations")
    cfg = apply_settings(build_config(settings), extra)
    merged = {**settings, **extra}
    run = {k: merged[k] for k in RUN_KEYS if k in merged}
    return cfg, run


def dumps(cfg: TrainConfig, run: dict | None = None) -> str:
    lines = [f"{k}={v}" for k, v in to_flat(cfg).items()]
    for k, v in (run or {}).items():
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def save_config(cfg: TrainConfig, path, run: dict | None = None) -> None:
    Path(path).write_text(dumps(cfg, run))
