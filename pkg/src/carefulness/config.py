"""Flat ``section.key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Sections: ``flow``,
``feature``, ``segmenter``, ``train``, ``pipeline``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError
from .flowcore import FlowConfig
from .kinefeat import FeatureConfig
from .segmenter import SegmenterConfig
from .seqnet import TrainConfig


@dataclass
class PipelineConfig:
    flow: FlowConfig = field(default_factory=FlowConfig)
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    model_path: Optional[str] = None
    events_path: Optional[str] = None
    series_path: Optional[str] = None
    realtime: bool = False
    parallel: bool = False
    queue_size: int = 8
    timing: bool = False

    def __post_init__(self):
        if self.queue_size < 1:
            raise ConfigError("pipeline.queue_size must be >= 1")
        if abs(self.segmenter.rate - self.feature.output_rate) > 1e-12:
            raise ConfigError("segmenter.rate must equal feature.output_rate")


SECTIONS = {
    "flow": FlowConfig,
    "feature": FeatureConfig,
    "segmenter": SegmenterConfig,
    "train": TrainConfig,
}


def _coerce(raw: str, default):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(x) for x in raw.replace(",", " ").split())
    if default is None:
        return raw or None
    return raw


def parse_config_text(text: str) -> dict:
    """Parse into ``{section: {key: raw string}}``."""
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"config line {lineno}: key {key!r} lacks a section prefix")
        section, name = key.split(".", 1)
        out.setdefault(section, {})[name] = value
    return out


def _apply(obj, values: dict, section: str):
    known = {f.name: f for f in dataclasses.fields(obj)}
    changes = {}
    for name, raw in values.items():
        if name not in known:
            raise ConfigError(f"unknown config key {section}.{name}")
        try:
            changes[name] = _coerce(raw, getattr(obj, name))
        except ValueError as exc:
            raise ConfigError(f"{section}.{name}: {exc}") from exc
    return dataclasses.replace(obj, **changes)


def build_configs(text: str = "", pipeline: PipelineConfig | None = None,
                  train: TrainConfig | None = None):
    """Apply config text on top of defaults; returns ``(PipelineConfig, TrainConfig)``."""
    parsed = parse_config_text(text)
    pipeline = pipeline or PipelineConfig()
    train = train or TrainConfig()
    for section in parsed:
        if section not in SECTIONS and section != "pipeline":
            raise ConfigError(f"unknown config section {section!r}")
    flow = _apply(pipeline.flow, parsed.get("flow", {}), "flow")
    feature = _apply(pipeline.feature, parsed.get("feature", {}), "feature")
    seg = _apply(pipeline.segmenter, parsed.get("segmenter", {}), "segmenter")
    pipe_values = parsed.get("pipeline", {})
    for bad in ("flow", "feature", "segmenter"):
        if bad in pipe_values:
            raise ConfigError(f"unknown config key pipeline.{bad}")
    pipeline = dataclasses.replace(pipeline, flow=flow, feature=feature, segmenter=seg)
    pipeline = _apply(pipeline, pipe_values, "pipeline")
    train = _apply(train, parsed.get("train", {}), "train")
    return pipeline, train


def load_config(path, **kwargs):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_configs(text, **kwargs)


def describe_defaults() -> str:
    """One ``section.key = default`` line per setting, for ``--help``."""
    lines = []
    for section, cls in list(SECTIONS.items()) + [("pipeline", PipelineConfig)]:
        inst = cls()
        for f in dataclasses.fields(inst):
            value = getattr(inst, f.name)
            if dataclasses.is_dataclass(value):
                continue
            if isinstance(value, tuple):
                value = " ".join(f"{x:g}" for x in value)
            lines.append(f"  {section}.{f.name} = {value}")
    return "\n".join(lines)
