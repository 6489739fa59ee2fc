"""Run configuration: one YAML/JSON document with one block per subsystem.

Unknown keys are rejected.  ``--set block.key=value`` style overrides are applied
on top of the file, and the effective configuration is written next to every
command's outputs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

SCHEMA_VERSION = 1


@dataclass
class EncoderConfig:
    base_channels: int = 96
    stage_depths: tuple[int, int, int] = (2, 2, 6)
    stage_heads: tuple[int, int, int] = (3, 6, 12)
    window: int = 7
    input_size: int = 224
    resnet_blocks: tuple[int, int, int] = (3, 4, 6)
    resnet_planes: int = 64
    mlp_ratio: float = 4.0
    num_bands: int = 4
    band_mu: tuple[float, ...] = (0.05, 0.2, 0.35, 0.5)
    band_sigma: float = 0.15
    band_alpha: float = 1.0
    fusion_heads: int = 4
    bcf_heads: int = 4
    bcf_gamma_init: float = 0.1
    prefuse_hidden_ratio: float = 2.0

    def validate(self) -> None:
        if len(self.stage_depths) != 3 or len(self.stage_heads) != 3 or len(self.resnet_blocks) != 3:
            raise ConfigError("stage_depths, stage_heads and resnet_blocks need exactly 3 entries")
        if self.base_channels < 1 or self.window < 1:
            raise ConfigError("base_channels and window must be positive")
        for i, heads in enumerate(self.stage_heads):
            width = self.base_channels * 2**i
            if width % heads:
                raise ConfigError(f"stage {i}: {width} channels not divisible by {heads} heads")
            if width % self.fusion_heads:
                raise ConfigError(f"stage {i}: {width} channels not divisible by {self.fusion_heads} fusion heads")
        for i in range(2):
            if (self.base_channels * 2**i) % self.bcf_heads:
                raise ConfigError(f"BCF site {i}: channels not divisible by {self.bcf_heads} heads")
        if len(self.band_mu) != self.num_bands:
            raise ConfigError(f"band_mu has {len(self.band_mu)} entries, num_bands is {self.num_bands}")
        check_input_side(self.input_size, self.window)


def check_input_side(side: int, window: int) -> None:
    if side % 16 or (side // 16) % window:
        raise ConfigError(
            f"input side {side} must be divisible by 16 and side/16 by the window ({window}); "
            f"valid sides are multiples of {16 * window}"
        )


@dataclass
class LossWeights:
    lambda_iq: float = 0.5
    lambda_dice: float = 0.6
    lambda_focal: float = 0.4
    dice_smooth: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    iq_eps: float = 1e-6

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"loss weight {f.name} must be nonnegative")


@dataclass
class TrackerConfig:
    alpha: float = 1.0
    beta: float = 10.0
    cost_gate: float = 20.0
    max_age: int = 3
    min_area: int = 10
    ssim_c1: float = (0.01 * 255) ** 2
    ssim_c2: float = (0.03 * 255) ** 2
    ssim_patch_side: int = 32
    cost_mode: str = "default"
    process_noise: float = 1e-2
    measurement_noise: float = 1e-2
    initial_velocity_var: float = 100.0

    def validate(self) -> None:
        if self.cost_mode not in ("default", "literal"):
            raise ConfigError(f"cost_mode must be 'default' or 'literal', got {self.cost_mode!r}")
        for name in ("alpha", "beta", "cost_gate", "max_age", "min_area", "ssim_c1", "ssim_c2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"tracker {name} must be nonnegative")
        if self.ssim_patch_side < 2:
            raise ConfigError("ssim_patch_side must be at least 2")


@dataclass
class SynthConfig:
    seed: int = 0
    canvas: int = 112
    n_organoids: tuple[int, int] = (2, 4)
    radius: tuple[float, float] = (10.0, 20.0)
    deform: float = 0.12
    n_bubbles: tuple[int, int] = (1, 3)
    bubble_radius: tuple[float, float] = (4.0, 9.0)
    noise_sigma: float = 0.03
    drift: float = 0.0
    growth: float = 1.0

    def validate(self) -> None:
        for name in ("n_organoids", "radius", "n_bubbles", "bubble_radius"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ConfigError(f"synth {name} range {lo}..{hi} is empty or negative")
        if self.canvas < 16:
            raise ConfigError("synth canvas must be at least 16 px")
        if self.growth <= 0:
            raise ConfigError("synth growth must be positive")


@dataclass
class PreprocessConfig:
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: tuple[float, float, float] = (0.25, 0.25, 0.25)

    def validate(self) -> None:
        if any(s <= 0 for s in self.std):
            raise ConfigError("standardization std must be positive")


@dataclass
class TrainConfig:
    batch_size: int = 4
    lr0: float = 0.01
    lr_step_epochs: int = 10
    lr_gamma: float = 0.1
    epochs: int = 300
    max_steps: int | None = None
    momentum: float = 0.9
    weight_decay: float = 1e-4
    weight_averaging: bool = True
    averaging_fraction: float = 0.25
    augment_flip: bool = False
    augment_rotate: bool = False
    seed: int = 0
    n_synthetic: int = 200

    def validate(self) -> None:
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if self.lr0 <= 0 or self.lr_step_epochs < 1 or not 0 < self.lr_gamma <= 1:
            raise ConfigError("learning-rate schedule must be positive and nonincreasing")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be positive when set")
        if not 0 < self.averaging_fraction <= 1:
            raise ConfigError("averaging_fraction must lie in (0, 1]")


@dataclass
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "RunConfig":
        for f in dataclasses.fields(self):
            getattr(self, f.name).validate()
        return self

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION}
        out.update(_plain(dataclasses.asdict(self)))
        return out

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        data.pop("schema_version", None)
        return _build(cls, data, "config").validate()


def toy_config() -> RunConfig:
    """Desk-scale geometry: 112 px input, 32 base channels."""
    cfg = RunConfig()
    cfg.encoder = EncoderConfig(
        base_channels=32,
        stage_heads=(2, 4, 8),
        input_size=112,
        resnet_blocks=(1, 1, 2),
        resnet_planes=16,
    )
    cfg.train.epochs = 50
    return cfg.validate()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}.{name}")
        else:
            kwargs[name] = _coerce(value, current, f"{where}.{name}")
    return cls(**kwargs)


def _coerce(value, default, where: str):
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if isinstance(default, int) and not isinstance(value, bool) and isinstance(value, (int, float)):
        if float(value) != int(value):
            raise ConfigError(f"{where}: expected an integer")
        return int(value)
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if default is None or isinstance(value, type(default)):
        return value
    raise ConfigError(f"{where}: cannot use {value!r}")


def load_config(path: str | Path | None, toy: bool = False) -> RunConfig:
    base = toy_config() if toy else RunConfig()
    if path is None:
        return base
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    merged = _deep_merge(base.to_dict(), data)
    return RunConfig.from_dict(merged)


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``block.key=value`` strings; values parse as YAML scalars/lists."""
    data = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form block.key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        node = data
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"override {dotted!r}: unknown block {p!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"override {dotted!r}: unknown key {parts[-1]!r}")
        node[parts[-1]] = yaml.safe_load(raw)
    return RunConfig.from_dict(data)


def _deep_merge(base: dict, update: dict) -> dict:
    out = dict(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def dump_config(cfg: RunConfig, out_dir: str | Path, seed: int | None = None, extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc: dict[str, Any] = cfg.to_dict()
    doc["effective_seed"] = cfg.train.seed if seed is None else seed
    if extra:
        doc["invocation"] = extra
    path = out_dir / "effective_config.yaml"
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return path
