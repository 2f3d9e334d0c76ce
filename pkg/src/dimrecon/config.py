"""Experiment configuration and its ``key = value`` text format.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Lists are comma separated (``loss_beta = 1000, 1000, 1000``), booleans are
``true``/``false``, and ``none`` (or an empty value) clears an optional
setting.  Unknown keys are rejected.
"""
import dataclasses
import math
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .layers import ConfigError, parse_lambda
from .network import ModelConfig
from .phantom import PhantomSpec
from .presets import preset
from .train import TrainConfig


@dataclass
class ExperimentConfig:
    # model: a preset plus optional field overrides
    preset: str = "dimension"
    desk: bool = True
    filters: Optional[int] = None
    layers_per_block: Optional[int] = None
    m_blocks: Optional[int] = None
    n_blocks: Optional[int] = None
    dc_lambda: Optional[str] = None
    loss_alpha: Optional[tuple[float, ...]] = None
    loss_beta: Optional[tuple[float, ...]] = None
    circular_t: Optional[bool] = None

    # data: an existing dataset file, or phantoms generated on the fly
    dataset: Optional[str] = None
    n_train: int = 45
    n_test: int = 5
    nx: int = 64
    ny: int = 64
    nt: int = 6
    n_objects: int = 5
    motion_amplitude: float = 2.0
    period: float = 6.0
    noise_std: float = 0.0
    data_seed: int = 0

    # sampling
    accel: float = 4.0
    acs: int = 4
    sigma: Optional[float] = None

    # training
    epochs: int = 12
    batch_size: int = 4
    lr: float = 1e-3
    decay: float = 0.95
    seed: int = 0
    dtype: str = "float32"
    patch: Optional[tuple[int, ...]] = (32, 64, 6)
    patch_stride: tuple[int, ...] = (32, 64, 6)
    fresh_masks: bool = True
    checkpoint_every: int = 0

    # evaluation and output
    display_max: float = 0.07
    yt_index: Optional[int] = None
    ssim_win: int = 11
    ssim_sigma: float = 1.5
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    out_dir: str = "runs/experiment"

    def model_config(self) -> ModelConfig:
        overrides = {}
        for key in ("filters", "layers_per_block", "m_blocks", "n_blocks", "loss_alpha", "loss_beta", "circular_t"):
            value = getattr(self, key)
            if value is not None:
                overrides[key] = value
        if self.dc_lambda is not None:
            overrides["dc_lambda"] = parse_lambda(self.dc_lambda)
        return preset(self.preset, desk=self.desk, **overrides)

    def phantom_spec(self) -> PhantomSpec:
        return PhantomSpec(self.nx, self.ny, self.nt, n_objects=self.n_objects,
                           motion_amplitude=self.motion_amplitude, period=self.period,
                           noise_std=self.noise_std)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, decay=self.decay, seed=self.seed,
            dtype=self.dtype, patch=self.patch, patch_stride=self.patch_stride, accel=self.accel,
            acs=self.acs, sigma=self.sigma, noise_std=self.noise_std, fresh_masks=self.fresh_masks,
            checkpoint_every=self.checkpoint_every,
        )

    def ssim_options(self) -> dict:
        return dict(win=self.ssim_win, sigma=self.ssim_sigma, k1=self.ssim_k1, k2=self.ssim_k2)

    def validate(self) -> None:
        """Resolve the model and training settings and check referenced files."""
        self.model_config()
        self.train_config()
        self.phantom_spec()
        if self.dataset is not None and not Path(self.dataset).is_file():
            raise ConfigError(f"dataset file {self.dataset!r} does not exist")
        if self.n_train < 0 or self.n_test < 0:
            raise ConfigError("n_train and n_test must be >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {format_value(getattr(self, f.name))}\n" for f in fields(self))


_HINTS = None


def _hints() -> dict:
    global _HINTS
    if _HINTS is None:
        _HINTS = typing.get_type_hints(ExperimentConfig)
    return _HINTS


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_scalar(kind, text: str):
    if kind is bool:
        return _parse_bool(text)
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def parse_value(key: str, text: str):
    hints = _hints()
    if key not in hints:
        raise ConfigError(f"unknown config key {key!r}")
    kind = hints[key]
    text = text.strip()
    args = typing.get_args(kind)
    optional = typing.get_origin(kind) is typing.Union and type(None) in args
    if optional:
        if text.lower() in ("", "none"):
            return None
        kind = next(a for a in args if a is not type(None))
    try:
        if typing.get_origin(kind) is tuple:
            item = typing.get_args(kind)[0]
            return tuple(_parse_scalar(item, t.strip()) for t in text.split(",") if t.strip())
        return _parse_scalar(kind, text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return str(value)


def parse_text(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = parse_value(key, value)
    return out


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (raw strings or values)."""
    values = parse_text(Path(path).read_text()) if path else {}
    for key, value in (overrides or {}).items():
        values[key] = parse_value(key, value) if isinstance(value, str) else value
    for key in values:
        if key not in _hints():
            raise ConfigError(f"unknown config key {key!r}")
    return ExperimentConfig(**values)
