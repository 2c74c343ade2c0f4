'''
File: config.py
Project: nucpoint
File Created: Thursday, 5th March 2026 9:14:03 am
Author: koko (koko231125@gmail.com)
License: GPL-3.0
-----
Last Modified: Saturday, 17th October 2026 11:42:08 am
Modified By: koko (koko231125@gmail.com>)
'''


import copy
import logging
import tomllib
import typing
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from pathlib import Path

from nucpoint.errors import ConfigError, MissingInputError
from nucpoint.rtypes import EncoderKind, TrainMode, Supervision
from nucpoint.synthdata import SceneSpec


logger = logging.getLogger(__name__)


"""Configuration Groups
"""


@dataclass
class SynthConfig:
    r"""Synthetic data. The defaults are the desk-small dataset: 64x64 images, 3 classes,
    Poisson mean 8 nuclei, radii 3 to 5 px, separation 8 px, 200 train / 50 test images.
    """
    height: int = 64
    width: int = 64
    num_classes: int = 3
    mean_count: float = 8.0
    min_separation: float = 8.0
    r_min: float = 3.0
    r_max: float = 5.0
    style: int = 0
    noise: float = 0.03
    contrast_margin: float = 0.3
    cue_amplitude: float = 0.06
    texture_amplitude: float = 0.02
    stain_jitter: float = 0.02
    n_train: int = 200
    n_test: int = 50

    def scene_spec(self, style: int | None = None) -> SceneSpec:
        """The SceneSpec with a uniform class prior, optionally for another dataset identity."""
        return SceneSpec(
            height=self.height,
            width=self.width,
            mean_count=self.mean_count,
            min_separation=self.min_separation,
            r_min=self.r_min,
            r_max=self.r_max,
            class_prior=tuple(1.0 / self.num_classes for _ in range(self.num_classes)),
            style=self.style if style is None else style,
            noise=self.noise,
            contrast_margin=self.contrast_margin,
            cue_amplitude=self.cue_amplitude,
            texture_amplitude=self.texture_amplitude,
            stain_jitter=self.stain_jitter,
        )

    def validate(self) -> None:
        _positive('synth.num_classes', self.num_classes)
        _positive('synth.n_train', self.n_train)
        _non_negative('synth.n_test', self.n_test)
        try:
            self.scene_spec().validate()
        except ValueError as exc:
            raise ConfigError('synth', str(exc)) from exc


@dataclass
class DetectorConfig:
    r"""Grid point detector and its training schedule.

    Attributes:
        width (int):
            Backbone width multiplier, the first convolution has 8 * width channels.
        stride (int):
            Grid stride, a power of two.
        tau (float):
            Score threshold of the decoder.
        mu (float):
            Weight of the score term in the assignment cost.
        reg_weight (float):
            Weight of the offset regression loss.
        suppress_radius (float):
            Radius of the optional duplicate suppression, 0 disables it.
        checkpoint (str):
            A trained detector to load instead of training one.
    """
    width: int = 1
    stride: int = 4
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.001
    momentum: float = 0.9
    tau: float = 0.5
    mu: float = 0.5
    reg_weight: float = 1.0
    suppress_radius: float = 0.0
    checkpoint: str = ''

    def validate(self) -> None:
        _positive('detector.width', self.width)
        _power_of_two('detector.stride', self.stride)
        _schedule('detector', self.epochs, self.batch_size, self.lr, self.momentum)
        if not 0.0 < self.tau < 1.0:
            raise ConfigError('detector.tau', f"must lie in (0, 1), got {self.tau}")
        _non_negative('detector.mu', self.mu)
        _non_negative('detector.reg_weight', self.reg_weight)
        _non_negative('detector.suppress_radius', self.suppress_radius)


@dataclass
class EncoderConfig:
    kind: EncoderKind = EncoderKind.PRETEXT_PRETRAINED
    channels: int = 32
    width: int = 16
    stride: int = 4
    crop: int = 16
    pretrain_epochs: int = 20
    pretrain_batch: int = 64
    pretrain_lr: float = 0.01
    momentum: float = 0.9
    checkpoint: str = ''

    def validate(self) -> None:
        _positive('encoder.channels', self.channels)
        _positive('encoder.width', self.width)
        _power_of_two('encoder.stride', self.stride)
        _positive('encoder.crop', self.crop)
        if self.crop % self.stride:
            raise ConfigError('encoder.crop', f"crop {self.crop} must be a multiple of the stride {self.stride}")
        _schedule('encoder', self.pretrain_epochs, self.pretrain_batch, self.pretrain_lr, self.momentum, 'pretrain_')


@dataclass
class ClassifierConfig:
    r"""Classification head training. `probe_epochs` is the schedule of linear probes."""
    mode: TrainMode = TrainMode.LINEAR
    supervision: Supervision = Supervision.GT
    epochs: int = 100
    batch_size: int = 256
    lr: float = 0.01
    momentum: float = 0.9
    probe_epochs: int = 100
    checkpoint: str = ''

    def validate(self) -> None:
        if self.mode == TrainMode.END_TO_END:
            raise ConfigError('classifier.mode', "end_to_end is trained with train-joint")
        _schedule('classifier', self.epochs, self.batch_size, self.lr, self.momentum)
        _positive('classifier.probe_epochs', self.probe_epochs)


@dataclass
class JointConfig:
    r"""Shared-backbone baseline.

    Attributes:
        cls_weight (float):
            Weight of the class cross entropy against the detection loss.
        init (str):
            `random`, or `pretext` to start from a pretext-pretrained backbone.
        probe_curve (bool):
            Run a linear probe of the backbone before training and after every epoch.
    """
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.001
    momentum: float = 0.9
    cls_weight: float = 1.0
    init: str = 'random'
    probe_curve: bool = False

    def validate(self) -> None:
        _schedule('joint', self.epochs, self.batch_size, self.lr, self.momentum)
        _non_negative('joint.cls_weight', self.cls_weight)
        if self.init not in ('random', 'pretext'):
            raise ConfigError('joint.init', f"must be 'random' or 'pretext', got '{self.init}'")


@dataclass
class EvalConfig:
    r"""Scoring. `predictions` is a directory of per-image prediction CSVs scored instead of a
    trained pipeline.
    """
    radius: float = 6.0
    fraction: float = 0.95
    predictions: str = ''

    def validate(self) -> None:
        _positive('eval.radius', self.radius)
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError('eval.fraction', f"must lie in (0, 1], got {self.fraction}")


@dataclass
class AblationConfig:
    r"""Multi-seed harnesses. Medians over `seeds` are reported."""
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    workers: int = 1
    widths: list[int] = field(default_factory=lambda: [1, 4])
    small_images: int = 20

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError('ablate.seeds', "at least one seed is required")
        _positive('ablate.workers', self.workers)
        if not self.widths or any(w <= 0 for w in self.widths):
            raise ConfigError('ablate.widths', f"widths must be positive, got {self.widths}")
        _positive('ablate.small_images', self.small_images)


SECTIONS: dict[str, type] = {
    'synth': SynthConfig,
    'detector': DetectorConfig,
    'encoder': EncoderConfig,
    'classifier': ClassifierConfig,
    'joint': JointConfig,
    'eval': EvalConfig,
    'ablate': AblationConfig,
}


@dataclass
class RunConfig:
    r"""Everything a command needs. Sections are addressed with dotted keys, e.g. `detector.epochs`.

    Attributes:
        seed (int):
            The run seed, every random stream is derived from it.
        output (str):
            The output directory of the command.
        data_path (str):
            A dataset directory. Empty means the data is generated in memory from `synth`.
        joint_paths (list[str]):
            Further dataset directories trained together with `data_path` by train-det.
    """
    seed: int = 0
    output: str = 'runs/latest'
    data_path: str = ''
    joint_paths: list[str] = field(default_factory=list)
    synth: SynthConfig = field(default_factory=SynthConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    joint: JointConfig = field(default_factory=JointConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablate: AblationConfig = field(default_factory=AblationConfig)

    def validate(self) -> 'RunConfig':
        if self.seed < 0:
            raise ConfigError('seed', f"must be non-negative, got {self.seed}")
        if not self.output:
            raise ConfigError('output', "an output directory is required")
        for name in SECTIONS:
            getattr(self, name).validate()
        return self

    def to_dict(self) -> dict[str, object]:
        return _to_plain(self)

    def updated(self, **dotted: object) -> 'RunConfig':
        """A validated copy with dotted keys replaced, e.g. `updated(**{'detector.width': 4})`."""
        out = copy.deepcopy(self)
        for key, value in dotted.items():
            _assign(out, key, value)
        return out.validate()


"""Parsing
"""


def parse_config(path: str | Path | None = None, overrides: list[str] | tuple[str, ...] = ()) -> RunConfig:
    r"""Build a RunConfig from an optional TOML file and `key=value` overrides.

    Overrides win over the file. Values of overrides are read with the type of the field they
    replace; lists are comma separated.

    Args:
        path (str | Path | None, optional):
            A TOML file. Defaults to None (all defaults).
        overrides (list[str] | tuple[str, ...], optional):
            Dotted `key=value` strings. Defaults to ().

    Returns:
        RunConfig:
            The validated configuration.

    Raises:
        MissingInputError:
            If the file does not exist.
        ConfigError:
            On unknown keys, type mismatches and invalid values, naming the key path.
    """
    config = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise MissingInputError(f"config file {path} does not exist")
        try:
            data = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML ({exc})") from exc
        for key, value in _flatten(data):
            _assign(config, key, value)

    for item in overrides:
        key, sep, raw = item.partition('=')
        if not sep:
            raise ConfigError(item, "overrides must look like key=value")
        key = key.strip()
        _assign(config, key, _from_text(key, _field_type(config, key), raw.strip()))

    logger.debug("parsed configuration %s", config)
    return config.validate()


def _flatten(data: dict[str, object], prefix: str = '') -> list[tuple[str, object]]:
    out = []
    for key, value in data.items():
        dotted = f'{prefix}{key}'
        if isinstance(value, dict):
            if prefix or key not in SECTIONS:
                raise ConfigError(dotted, "unknown section")
            out.extend(_flatten(value, dotted + '.'))
        else:
            out.append((dotted, value))
    return out


def _resolve(config: RunConfig, key: str) -> tuple[object, str]:
    # The object owning the field and the field name
    parts = key.split('.')
    if len(parts) == 1:
        owner, name = config, parts[0]
    elif len(parts) == 2 and parts[0] in SECTIONS:
        owner, name = getattr(config, parts[0]), parts[1]
    else:
        raise ConfigError(key, "unknown key")
    names = {f.name for f in fields(owner) if not is_dataclass(f.type)}
    if name not in names:
        raise ConfigError(key, "unknown key")
    return owner, name


def _field_type(config: RunConfig, key: str) -> object:
    owner, name = _resolve(config, key)
    return typing.get_type_hints(type(owner))[name]


def _assign(config: RunConfig, key: str, value: object) -> None:
    owner, name = _resolve(config, key)
    expected = typing.get_type_hints(type(owner))[name]
    setattr(owner, name, _coerce(key, expected, value))


def _coerce(key: str, expected: object, value: object) -> object:
    origin = typing.get_origin(expected)
    if origin is list:
        (item_type, ) = typing.get_args(expected)
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {type(value).__name__}")
        return [_coerce(key, item_type, item) for item in value]
    if isinstance(expected, type) and issubclass(expected, Enum):
        try:
            return expected(value)
        except ValueError:
            allowed = ', '.join(member.value for member in expected)
            raise ConfigError(key, f"'{value}' is not one of {allowed}") from None
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {value!r}")
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    raise ConfigError(key, f"unsupported field type {expected}")


def _from_text(key: str, expected: object, raw: str) -> object:
    origin = typing.get_origin(expected)
    if origin is list:
        (item_type, ) = typing.get_args(expected)
        items = [item.strip() for item in raw.split(',') if item.strip()]
        return [_from_text(key, item_type, item) for item in items]
    if expected is bool:
        lowered = raw.lower()
        if lowered not in ('true', 'false'):
            raise ConfigError(key, f"expected true or false, got '{raw}'")
        return lowered == 'true'
    if expected is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got '{raw}'") from None
    if expected is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(key, f"expected a number, got '{raw}'") from None
    return raw


def _to_plain(value: object) -> object:
    if is_dataclass(value):
        return {f.name: _to_plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, list):
        return [_to_plain(item) for item in value]
    return value


"""Validation Helpers
"""


def _positive(key: str, value: float) -> None:
    if value <= 0:
        raise ConfigError(key, f"must be positive, got {value}")


def _non_negative(key: str, value: float) -> None:
    if value < 0:
        raise ConfigError(key, f"must be non-negative, got {value}")


def _power_of_two(key: str, value: int) -> None:
    if value <= 0 or value & (value - 1):
        raise ConfigError(key, f"must be a power of two, got {value}")


def _schedule(section: str, epochs: int, batch: int, lr: float, momentum: float, prefix: str = '') -> None:
    _positive(f'{section}.{prefix}epochs', epochs)
    _positive(f'{section}.{prefix}batch' + ('' if prefix else '_size'), batch)
    _positive(f'{section}.{prefix}lr', lr)
    if not 0.0 <= momentum < 1.0:
        raise ConfigError(f'{section}.momentum', f"must lie in [0, 1), got {momentum}")
