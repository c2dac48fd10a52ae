#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Wed Sep 16 09:37:21 2026

Run configuration: a tree of dataclasses with defaults, merged with an
optional YAML file and then with dotlist overrides (flags > file >
defaults), plus its normalised text form and fingerprint.
"""
import hashlib
import os
from dataclasses import dataclass, field
from typing import Optional

from omegaconf import OmegaConf

from DISTAIN.DenoiserDiT import DiTConfig
from DISTAIN.LatentCodec import CodecConfig
from DISTAIN.Misc import ConfigError, DistainError
from DISTAIN.NoiseSchedule import make_linear, make_scaled_linear
from DISTAIN.Objective import LossWeights
from DISTAIN.SamplerCFG import GuidanceConfig
from DISTAIN.SyntheticSlides import GeneratorSpec


DATA_ROOT_VARIABLE = 'DISTAIN_DATA_ROOT'
FINGERPRINT_SECTIONS = ('model', 'schedule', 'codec', 'conditioning')


@dataclass
class ScheduleConfig:
    kind: str = 'scaled_linear'
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def __post_init__(self):
        if self.kind not in ('scaled_linear', 'linear'):
            raise ConfigError("Schedule 'kind' must be 'scaled_linear' or "
                              "'linear', got '%s'." % self.kind)

    def build(self):
        maker = make_scaled_linear if self.kind == 'scaled_linear' else \
            make_linear

        return maker(self.T, self.beta_start, self.beta_end)


@dataclass
class CodecTrainingConfig:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-3


@dataclass
class ConditioningConfig:
    semantic: str = 'random_projection'
    p_drop: float = 0.11
    encoder_steps: int = 500

    def __post_init__(self):
        if self.semantic not in ('random_projection', 'tiny_vit'):
            raise ConfigError("'conditioning.semantic' must be "
                              "'random_projection' or 'tiny_vit', got '%s'."
                              % self.semantic)
        if not 0 <= self.p_drop < 1:
            raise ConfigError("'conditioning.p_drop' must lie in [0, 1).")


@dataclass
class DataConfig:
    he_dir: Optional[str] = None
    ihc_dir: Optional[str] = None
    labels_file: Optional[str] = None
    image_size: int = 64
    train_count: int = 400
    test_count: int = 50
    synthetic: GeneratorSpec = field(default_factory=GeneratorSpec)


@dataclass
class OptimizerConfig:
    lr: float = 3e-5
    batch_size: int = 8
    steps: int = 2000
    seed: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    log_every: int = 50
    checkpoint_every: int = 500
    ema: bool = False
    ema_decay: float = 0.999

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.steps < 0:
            raise ConfigError("Optimizer needs lr > 0, batch_size >= 1 and "
                              "steps >= 0.")


@dataclass
class RunConfig:
    model: DiTConfig = field(default_factory=DiTConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    codec_training: CodecTrainingConfig = field(
        default_factory=CodecTrainingConfig)
    conditioning: ConditioningConfig = field(
        default_factory=ConditioningConfig)
    data: DataConfig = field(default_factory=DataConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)


def validate_config(config):
    '''
    Cross-section consistency checks. Raises ConfigError.
    '''

    f = config.codec.compression_factor
    if config.model.latent_size*f != config.data.image_size:
        raise ConfigError("'model.latent_size' (%d) times the compression "
                          "factor (%d) must equal 'data.image_size' (%d)."
                          % (config.model.latent_size, f,
                             config.data.image_size))
    if config.model.latent_channels != config.codec.latent_channels:
        raise ConfigError("'model.latent_channels' (%d) must equal "
                          "'codec.latent_channels' (%d)."
                          % (config.model.latent_channels,
                             config.codec.latent_channels))
    if config.data.synthetic.image_size != config.data.image_size:
        raise ConfigError("'data.synthetic.image_size' must equal "
                          "'data.image_size'.")
    if config.data.synthetic.compression_factor != f:
        raise ConfigError("'data.synthetic.compression_factor' must equal "
                          "'codec.compression_factor'.")

    return None


def _build(node):
    try:
        config = OmegaConf.to_object(node)
    except DistainError as err:
        raise ConfigError(str(err)) from err
    except Exception as err:
        cause = err.__cause__ if isinstance(err.__cause__, DistainError) \
            else err
        raise ConfigError("Invalid configuration: %s" % cause) from err

    validate_config(config)

    return config


def load_config(path=None, overrides=(), text=None):
    '''
    Build a RunConfig from defaults, an optional YAML file (or YAML text)
    and dotlist overrides such as 'optimizer.lr=1e-4', in increasing
    precedence. Unknown keys raise ConfigError.

    Parameters
    ----------
    path : str, optional
        YAML file. The default is None.
    overrides : sequence of str, optional
        Dotlist overrides. The default is ().
    text : str, optional
        YAML text, used instead of 'path'. The default is None.

    Returns
    -------
    RunConfig

    '''

    node = OmegaConf.structured(RunConfig)
    try:
        if path is not None:
            node = OmegaConf.merge(node, OmegaConf.load(path))
        if text is not None:
            node = OmegaConf.merge(node, OmegaConf.create(text))
        if overrides:
            node = OmegaConf.merge(node, OmegaConf.from_dotlist(
                list(overrides)))
    except OSError as err:
        raise ConfigError("Cannot read config file '%s': %s" % (path, err))
    except Exception as err:
        raise ConfigError("Invalid configuration: %s" % err) from err

    return _build(node)


def with_overrides(config, overrides):
    '''
    Copy of 'config' with dotlist overrides applied.
    '''

    return load_config(text=normalized_yaml(config), overrides=overrides)


def normalized_yaml(config, section=None):
    '''
    Canonical YAML text of a config (or of one of its sections). Parsing it
    with load_config(text=...) gives an equal config.
    '''

    obj = config if section is None else getattr(config, section)

    return OmegaConf.to_yaml(OmegaConf.structured(obj))


def fingerprint(config):
    '''
    SHA-256 of the normalised model, schedule, codec and conditioning
    sections: everything a checkpoint's tensors depend on.
    '''

    digest = hashlib.sha256()
    for section in FINGERPRINT_SECTIONS:
        digest.update(('%s:\n' % section).encode('utf-8'))
        digest.update(normalized_yaml(config, section).encode('utf-8'))

    return digest.hexdigest()


def resolve_data_path(path):
    '''
    Relative paths are resolved against $DISTAIN_DATA_ROOT when it is set.
    '''

    if path is None or os.path.isabs(path):
        return path
    root = os.environ.get(DATA_ROOT_VARIABLE)

    return os.path.join(root, path) if root else path
