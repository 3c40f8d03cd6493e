#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright 2026 The diffseg Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
"""Run settings as dotted ``section.name`` keys.

Resolution order, later wins: ``DEFAULTS`` -> YAML file -> environment
(``DIFFSEG_<SECTION>_<NAME>``) -> command-line flags -> ``--set key=value``.
"""
import logging
import os
from collections import OrderedDict
from dataclasses import replace

import yaml

from diffseg.enums import AttentionScales
from diffseg.exceptions import ConfigurationError
from diffseg.models import (GeneratorConfig, DiscriminatorConfig, TrainConfig,
                            InferenceConfig, SyntheticSpec, label_channels_for)
from diffseg.utils.utils import create_logger, to_boolean, is_number, to_int_list

# =============================================
# Configure logging
create_logger(__name__, level=os.getenv('LOGLEVEL') or logging.INFO)

ENV_PREFIX = "DIFFSEG"

# key: (default, description)
SETTINGS = OrderedDict([
    ('run.seed', (0, "seed for training and inference")),

    ('data.root', (None, "dataset folder with images/ and masks/")),
    ('data.source', ('folder', "folder or synthetic")),
    ('data.resolution', (64, "model input resolution (pixels)")),
    ('data.image_channels', (1, "1 grayscale, 3 RGB")),
    ('data.class_count', (1, "foreground classes (1 binary)")),
    ('data.k_folds', (0, "cross-validation folds (0 = no split)")),
    ('data.fold', (0, "validation fold index")),
    ('data.split_seed', (0, "fold shuffle seed")),
    ('data.threads', (0, "file loading threads (0 = synchronous)")),
    ('data.structure', (None, "small or large; picks train.attn_scale when it is not set")),

    ('synth.count', (16, "synthetic samples")),
    ('synth.min_objects', (1, "objects per scene, lower bound")),
    ('synth.max_objects', (4, "objects per scene, upper bound")),
    ('synth.shape', ('ellipse', "ellipse or blob")),
    ('synth.radius_range', ([0.08, 0.22], "object semi-axis range (fraction of size)")),
    ('synth.contrast', (0.6, "foreground intensity offset")),
    ('synth.noise', (0.1, "pixel noise level")),
    ('synth.seed', (0, "scene seed")),

    ('model.base_channels', (64, "generator base width")),
    ('model.channel_multipliers', ([1, 2, 4], "width per resolution level")),
    ('model.blocks_per_scale', (2, "residual blocks per level")),
    ('model.time_embed_dim', (128, "sinusoidal embedding size")),
    ('model.latent_dim', (100, "latent vector length")),
    ('model.condition_channels', (32, "image encoder width")),
    ('model.zero_init_output', (True, "zero-initialize the output projection")),
    ('model.disc_base_channels', (64, "discriminator base width")),
    ('model.disc_scales', ([], "discriminator taps (empty = every level)")),
    ('model.disc_per_step', (False, "one discriminator per diffusion step instead of a shared one")),

    ('diffusion.timesteps', (4, "diffusion steps T")),
    ('diffusion.beta_min', (0.1, "schedule lower bound")),
    ('diffusion.beta_max', (20.0, "schedule upper bound")),

    ('train.use_latent', (True, "inject the latent vector")),
    ('train.use_attention', (True, "mask targets with discriminator attention")),
    ('train.attn_scale', (32, "discriminator tap for attention (16, 32, 64)")),
    ('train.attn_source', ('fake', "fake, real or both discriminator passes")),
    ('train.attn_norm', ('minmax', "minmax or raw")),
    ('train.fresh_noise', (False, "independent noise for every forward sample")),
    ('train.lr_g', (1e-4, "generator learning rate")),
    ('train.lr_d', (1e-4, "discriminator learning rate")),
    ('train.adam_betas', ([0.5, 0.9], "Adam moment decays")),
    ('train.grad_clip', (1.0, "global gradient norm clip")),
    ('train.batch_size', (8, "batch size")),
    ('train.max_steps', (5000, "generator updates")),
    ('train.checkpoint_interval', (1000, "steps between checkpoints (0 = final only)")),
    ('train.log_interval', (50, "steps between progress lines")),
    ('train.attn_debug_dir', (None, "write attention PNGs here at checkpoints")),
    ('train.resume', (None, "checkpoint to resume from")),

    ('infer.checkpoint', (None, "checkpoint to sample from")),
    ('infer.images', (None, "images to predict (default: <data.root>/images)")),
    ('infer.instances', (5, "samples averaged per image")),
    ('infer.threshold', (0.5, "binary threshold on the mean")),
    ('infer.stochastic', (False, "add posterior noise at every reverse step")),
    ('infer.threads', (0, "concurrent instances")),

    ('eval.pooled', (False, "pool counts over the dataset instead of averaging per image")),
    ('eval.pred_root', (None, "folder of <stem>.pred.png to evaluate without a model")),

    ('ablate.scales', ([16, 32, 64], "attention scales to sweep")),
    ('ablate.seeds', ([0, 1, 2], "seeds per variant")),
    ('ablate.variants', (['full', 'no_attention', 'no_latent'], "variants to train")),
    ('ablate.val_count', (16, "synthetic validation samples")),
])

DEFAULTS = OrderedDict((k, v[0]) for k, v in SETTINGS.items())


# =============================================

def env_name(key):
    return "%s_%s" % (ENV_PREFIX, key.replace('.', '_').upper())


def coerce(key, value):
    """ convert ``value`` to the type of the default of ``key`` """
    if key not in DEFAULTS:
        raise ConfigurationError("unknown setting", key=key)
    default = DEFAULTS[key]

    if isinstance(value, str) and value.strip().lower() in ('none', 'null', '~'):
        if default is None:
            return None
    try:
        if isinstance(default, bool):
            parsed = to_boolean(value)
            if parsed is None:
                raise ValueError(value)
            return parsed
        if isinstance(default, int):
            if isinstance(value, bool) or not is_number(value) or float(value) != int(float(value)):
                raise ValueError(value)
            return int(float(value))
        if isinstance(default, float):
            if isinstance(value, bool) or not is_number(value):
                raise ValueError(value)
            return float(value)
        if isinstance(default, list):
            if not default or isinstance(default[0], int):
                return to_int_list(value)
            items = value
            if isinstance(value, str):
                items = [v.strip() for v in value.split(',') if v.strip()]
            elif not isinstance(value, (list, tuple)):
                items = [value]
            kind = type(default[0])
            return [kind(v) for v in items]
        if default is None or isinstance(default, str):
            return None if value is None else str(value)
    except (TypeError, ValueError):
        raise ConfigurationError("invalid value %r" % (value,), key=key)
    return value


def flatten(data, prefix=''):
    """ ``{section: {name: v}}`` and ``{'section.name': v}`` -> flat dotted dict """
    flat = OrderedDict()
    for k, v in (data or {}).items():
        key = "%s.%s" % (prefix, k) if prefix else str(k)
        if isinstance(v, dict):
            flat.update(flatten(v, key))
        else:
            flat[key] = v
    return flat


def load_yaml(path):
    if not os.path.isfile(path):
        raise ConfigurationError("config file not found: %s" % path, key='config')
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError("cannot parse %s: %s" % (path, e), key='config')
    if data is not None and not isinstance(data, dict):
        raise ConfigurationError("%s must hold a mapping" % path, key='config')
    # a run manifest reruns with its resolved settings
    if data and 'artifacts' in data and isinstance(data.get('config'), dict):
        data = data['config']
    return flatten(data)


def parse_override(text):
    if '=' not in text:
        raise ConfigurationError("override %r is not key=value" % text, key=text)
    key, value = text.split('=', 1)
    return key.strip(), value.strip()


# =============================================

class Settings(OrderedDict):
    """Resolved settings; ``explicit`` lists keys set by any source but the defaults."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.explicit = set()

    def set(self, key, value):
        self[key] = coerce(key, value)
        self.explicit.add(key)

    def to_dict(self):
        return OrderedDict(self)


def resolve(config_file=None, flags=None, overrides=None, environ=None):
    """ :Return: Settings merged from every source """
    settings = Settings(DEFAULTS)
    environ = os.environ if environ is None else environ

    if config_file:
        for key, value in load_yaml(config_file).items():
            settings.set(key, value)

    for key in DEFAULTS:
        name = env_name(key)
        if name in environ:
            settings.set(key, environ[name])

    for key, value in (flags or {}).items():
        if value is not None:
            settings.set(key, value)

    for text in overrides or []:
        settings.set(*parse_override(text))

    return settings


# =============================================
# typed configs
# =============================================

def synthetic_spec(settings, seed=None):
    return SyntheticSpec(resolution=settings['data.resolution'],
                         min_objects=settings['synth.min_objects'],
                         max_objects=settings['synth.max_objects'],
                         shape_family=settings['synth.shape'],
                         radius_range=tuple(settings['synth.radius_range']),
                         contrast=settings['synth.contrast'],
                         noise_level=settings['synth.noise'],
                         class_count=settings['data.class_count'],
                         image_channels=settings['data.image_channels'],
                         seed=settings['synth.seed'] if seed is None else seed)


def generator_config(settings):
    return GeneratorConfig(input_resolution=settings['data.resolution'],
                           label_channels=label_channels_for(settings['data.class_count']),
                           image_channels=settings['data.image_channels'],
                           base_channels=settings['model.base_channels'],
                           channel_multipliers=tuple(settings['model.channel_multipliers']),
                           blocks_per_scale=settings['model.blocks_per_scale'],
                           time_embed_dim=settings['model.time_embed_dim'],
                           latent_dim=settings['model.latent_dim'],
                           condition_channels=settings['model.condition_channels'],
                           use_latent=settings['train.use_latent'],
                           zero_init_output=settings['model.zero_init_output'])


def discriminator_config(settings, generator=None):
    generator = generator or generator_config(settings)
    mirrored = DiscriminatorConfig.mirror(generator, base_channels=settings['model.disc_base_channels'])
    per_step = settings['diffusion.timesteps'] if settings['model.disc_per_step'] else 0
    return replace(mirrored, scales=tuple(settings['model.disc_scales']) or None, per_step=per_step)


def attention_scale(settings):
    """ explicit ``train.attn_scale`` wins, then the ``data.structure`` default """
    structure = settings['data.structure']
    if structure is None or 'train.attn_scale' in settings.explicit:
        return settings['train.attn_scale']
    try:
        return AttentionScales.default_for(structure)
    except ValueError as e:
        raise ConfigurationError(str(e), key='data.structure')


def train_config(settings):
    return TrainConfig(timesteps=settings['diffusion.timesteps'],
                       beta_min=settings['diffusion.beta_min'],
                       beta_max=settings['diffusion.beta_max'],
                       attn_scale=attention_scale(settings),
                       use_latent=settings['train.use_latent'],
                       use_attention=settings['train.use_attention'],
                       attn_source=settings['train.attn_source'],
                       attn_norm=settings['train.attn_norm'],
                       fresh_noise=settings['train.fresh_noise'],
                       lr_g=settings['train.lr_g'],
                       lr_d=settings['train.lr_d'],
                       adam_betas=tuple(settings['train.adam_betas']),
                       grad_clip=settings['train.grad_clip'],
                       batch_size=settings['train.batch_size'],
                       max_steps=settings['train.max_steps'],
                       seed=settings['run.seed'],
                       checkpoint_interval=settings['train.checkpoint_interval'],
                       log_interval=settings['train.log_interval'],
                       attn_debug_dir=settings['train.attn_debug_dir'])


def inference_config(settings, timesteps=None):
    return InferenceConfig(timesteps=timesteps or settings['diffusion.timesteps'],
                           n_instances=settings['infer.instances'],
                           threshold=settings['infer.threshold'],
                           seed=settings['run.seed'],
                           stochastic=settings['infer.stochastic'])


def describe():
    """ ``--help`` epilog listing every key with its default """
    width = max(len(k) for k in SETTINGS)
    lines = ["settings (YAML key, %s_<SECTION>_<NAME> or --set key=value):" % ENV_PREFIX]
    for key, (default, text) in SETTINGS.items():
        lines.append("  %s  %s (default: %s)" % (key.ljust(width), text, default))
    return "\n".join(lines)
