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
"""Checkpoint files.

A checkpoint is a pair ``<stem>.pt`` (named tensors, optimizer states and the
training random stream, via ``torch.save``) plus a ``<stem>.json`` sidecar
recording configs, schedule parameters, step and seed.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import torch

from diffseg.diffusion import build_schedule, NoiseSchedule
from diffseg.exceptions import ConfigurationError, DataError
from diffseg.models import GeneratorConfig, DiscriminatorConfig
from diffseg.networks import GeneratorState, DiscriminatorState
from diffseg.utils.utils import create_logger, write_json, read_json, makedirs

# =============================================
# Configure logging
create_logger(__name__, level=os.getenv('LOGLEVEL') or logging.INFO)

FORMAT_VERSION = 1


# ---------------------------------------------

@dataclass
class Checkpoint:
    generator: GeneratorState
    schedule: NoiseSchedule
    discriminator: Optional[DiscriminatorState] = None
    train_config: dict = field(default_factory=dict)
    optimizer_states: dict = field(default_factory=dict)
    rng_state: Optional[torch.Tensor] = None
    meta: dict = field(default_factory=dict)

    @property
    def step(self):
        return self.generator.step


def _stem(path):
    path = os.fspath(path)
    for ext in ('.pt', '.json'):
        if path.endswith(ext):
            return path[:-len(ext)]
    return path


# ---------------------------------------------

def save_checkpoint(path, gen, schedule, disc=None, train_config=None, rng_state=None):
    """ :Return: (tensor file, sidecar file) """
    stem = _stem(path)
    makedirs(os.path.dirname(stem) or '.')

    payload = {
        'generator': gen.module.state_dict(),
        'discriminator': disc.module.state_dict() if disc is not None else None,
        'optimizers': {
            name: state.optimizer.state_dict()
            for name, state in (('generator', gen), ('discriminator', disc))
            if state is not None and state.optimizer is not None
        },
        'rng_state': rng_state,
    }
    torch.save(payload, stem + '.pt')

    meta = {
        'format_version': FORMAT_VERSION,
        'step': int(gen.step),
        'seed': int(gen.seed),
        'schedule': schedule.to_dict(),
        'generator_config': gen.config.to_dict(),
        'discriminator_config': disc.config.to_dict() if disc is not None else None,
        'discriminator_step': int(disc.step) if disc is not None else None,
        'discriminator_seed': int(disc.seed) if disc is not None else None,
        'train_config': dict(train_config or {}),
        'dtype': str(next(gen.module.parameters()).dtype).replace('torch.', ''),
    }
    write_json(stem + '.json', meta)

    logging.getLogger(__name__).debug("checkpoint written: %s (step %d)", stem, gen.step)
    return stem + '.pt', stem + '.json'


# ---------------------------------------------

def load_checkpoint(path, with_discriminator=True):
    """ rebuild the states saved by :func:`save_checkpoint` exactly """
    stem = _stem(path)
    if not os.path.exists(stem + '.pt') or not os.path.exists(stem + '.json'):
        raise DataError("checkpoint not found: %s(.pt|.json)" % stem, rejected=[stem])

    meta = read_json(stem + '.json')
    if meta.get('format_version') != FORMAT_VERSION:
        raise ConfigurationError("unsupported checkpoint format %s" % meta.get('format_version'),
                                 key='infer.checkpoint')

    payload = torch.load(stem + '.pt', map_location='cpu')
    dtype = getattr(torch, meta.get('dtype', 'float32'))
    s = meta['schedule']
    schedule = build_schedule(s['T'], s['beta_min'], s['beta_max'])

    gen = GeneratorState.create(GeneratorConfig(**meta['generator_config']),
                                seed=meta['seed'], timesteps=schedule.T, dtype=dtype)
    gen.module.load_state_dict(payload['generator'])
    gen.step = int(meta['step'])

    disc = None
    if with_discriminator and payload.get('discriminator') is not None:
        disc = DiscriminatorState.create(DiscriminatorConfig(**meta['discriminator_config']),
                                         seed=meta['discriminator_seed'], timesteps=schedule.T, dtype=dtype)
        disc.module.load_state_dict(payload['discriminator'])
        disc.step = int(meta['discriminator_step'])

    return Checkpoint(generator=gen, schedule=schedule, discriminator=disc,
                      train_config=meta.get('train_config') or {},
                      optimizer_states=payload.get('optimizers') or {},
                      rng_state=payload.get('rng_state'), meta=meta)


def check_timesteps(checkpoint, timesteps):
    """ refuse to sample with a step count the generator was not trained for """
    if timesteps is not None and int(timesteps) != checkpoint.schedule.T:
        raise ConfigurationError(
            "checkpoint was trained with T=%d but T=%d was requested; "
            "few-step generators only work with their training schedule"
            % (checkpoint.schedule.T, int(timesteps)), key='diffusion.timesteps')
