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
import logging
import os

import numpy as np
import torch
import torch.nn.functional as F

from diffseg.data import write_mask_png, write_probability_png, label_to_index
from diffseg.diffusion import posterior_step
from diffseg.enums import COMMON_TYPES, ValueSpace
from diffseg.exceptions import ConfigurationError
from diffseg.models import InferenceConfig, LabelMap
from diffseg.networks import GeneratorState, generator_forward
from diffseg.utils.asynctools import multitasking
from diffseg.utils.utils import create_logger, makedirs

# =============================================
# Configure logging
create_logger(__name__, level=os.getenv('LOGLEVEL') or logging.INFO)

__pool__ = __name__


# ---------------------------------------------

def derive_seeds(seed, n):
    """ ``n`` independent instance seeds from one run seed """
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(int(n))]


def _renormalize(prob):
    """ make multi-channel maps sum to one per pixel (uniform where all channels are zero) """
    if prob.shape[-3] == 1:
        return prob
    total = prob.sum(dim=-3, keepdim=True)
    uniform = torch.full_like(prob, 1.0 / prob.shape[-3])
    return torch.where(total > 0, prob / torch.where(total > 0, total, torch.ones_like(total)), uniform)


# ---------------------------------------------

def sample_once(image, gen: GeneratorState, s, seed, stochastic=False):
    """Reverse process from ``x_T ~ N(0, I)`` down to ``x_0``.

    One generator evaluation per step with a fresh latent each time; the
    result is mapped to probability space and clamped.
    """
    if gen.timesteps is not None and gen.timesteps != s.T:
        raise ConfigurationError("generator was trained with T=%d, schedule has T=%d"
                                 % (gen.timesteps, s.T), key='diffusion.timesteps')

    squeeze = image.dim() == 3
    if squeeze:
        image = image.unsqueeze(0)

    cfg = gen.config
    dtype = next(gen.module.parameters(), torch.empty(0)).dtype
    image = image.to(dtype)
    batch = image.shape[0]
    rng = torch.Generator().manual_seed(int(seed))

    x = torch.randn(batch, cfg.label_channels, *image.shape[-2:], generator=rng, dtype=dtype)
    with torch.no_grad():
        for t in range(s.T, 0, -1):
            z = torch.randn(batch, cfg.latent_dim, generator=rng, dtype=dtype)
            x0_hat = generator_forward(x, t, z if cfg.use_latent else None, image, gen)
            noise = torch.randn(x.shape, generator=rng, dtype=dtype) if stochastic else None
            x = posterior_step(x, x0_hat, t, s, noise=noise)

    prob = _renormalize(((x + 1) / 2).clamp(0, 1))
    return LabelMap(prob[0] if squeeze else prob, ValueSpace.PROBABILITY)


def predict(image, gen: GeneratorState, s, cfg: InferenceConfig, threads=0):
    """Average ``cfg.n_instances`` samples and harden the mean.

    :Return: (mean map, hard mask); binary masks threshold the mean, multi-class
    masks take the per-pixel argmax and come back one-hot.
    """
    if cfg.n_instances < 1:
        raise ConfigurationError("n_instances must be >= 1", key='infer.instances')

    seeds = derive_seeds(cfg.seed, cfg.n_instances)
    results, failures = {}, {}

    def _instance(index, seed):
        try:
            results[index] = sample_once(image, gen, s, seed, stochastic=cfg.stochastic).values
        except Exception as e:
            failures[index] = e

    multitasking.createPool(__pool__, threads)
    run = multitasking.task(_instance, pool=__pool__)
    for index, seed in enumerate(seeds):
        run(index, seed)
    multitasking.wait_for_tasks(__pool__)

    # re-raise on the caller thread
    if failures:
        raise failures[min(failures)]

    mean = torch.stack([results[i] for i in range(len(seeds))]).double().mean(dim=0)

    if mean.shape[-3] == 1:
        hard = (mean >= cfg.threshold).to(mean.dtype)
    else:
        hard = F.one_hot(mean.argmax(dim=-3), mean.shape[-3]).movedim(-1, -3).to(mean.dtype)

    return LabelMap(mean, ValueSpace.PROBABILITY), LabelMap(hard, ValueSpace.PROBABILITY)


# ---------------------------------------------

def save_prediction(out_dir, stem, mean, hard):
    """ :Return: paths of ``<stem>.pred.png`` and ``<stem>.prob.png`` """
    makedirs(out_dir)
    mean_values = mean.values if isinstance(mean, LabelMap) else mean
    hard_values = hard.values if isinstance(hard, LabelMap) else hard
    channels = hard_values.shape[-3]

    pred_path = os.path.join(out_dir, stem + COMMON_TYPES["PRED_SUFFIX"])
    prob_path = os.path.join(out_dir, stem + COMMON_TYPES["PROB_SUFFIX"])

    write_mask_png(pred_path, label_to_index(hard_values), 1 if channels == 1 else channels - 1)
    foreground = mean_values[0] if channels == 1 else 1 - mean_values[0]
    write_probability_png(prob_path, foreground)
    return pred_path, prob_path
