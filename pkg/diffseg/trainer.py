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
import math
import os
import time
from dataclasses import dataclass, replace
from typing import Optional

import torch
import torch.nn.functional as F

from diffseg.attention import apply_attention, attention_for_step, save_attention_png, AttentionMap
from diffseg.checkpoint import save_checkpoint, load_checkpoint
from diffseg.data import to_diffusion_space
from diffseg.diffusion import build_schedule, forward_sample, forward_reparam_prev
from diffseg.enums import COMMON_TYPES
from diffseg.exceptions import ConfigurationError, TrainingDivergedError
from diffseg.models import (GeneratorConfig, DiscriminatorConfig, TrainConfig,
                            TrainLogRecord, label_channels_for)
from diffseg.networks import (GeneratorState, DiscriminatorState,
                              generator_forward, discriminator_forward)
from diffseg.utils.utils import create_logger, DataStore, write_json, makedirs

# =============================================
# Configure logging
create_logger(__name__, level=os.getenv('LOGLEVEL') or logging.INFO)


# =============================================

class TrainLog(DataStore):
    """ TrainLogRecord stream, one JSON object per line """

    def __init__(self, output_file=None, append=False):
        super().__init__(output_file, append=append)
        self.records = []

    def append(self, record: TrainLogRecord):
        self.records.append(record)
        self.record(record.to_dict())
        return record

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass
class DiscriminatorStepResult:
    real_loss: float
    fake_loss: float
    accuracy: float
    real_features: dict
    fake_features: dict


def _optimizer(module, lr, betas):
    return torch.optim.Adam(module.parameters(), lr=lr, betas=tuple(betas))


def _parameter_norms(state):
    return {name: float(p.detach().norm()) for name, p in state.module.named_parameters()}


# =============================================

class Trainer():
    """Alternating discriminator / generator updates with attention-masked targets.

    :Parameters:

        gen_config : GeneratorConfig
            generator architecture
        disc_config : DiscriminatorConfig
            discriminator architecture; must expose ``train_config.attn_scale``
        train_config : TrainConfig
            schedule, optimizer and ablation switches
        output : str
            run directory for the log stream, checkpoints and diagnostics (default: None, memory only)
        dtype : torch.dtype
            parameter and data precision (default: float32)
    """

    def __init__(self, gen_config: GeneratorConfig, disc_config: DiscriminatorConfig,
                 train_config: TrainConfig, output=None, dtype=torch.float32,
                 gen: Optional[GeneratorState] = None, disc: Optional[DiscriminatorState] = None,
                 append_log=False):

        self.log = logging.getLogger(__name__)

        if train_config.use_latent != gen_config.use_latent:
            raise ConfigurationError("train.use_latent=%s but the generator was built with use_latent=%s"
                                     % (train_config.use_latent, gen_config.use_latent), key='train.use_latent')
        if gen_config.label_channels != disc_config.label_channels:
            raise ConfigurationError("generator and discriminator label channels differ", key='data.class_count')
        train_config.validate_against(disc_config)

        self.config = train_config
        self.dtype = dtype
        self.output = output
        self.schedule = build_schedule(train_config.timesteps, train_config.beta_min, train_config.beta_max)
        if disc_config.per_step and disc_config.per_step != self.schedule.T:
            raise ConfigurationError("%d per-step discriminators for T=%d"
                                     % (disc_config.per_step, self.schedule.T), key='model.disc_per_step')

        seed = train_config.seed
        self.gen = gen or GeneratorState.create(gen_config, seed=seed, timesteps=self.schedule.T, dtype=dtype)
        self.disc = disc or DiscriminatorState.create(disc_config, seed=seed + 1,
                                                      timesteps=self.schedule.T, dtype=dtype)
        self.gen.optimizer = _optimizer(self.gen.module, train_config.lr_g, train_config.adam_betas)
        self.disc.optimizer = _optimizer(self.disc.module, train_config.lr_d, train_config.adam_betas)

        # training random stream: batches, t, eps and z
        self.rng = torch.Generator().manual_seed(seed)

        log_file = None
        if output is not None:
            makedirs(output)
            log_file = os.path.join(output, COMMON_TYPES["TRAIN_LOG_FILE"])
        self.train_log = TrainLog(log_file, append=append_log)
        self.last_attention = None

    # ---------------------------------------
    @classmethod
    def resume(cls, path, output=None):
        """ continue a run from a checkpoint, including optimizer moments and the random stream """
        ckpt = load_checkpoint(path)
        if ckpt.discriminator is None:
            raise ConfigurationError("checkpoint %s holds no discriminator" % path, key='train.resume')
        train_config = TrainConfig(**ckpt.train_config)
        dtype = next(ckpt.generator.module.parameters()).dtype

        trainer = cls(ckpt.generator.config, ckpt.discriminator.config, train_config, output=output,
                      dtype=dtype, gen=ckpt.generator, disc=ckpt.discriminator, append_log=True)
        if 'generator' in ckpt.optimizer_states:
            trainer.gen.optimizer.load_state_dict(ckpt.optimizer_states['generator'])
        if 'discriminator' in ckpt.optimizer_states:
            trainer.disc.optimizer.load_state_dict(ckpt.optimizer_states['discriminator'])
        if ckpt.rng_state is not None:
            trainer.rng.set_state(ckpt.rng_state)

        trainer.log.info("resumed from %s at step %d", path, trainer.gen.step)
        return trainer

    # ---------------------------------------
    def _sample_timestep(self):
        return int(torch.randint(1, self.schedule.T + 1, (1,), generator=self.rng))

    def _randn(self, *shape):
        return torch.randn(*shape, generator=self.rng, dtype=self.dtype)

    def _check_finite(self, t, **losses):
        if all(math.isfinite(v) for v in losses.values()):
            return
        diagnostics = {
            'step': int(self.gen.step),
            't': int(t),
            'losses': {k: float(v) for k, v in losses.items()},
            'generator_norms': _parameter_norms(self.gen),
            'discriminator_norms': _parameter_norms(self.disc),
        }
        path = None
        if self.output is not None:
            path = write_json(os.path.join(self.output, COMMON_TYPES["DIAGNOSTICS_FILE"]), diagnostics)
        self.log.error("non-finite loss at step %d (t=%d): %s", self.gen.step, t, diagnostics['losses'])
        raise TrainingDivergedError("training diverged at step %d" % self.gen.step,
                                    diagnostics=path or diagnostics)

    @staticmethod
    def _clip_and_step(state, grad_clip):
        torch.nn.utils.clip_grad_norm_(state.module.parameters(), grad_clip)
        state.optimizer.step()

    # ---------------------------------------
    def discriminator_step(self, x0, image, t, eps, z, eps_prev=None):
        """Two sequential updates of D: real pair labeled 1, then fake pair labeled 0.

        The generator only runs forward (no gradients, no update).
        """
        s = self.schedule
        eps_prev = eps if eps_prev is None else eps_prev

        x_t = forward_sample(x0, t, eps, s)
        x_prev = forward_reparam_prev(x0, t, eps_prev, s)
        with torch.no_grad():
            x0_hat = generator_forward(x_t, t, z, image, self.gen)
        x_prev_fake = forward_reparam_prev(x0_hat, t, eps_prev, s)

        opt = self.disc.optimizer

        opt.zero_grad(set_to_none=True)
        logit_real, real_features = discriminator_forward(x_t, x_prev, t, self.disc)
        real_loss = F.binary_cross_entropy_with_logits(logit_real, torch.ones_like(logit_real))
        self._check_finite(t, disc_real_loss=float(real_loss))
        real_loss.backward()
        self._clip_and_step(self.disc, self.config.grad_clip)

        opt.zero_grad(set_to_none=True)
        logit_fake, fake_features = discriminator_forward(x_t, x_prev_fake, t, self.disc)
        fake_loss = F.binary_cross_entropy_with_logits(logit_fake, torch.zeros_like(logit_fake))
        self._check_finite(t, disc_fake_loss=float(fake_loss))
        fake_loss.backward()
        self._clip_and_step(self.disc, self.config.grad_clip)
        opt.zero_grad(set_to_none=True)

        self.disc.step += 1
        correct = (logit_real.detach() > 0).sum() + (logit_fake.detach() < 0).sum()
        accuracy = float(correct) / float(2 * logit_real.shape[0])

        return DiscriminatorStepResult(
            float(real_loss), float(fake_loss), accuracy,
            {k: v.detach() for k, v in real_features.items()},
            {k: v.detach() for k, v in fake_features.items()})

    # ---------------------------------------
    def generator_step(self, x0, image, t, eps, z, attention: Optional[AttentionMap] = None):
        """ one update of the generator on ``|| x0 - x_theta(x_t^att, t, z, I) ||^2`` """
        x0_att = apply_attention(x0, attention) if attention is not None else x0
        x_t_att = forward_sample(x0_att, t, eps, self.schedule)

        opt = self.gen.optimizer
        opt.zero_grad(set_to_none=True)
        x0_hat = generator_forward(x_t_att, t, z, image, self.gen)
        loss = F.mse_loss(x0_hat, x0)
        self._check_finite(t, generator_loss=float(loss))
        loss.backward()
        self._clip_and_step(self.gen, self.config.grad_clip)
        opt.zero_grad(set_to_none=True)

        self.gen.step += 1
        return float(loss)

    # ---------------------------------------
    def attention_from(self, result: DiscriminatorStepResult, resolution):
        cfg = self.config
        return attention_for_step(result.real_features, result.fake_features, cfg.attn_scale,
                                  resolution, resolution, source=cfg.attn_source, normalization=cfg.attn_norm)

    def step(self, images, labels):
        """ one full iteration on tensors already in diffusion space """
        started = time.time()
        cfg = self.config
        n = images.shape[0]

        idx = torch.randint(n, (cfg.batch_size,), generator=self.rng)
        x0, image = labels[idx], images[idx]
        t = self._sample_timestep()
        eps = self._randn(*x0.shape)
        z = self._randn(x0.shape[0], self.gen.config.latent_dim)
        eps_prev, eps_att = eps, eps
        if cfg.fresh_noise:
            eps_prev = self._randn(*x0.shape)
            eps_att = self._randn(*x0.shape)
        if not cfg.use_latent:
            z = None

        result = self.discriminator_step(x0, image, t, eps, z, eps_prev=eps_prev)
        attention = self.attention_from(result, x0.shape[-1]) if cfg.use_attention else None
        generator_loss = self.generator_step(x0, image, t, eps_att, z, attention=attention)
        self.last_attention = attention

        return self.train_log.append(TrainLogRecord(
            step=int(self.gen.step), t=t, generator_loss=generator_loss,
            disc_real_loss=result.real_loss, disc_fake_loss=result.fake_loss,
            disc_accuracy=result.accuracy, wall_time=time.time() - started))

    # ---------------------------------------
    def checkpoint(self):
        if self.output is None:
            return None
        stem = os.path.join(self.output, COMMON_TYPES["CHECKPOINTS_DIR"], "step_%06d" % self.gen.step)
        paths = save_checkpoint(stem, self.gen, self.schedule, disc=self.disc,
                                train_config=self.config.to_dict(), rng_state=self.rng.get_state())
        if self.config.attn_debug_dir and self.last_attention is not None:
            save_attention_png(self.last_attention,
                               os.path.join(self.config.attn_debug_dir, "step_%06d.png" % self.gen.step))
        return paths

    def _tensors(self, dataset):
        if not dataset:
            raise ConfigurationError("dataset is empty", key='data.root')
        cfg = self.gen.config
        images = torch.stack([s.image for s in dataset]).to(self.dtype)
        labels = to_diffusion_space(torch.stack([s.label for s in dataset])).to(self.dtype)
        if images.shape[1:] != (cfg.image_channels, cfg.input_resolution, cfg.input_resolution):
            raise ConfigurationError("dataset images %s do not match the model (%d, %d, %d)"
                                     % (tuple(images.shape[1:]), cfg.image_channels,
                                        cfg.input_resolution, cfg.input_resolution), key='data.resolution')
        if labels.shape[1] != cfg.label_channels:
            raise ConfigurationError("dataset labels have %d channels, model expects %d"
                                     % (labels.shape[1], cfg.label_channels), key='data.class_count')
        return images, labels

    def train(self, dataset, max_steps=None):
        """ run until ``max_steps`` generator updates, :Return: (gen, disc, log) """
        images, labels = self._tensors(dataset)
        max_steps = self.config.max_steps if max_steps is None else int(max_steps)
        self.log.info("training on %d samples, T=%d, %d steps (from %d)",
                      images.shape[0], self.schedule.T, max_steps, self.gen.step)

        record = None
        while self.gen.step < max_steps:
            record = self.step(images, labels)
            if self.config.log_interval and record.step % self.config.log_interval == 0:
                self.log.info("step %d t=%d loss_g=%.5f loss_d=%.4f/%.4f acc_d=%.3f",
                              record.step, record.t, record.generator_loss,
                              record.disc_real_loss, record.disc_fake_loss, record.disc_accuracy)
            if self.config.checkpoint_interval and record.step % self.config.checkpoint_interval == 0:
                self.checkpoint()

        if record is not None and self.output is not None and (
                not self.config.checkpoint_interval or record.step % self.config.checkpoint_interval):
            self.checkpoint()

        return self.gen, self.disc, self.train_log


# =============================================

def configs_for(dataset, train_config: TrainConfig, gen_config: Optional[GeneratorConfig] = None,
                disc_config: Optional[DiscriminatorConfig] = None):
    """ fill data-dependent architecture fields from the dataset """
    if not dataset:
        raise ConfigurationError("dataset is empty", key='data.root')
    first = dataset[0]
    gen_config = replace(gen_config or GeneratorConfig(),
                         input_resolution=first.resolution,
                         image_channels=int(first.image.shape[0]),
                         label_channels=label_channels_for(first.class_count),
                         use_latent=train_config.use_latent)
    if disc_config is None:
        disc_config = DiscriminatorConfig.mirror(gen_config)
    else:
        keep = disc_config.input_resolution == gen_config.input_resolution
        disc_config = replace(disc_config, input_resolution=gen_config.input_resolution,
                              label_channels=gen_config.label_channels,
                              scales=disc_config.scales if keep else None)
    return gen_config, disc_config


def train(config: TrainConfig, dataset, gen_config=None, disc_config=None, output=None, dtype=torch.float32):
    """ :Return: (GeneratorState, DiscriminatorState, TrainLog) """
    gen_config, disc_config = configs_for(dataset, config, gen_config, disc_config)
    trainer = Trainer(gen_config, disc_config, config, output=output, dtype=dtype)
    return trainer.train(dataset)
