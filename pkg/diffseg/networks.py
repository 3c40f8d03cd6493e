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
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from diffseg.exceptions import ConfigurationError, ShapeError
from diffseg.models import GeneratorConfig, DiscriminatorConfig
from diffseg.utils.utils import create_logger

# =============================================
# Configure logging
create_logger(__name__, level=os.getenv('LOGLEVEL') or logging.INFO)

# 5% of a 23M-parameter RRDB image encoder
ENCODER_PARAMETER_BUDGET = 1_150_000


# =============================================
# embeddings
# =============================================

def sinusoidal_embed(t, dim):
    """Sinusoidal step embedding.

    First ``dim/2`` entries are ``sin(t w_k)``, the rest ``cos(t w_k)``, with
    ``w_k`` geometric from 1 down to 1/10000. ``t`` may be an int (returns
    ``[dim]``) or a 1-D tensor (returns ``[B, dim]``), float64.
    """
    if int(dim) != dim or dim < 2 or dim % 2:
        raise ConfigurationError("embedding dim must be a positive even number (got %s)" % dim,
                                 key='model.time_embed_dim')
    half = dim // 2
    scalar = not torch.is_tensor(t) or t.dim() == 0
    t = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    if (t < 0).any():
        raise ValueError("time step must be >= 0")

    exponent = torch.arange(half, dtype=torch.float64) / max(half - 1, 1)
    freqs = torch.exp(-math.log(10000.0) * exponent).to(t.device)
    args = t[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    return emb[0] if scalar else emb


def _groups(channels):
    for g in (32, 16, 8, 4, 2, 1):
        if channels % g == 0:
            return g


def _step_embedding(t, dim, batch, like):
    emb = sinusoidal_embed(t, dim).to(device=like.device, dtype=like.dtype)
    if emb.dim() == 1:
        emb = emb.unsqueeze(0).expand(batch, -1)
    return emb


# =============================================
# building blocks
# =============================================

class AdaGroupNorm(nn.Module):
    """ GroupNorm whose scale/shift come from the conditioning vector """

    def __init__(self, channels, cond_dim):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(channels), channels, affine=False)
        self.projection = nn.Sequential(
            nn.SiLU(),
            nn.Linear(cond_dim, 2 * channels)
        )

    def forward(self, x, cond):
        x = self.norm(x)
        gamma, beta = torch.chunk(self.projection(cond), 2, dim=1)
        return x * (1 + gamma[:, :, None, None]) + beta[:, :, None, None]


class ResBlock(nn.Module):

    def __init__(self, in_channels, out_channels, cond_dim):
        super().__init__()
        self.norm1 = AdaGroupNorm(in_channels, cond_dim)
        self.conv1 = nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1)
        self.norm2 = AdaGroupNorm(out_channels, cond_dim)
        self.conv2 = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)
        self.skip = nn.Identity() if in_channels == out_channels else \
            nn.Conv2d(in_channels, out_channels, kernel_size=1)

    def forward(self, x, cond):
        h = self.conv1(F.silu(self.norm1(x, cond)))
        h = self.conv2(F.silu(self.norm2(h, cond)))
        return h + self.skip(x)


class PlainResBlock(nn.Module):
    """ unconditioned residual block used by the image encoder """

    def __init__(self, channels):
        super().__init__()
        self.body = nn.Sequential(
            nn.GroupNorm(_groups(channels), channels),
            nn.SiLU(),
            nn.Conv2d(channels, channels, kernel_size=3, padding=1),
            nn.GroupNorm(_groups(channels), channels),
            nn.SiLU(),
            nn.Conv2d(channels, channels, kernel_size=3, padding=1),
        )

    def forward(self, x):
        return x + self.body(x)


class Downsample(nn.Module):

    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, kernel_size=3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):

    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, channels, kernel_size=3, padding=1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class ConditionEncoder(nn.Module):
    """Light residual image encoder kept at input resolution."""

    def __init__(self, image_channels, condition_channels, blocks=2):
        super().__init__()
        self.stem = nn.Conv2d(image_channels, condition_channels, kernel_size=3, padding=1)
        self.blocks = nn.Sequential(*[PlainResBlock(condition_channels) for _ in range(blocks)])

    def forward(self, image):
        return self.blocks(self.stem(image))

    def num_parameters(self):
        return sum(p.numel() for p in self.parameters())


# =============================================
# generator x_theta(x_t, t, z, I)
# =============================================

class ConditionalUNet(nn.Module):
    """U-Net predicting the clean label.

    The encoded image is concatenated with the noisy label at the input.
    Time and latent embeddings are summed into one conditioning vector that
    drives the adaptive normalization of every residual block.
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        d = config.time_embed_dim
        base = config.base_channels
        mults = config.channel_multipliers

        self.time_mlp = nn.Sequential(nn.Linear(d, d), nn.SiLU(), nn.Linear(d, d))
        self.latent_mlp = nn.Sequential(
            nn.Linear(config.latent_dim, d), nn.SiLU(), nn.Linear(d, d)) if config.use_latent else None
        self.encoder = ConditionEncoder(config.image_channels, config.condition_channels)

        ch = base
        self.in_conv = nn.Conv2d(config.label_channels + config.condition_channels, ch, kernel_size=3, padding=1)
        skip_channels = [ch]

        self.down = nn.ModuleList()
        for level, mult in enumerate(mults):
            out = base * mult
            for _ in range(config.blocks_per_scale):
                self.down.append(ResBlock(ch, out, d))
                ch = out
                skip_channels.append(ch)
            if level != len(mults) - 1:
                self.down.append(Downsample(ch))
                skip_channels.append(ch)

        self.mid = nn.ModuleList([ResBlock(ch, ch, d), ResBlock(ch, ch, d)])

        self.up = nn.ModuleList()
        for level, mult in reversed(list(enumerate(mults))):
            out = base * mult
            for _ in range(config.blocks_per_scale + 1):
                self.up.append(ResBlock(ch + skip_channels.pop(), out, d))
                ch = out
            if level != 0:
                self.up.append(Upsample(ch))

        self.out_norm = nn.GroupNorm(_groups(ch), ch)
        self.out_conv = nn.Conv2d(ch, config.label_channels, kernel_size=3, padding=1)
        if config.zero_init_output:
            nn.init.zeros_(self.out_conv.weight)
            nn.init.zeros_(self.out_conv.bias)

    def conditioning(self, t, z, batch, like):
        cond = self.time_mlp(_step_embedding(t, self.config.time_embed_dim, batch, like))
        if self.latent_mlp is not None:
            if z is None:
                z = torch.zeros(batch, self.config.latent_dim, dtype=like.dtype, device=like.device)
            elif z.dim() == 1:
                z = z.unsqueeze(0).expand(batch, -1)
            cond = cond + self.latent_mlp(z.to(like.dtype))
        return cond

    def forward(self, x, t, z, image):
        cond = self.conditioning(t, z, x.shape[0], x)
        h = self.in_conv(torch.cat([x, self.encoder(image)], dim=1))

        hs = [h]
        for m in self.down:
            h = m(h, cond) if isinstance(m, ResBlock) else m(h)
            hs.append(h)
        for m in self.mid:
            h = m(h, cond)
        for m in self.up:
            h = m(torch.cat([h, hs.pop()], dim=1), cond) if isinstance(m, ResBlock) else m(h)

        return self.out_conv(F.silu(self.out_norm(h)))


# =============================================
# discriminator D(x_t, x_{t-1}, t)
# =============================================

class Discriminator(nn.Module):
    """Residual downsampling stack over the concatenated label pair.

    Returns one logit per sample and the feature maps at every resolution
    level (keyed by spatial size) for attention extraction.
    """

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        d = config.time_embed_dim
        base = config.base_channels

        self.time_mlp = nn.Sequential(nn.Linear(d, d), nn.SiLU(), nn.Linear(d, d))
        ch = base
        self.in_conv = nn.Conv2d(2 * config.label_channels, ch, kernel_size=3, padding=1)

        self.levels = nn.ModuleList()
        self.downs = nn.ModuleList()
        for level, mult in enumerate(config.channel_multipliers):
            out = base * mult
            blocks = nn.ModuleList()
            for _ in range(config.blocks_per_scale):
                blocks.append(ResBlock(ch, out, d))
                ch = out
            self.levels.append(blocks)
            if level != len(config.channel_multipliers) - 1:
                self.downs.append(Downsample(ch))

        self.out_norm = nn.GroupNorm(_groups(ch), ch)
        self.head = nn.Linear(ch, 1)
        nn.init.normal_(self.head.weight, std=0.02)
        nn.init.zeros_(self.head.bias)

    def forward(self, x_t, x_prev, t):
        x = torch.cat([x_t, x_prev], dim=1)
        cond = self.time_mlp(_step_embedding(t, self.config.time_embed_dim, x.shape[0], x))

        h = self.in_conv(x)
        features = OrderedDict()
        for level, blocks in enumerate(self.levels):
            for block in blocks:
                h = block(h, cond)
            features[int(h.shape[-1])] = h
            if level < len(self.downs):
                h = self.downs[level](h)

        logit = self.head(F.silu(self.out_norm(h)).mean(dim=(2, 3))).squeeze(1)
        return logit, OrderedDict((s, features[s]) for s in self.config.scales)


class PerStepDiscriminator(nn.Module):
    """One :class:`Discriminator` per diffusion step.

    Each sample is routed to the network of its own step ``t`` (1-based);
    outputs come back in batch order.
    """

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        self.steps = nn.ModuleList(Discriminator(config) for _ in range(config.per_step))

    def forward(self, x_t, x_prev, t):
        batch = x_t.shape[0]
        t = torch.as_tensor(t, device=x_t.device).long().reshape(-1)
        if t.numel() == 1:
            t = t.expand(batch)
        if int(t.min()) < 1 or int(t.max()) > len(self.steps):
            raise IndexError("time step out of range [1, %d]" % len(self.steps))

        order, logits = [], []
        features = OrderedDict((s, []) for s in self.config.scales)
        for step in t.unique().tolist():
            idx = (t == step).nonzero(as_tuple=True)[0]
            logit, taps = self.steps[step - 1](x_t[idx], x_prev[idx], t[idx])
            order.append(idx)
            logits.append(logit)
            for s, f in taps.items():
                features[s].append(f)

        inverse = torch.argsort(torch.cat(order))
        return (torch.cat(logits)[inverse],
                OrderedDict((s, torch.cat(f)[inverse]) for s, f in features.items()))


# =============================================
# states
# =============================================

@dataclass
class NetworkState:
    """A network together with its bookkeeping.

    :Parameters:

        module : nn.Module
            the network (parameters keyed by layer name via ``state_dict``)
        config : GeneratorConfig or DiscriminatorConfig
            architecture snapshot; parameter shapes are a pure function of it
        step : int
            number of optimizer updates applied
        seed : int
            initialization seed
        timesteps : int
            diffusion step count the network was trained for (None if unknown)
    """
    module: nn.Module
    config: Union[GeneratorConfig, DiscriminatorConfig]
    step: int = 0
    seed: int = 0
    timesteps: Optional[int] = None
    optimizer: Optional[torch.optim.Optimizer] = None

    def named_parameters(self):
        return OrderedDict((k, v.detach()) for k, v in self.module.state_dict().items())

    def parameter_vector(self):
        """ flat copy of every parameter, for freeze / equality checks """
        return torch.cat([p.detach().reshape(-1).clone() for p in self.module.parameters()])

    def num_parameters(self):
        return sum(p.numel() for p in self.module.parameters())

    def eval(self):
        self.module.eval()
        return self


class GeneratorState(NetworkState):

    @classmethod
    def create(cls, config: GeneratorConfig, seed=0, timesteps=None, dtype=torch.float32):
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            module = ConditionalUNet(config).to(dtype)
        state = cls(module=module, config=config, seed=seed, timesteps=timesteps)

        encoder_params = module.encoder.num_parameters()
        log = logging.getLogger(__name__)
        log.debug("generator: %d parameters, condition encoder: %d", state.num_parameters(), encoder_params)
        if encoder_params > ENCODER_PARAMETER_BUDGET:
            log.warning("condition encoder has %d parameters (budget %d)", encoder_params, ENCODER_PARAMETER_BUDGET)
        return state


class DiscriminatorState(NetworkState):

    @classmethod
    def create(cls, config: DiscriminatorConfig, seed=0, timesteps=None, dtype=torch.float32):
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            module = (PerStepDiscriminator(config) if config.per_step else Discriminator(config)).to(dtype)
        return cls(module=module, config=config, seed=seed, timesteps=timesteps)


# =============================================
# operations
# =============================================

def _batched(x, name, channels, resolution):
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if x.dim() != 4 or x.shape[1] != channels or tuple(x.shape[-2:]) != (resolution, resolution):
        raise ShapeError("%s: expected [B, %d, %d, %d], got %s"
                         % (name, channels, resolution, resolution, tuple(x.shape)))
    return x


def _check_t(t, state):
    if state.timesteps is None:
        return
    lo, hi = (int(t.min()), int(t.max())) if torch.is_tensor(t) else (int(t), int(t))
    if lo < 1 or hi > state.timesteps:
        raise IndexError("time step out of range [1, %d]" % state.timesteps)


def encode_condition(image, state: GeneratorState):
    """ :Return: [B, condition_channels, H, W] features of the conditioning image """
    cfg = state.config
    image = _batched(image, "image", cfg.image_channels, cfg.input_resolution)
    return state.module.encoder(image)


def generator_forward(x_in, t, z, image, state: GeneratorState):
    """ :Return: the x0 prediction, shaped like ``x_in`` """
    cfg = state.config
    squeeze = x_in.dim() == 3
    x_in = _batched(x_in, "label", cfg.label_channels, cfg.input_resolution)
    image = _batched(image, "image", cfg.image_channels, cfg.input_resolution)
    if image.shape[0] != x_in.shape[0]:
        raise ShapeError("image batch %d != label batch %d" % (image.shape[0], x_in.shape[0]))
    if z is not None and z.shape[-1] != cfg.latent_dim:
        raise ShapeError("latent length %d != latent_dim %d" % (z.shape[-1], cfg.latent_dim))
    _check_t(t, state)

    out = state.module(x_in, t, z, image)
    return out[0] if squeeze else out


def discriminator_forward(x_t, x_prev, t, state: DiscriminatorState):
    """ :Return: (logit [B], {scale: features [B, C, s, s]}) """
    cfg = state.config
    if tuple(x_t.shape) != tuple(x_prev.shape):
        raise ShapeError("x_t %s and x_prev %s differ" % (tuple(x_t.shape), tuple(x_prev.shape)))
    x_t = _batched(x_t, "x_t", cfg.label_channels, cfg.input_resolution)
    x_prev = _batched(x_prev, "x_prev", cfg.label_channels, cfg.input_resolution)
    _check_t(t, state)
    return state.module(x_t, x_prev, t)
