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
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from diffseg.enums import AttentionNorm, AttentionSource
from diffseg.exceptions import ShapeError
from diffseg.utils.utils import create_logger, makedirs

# =============================================
# Configure logging
create_logger(__name__, level=os.getenv('LOGLEVEL') or logging.INFO)


# ---------------------------------------------

@dataclass
class AttentionMap:
    """Spatial weights ``[B, H, W]`` (or ``[H, W]``) taken from one discriminator tap.

    :Parameters:

        weights : torch.Tensor
            channel-mean of the tapped features, optionally rescaled
        source_scale : int
            spatial size of the tap the weights come from
        normalization : str
            ``raw`` or ``minmax`` (see AttentionNorm)
    """
    weights: torch.Tensor
    source_scale: int
    normalization: str = AttentionNorm.RAW

    @property
    def shape(self):
        return tuple(self.weights.shape)

    def detach(self):
        return AttentionMap(self.weights.detach(), self.source_scale, self.normalization)


# ---------------------------------------------

def attention_map(features, source_scale=None):
    """ channel mean of ``[C, H, W]`` or ``[B, C, H, W]`` features """
    if features is None or features.dim() < 3 or features.numel() == 0 or features.shape[-3] < 1:
        raise ShapeError("attention needs a non-empty [.., C, H, W] feature grid")
    scale = int(features.shape[-1]) if source_scale is None else int(source_scale)
    return AttentionMap(features.mean(dim=-3), scale, AttentionNorm.RAW)


def combine_maps(maps):
    """ average raw maps from several discriminator passes (same tap) """
    if not maps:
        raise ShapeError("no attention maps to combine")
    weights = torch.stack([m.weights for m in maps]).mean(dim=0)
    return AttentionMap(weights, maps[0].source_scale, AttentionNorm.RAW)


def minmax(weights):
    """ per-sample rescale to [0, 1]; constant maps become all ones """
    lo = weights.amin(dim=(-2, -1), keepdim=True)
    hi = weights.amax(dim=(-2, -1), keepdim=True)
    span = hi - lo
    scaled = (weights - lo) / torch.where(span > 0, span, torch.ones_like(span))
    return torch.where(span > 0, scaled, torch.ones_like(weights))


def normalize_and_upsample(a, H, W, normalization=AttentionNorm.MINMAX):
    """Rescale then bilinearly upsample (corner aligned) to ``H x W``.

    ``normalization=raw`` skips the rescale.
    """
    h, w = int(a.weights.shape[-2]), int(a.weights.shape[-1])
    if H % h or W % w or H < h or W < w:
        raise ShapeError("cannot upsample %dx%d attention to %dx%d by an integer factor" % (h, w, H, W))
    if normalization not in AttentionNorm.tuple():
        raise ValueError("unknown attention normalization %r" % normalization)

    weights = minmax(a.weights) if normalization == AttentionNorm.MINMAX else a.weights
    if (h, w) != (H, W):
        flat = weights.reshape(-1, 1, h, w)
        flat = F.interpolate(flat, size=(H, W), mode="bilinear", align_corners=True)
        weights = flat.reshape(*weights.shape[:-2], H, W)

    return AttentionMap(weights, a.source_scale, normalization)


def apply_attention(x0, a):
    """ ``x0 * A`` with the map broadcast over label channels """
    weights = a.weights if isinstance(a, AttentionMap) else a
    if tuple(weights.shape[-2:]) != tuple(x0.shape[-2:]):
        raise ShapeError("label %s and attention %s spatial sizes differ"
                         % (tuple(x0.shape), tuple(weights.shape)))
    if weights.dim() == x0.dim() - 1:
        weights = weights.unsqueeze(-3)
    if x0.dim() == 4 and weights.shape[0] not in (1, x0.shape[0]):
        raise ShapeError("label batch %d and attention batch %d differ" % (x0.shape[0], weights.shape[0]))
    return x0 * weights.to(x0.dtype)


# ---------------------------------------------

def attention_for_step(real_features, fake_features, scale, H, W,
                       source=AttentionSource.FAKE, normalization=AttentionNorm.MINMAX):
    """ build the detached mask the generator step uses from the discriminator taps """
    if source == AttentionSource.FAKE:
        raw = attention_map(fake_features[scale], scale)
    elif source == AttentionSource.REAL:
        raw = attention_map(real_features[scale], scale)
    elif source == AttentionSource.BOTH:
        raw = combine_maps([attention_map(real_features[scale], scale),
                            attention_map(fake_features[scale], scale)])
    else:
        raise ValueError("unknown attention source %r" % source)
    return normalize_and_upsample(raw.detach(), H, W, normalization)


def save_attention_png(a, path, index=0):
    """ 8-bit grayscale dump of one sample of a normalized map """
    weights = a.weights if isinstance(a, AttentionMap) else a
    if weights.dim() == 3:
        weights = weights[index]
    pixels = np.round(weights.detach().clamp(0, 1).cpu().double().numpy() * 255).astype(np.uint8)
    makedirs(os.path.dirname(os.fspath(path)) or '.')
    Image.fromarray(pixels).save(path)
    return path
