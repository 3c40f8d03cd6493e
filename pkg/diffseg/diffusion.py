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
"""Closed-form arithmetic of the few-step label diffusion.

The variance schedule is the discretized VP-SDE

    beta_t = 1 - exp(-beta_min / T - (beta_max - beta_min) (2t - 1) / (2 T^2))

so that ``alpha_bars[T] = exp(-(beta_min + beta_max) / 2)`` whatever ``T``.
Every operation here is a pure function. Label tensors may be torch tensors
or numpy arrays; ``t`` may be an int or a 1-D integer tensor (one step per
sample).
"""
import logging
import os
from dataclasses import dataclass

import numpy as np
import torch

from diffseg.exceptions import ConfigurationError, ShapeError
from diffseg.utils.utils import create_logger

# =============================================
# Configure logging
create_logger(__name__, level=os.getenv('LOGLEVEL') or logging.INFO)

BETA_MIN = 0.1
BETA_MAX = 20.0


# =============================================

@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed per-step quantities, float64, indexed by ``t`` directly.

    Arrays have length ``T + 1``; entry 0 holds the ``t = 0`` convention
    (``beta = 0``, ``alpha = alpha_bar = 1``, no posterior).

    :Parameters:

        T : int
            number of diffusion steps
        betas, alphas, alpha_bars : np.ndarray
            beta_t, 1 - beta_t and their cumulative product
        posterior_vars : np.ndarray
            variance of q(x_{t-1} | x_t, x_0); zero at t = 1
        posterior_coef_xt, posterior_coef_x0 : np.ndarray
            weights of x_t and x_0 in the posterior mean
    """
    T: int
    beta_min: float
    beta_max: float
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    posterior_vars: np.ndarray
    posterior_coef_xt: np.ndarray
    posterior_coef_x0: np.ndarray

    def to_dict(self):
        return {'T': int(self.T), 'beta_min': float(self.beta_min), 'beta_max': float(self.beta_max)}

    def check_step(self, t, low=1):
        """ raise IndexError unless every step in ``t`` lies in [low, T] """
        if torch.is_tensor(t):
            lo, hi = int(t.min()), int(t.max())
        else:
            lo = hi = int(t)
        if lo < low or hi > self.T:
            raise IndexError("time step %s out of range [%d, %d]" % (
                (lo if lo < low else hi), low, self.T))


# ---------------------------------------------

def build_schedule(T, beta_min=BETA_MIN, beta_max=BETA_MAX):
    """ :Return: the NoiseSchedule for ``T`` steps between ``beta_min`` and ``beta_max`` """
    try:
        T = int(T)
        beta_min = float(beta_min)
        beta_max = float(beta_max)
    except (TypeError, ValueError):
        raise ConfigurationError("schedule parameters must be numeric", key='diffusion.timesteps')

    if T < 1:
        raise ConfigurationError("T must be >= 1 (got %d)" % T, key='diffusion.timesteps')
    if not beta_min > 0:
        raise ConfigurationError("beta_min must be > 0 (got %s)" % beta_min, key='diffusion.beta_min')
    if not beta_max >= beta_min:
        raise ConfigurationError("beta_max must be >= beta_min (got %s < %s)" % (beta_max, beta_min),
                                 key='diffusion.beta_max')

    t = np.arange(1, T + 1, dtype=np.float64)
    exponent = beta_min / T + 0.5 * (beta_max - beta_min) * (2.0 * t - 1.0) / T ** 2

    betas = np.zeros(T + 1, dtype=np.float64)
    alphas = np.ones(T + 1, dtype=np.float64)
    betas[1:] = -np.expm1(-exponent)
    alphas[1:] = np.exp(-exponent)
    alpha_bars = np.cumprod(alphas)

    posterior_vars = np.zeros(T + 1, dtype=np.float64)
    coef_xt = np.zeros(T + 1, dtype=np.float64)
    coef_x0 = np.ones(T + 1, dtype=np.float64)
    prev = alpha_bars[:-1]
    cur = alpha_bars[1:]
    posterior_vars[1:] = (1.0 - prev) / (1.0 - cur) * betas[1:]
    coef_xt[1:] = np.sqrt(alphas[1:]) * (1.0 - prev) / (1.0 - cur)
    coef_x0[1:] = np.sqrt(prev) * betas[1:] / (1.0 - cur)

    # alpha_bar_0 = 1 collapses the final step onto the x0 prediction
    posterior_vars[1] = 0.0
    coef_xt[1] = 0.0
    coef_x0[1] = 1.0

    arrays = [betas, alphas, alpha_bars, posterior_vars, coef_xt, coef_x0]
    for a in arrays:
        a.setflags(write=False)

    return NoiseSchedule(T, beta_min, beta_max, *arrays)


# ---------------------------------------------

def _coef(values, t, like):
    """ schedule entry for step ``t`` shaped to broadcast against ``like`` """
    if torch.is_tensor(t) and t.dim() > 0:
        c = torch.tensor(np.array(values), dtype=torch.float64, device=t.device)[t.long()]
        c = c.to(like.dtype if torch.is_tensor(like) else torch.float64)
        return c.view(-1, *([1] * (like.dim() - 1)))
    return float(values[int(t)])


def _same_shape(a, b, what):
    if tuple(a.shape) != tuple(b.shape):
        raise ShapeError("%s: shapes %s and %s differ" % (what, tuple(a.shape), tuple(b.shape)))


# ---------------------------------------------

def forward_sample(x0, t, eps, s):
    """q(x_t | x_0): ``sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps``.

    ``t = 0`` is accepted and returns ``x0``.
    """
    s.check_step(t, low=0)
    _same_shape(x0, eps, "forward_sample")
    return _coef(np.sqrt(s.alpha_bars), t, x0) * x0 + _coef(np.sqrt(1.0 - s.alpha_bars), t, x0) * eps


def forward_step(x_prev, t, eps, s):
    """ one Markov kernel q(x_t | x_{t-1}) """
    s.check_step(t)
    _same_shape(x_prev, eps, "forward_step")
    return _coef(np.sqrt(s.alphas), t, x_prev) * x_prev + _coef(np.sqrt(s.betas), t, x_prev) * eps


def forward_reparam_prev(x0, t, eps, s):
    """ x_{t-1} from the same reparameterization, with step 0 the identity """
    s.check_step(t)
    return forward_sample(x0, t - 1, eps, s)


def posterior_step(x_t, x0_hat, t, s, noise=None):
    """Posterior mean of q(x_{t-1} | x_t, x0_hat).

    With ``noise`` given, ``sqrt(posterior_var_t) * noise`` is added; the
    variance is zero at ``t = 1`` so the last step always returns ``x0_hat``.
    """
    s.check_step(t)
    _same_shape(x_t, x0_hat, "posterior_step")
    out = _coef(s.posterior_coef_xt, t, x_t) * x_t + _coef(s.posterior_coef_x0, t, x_t) * x0_hat
    if noise is not None:
        _same_shape(x_t, noise, "posterior_step")
        out = out + _coef(np.sqrt(s.posterior_vars), t, x_t) * noise
    return out
