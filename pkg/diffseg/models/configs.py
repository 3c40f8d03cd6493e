from dataclasses import dataclass, asdict
from typing import Optional, Tuple

from diffseg.enums import AttentionNorm, AttentionSource, AttentionScales, ShapeFamily
from diffseg.exceptions import ConfigurationError


def _check(condition, message, key):
    if not condition:
        raise ConfigurationError(message, key=key)


# ---------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture of the conditional x0-predicting U-Net.

    Default sizing targets 64x64 training; 256x256 data uses
    ``channel_multipliers=(1, 2, 4, 8)``.
    """
    input_resolution: int = 64
    label_channels: int = 1
    image_channels: int = 1
    base_channels: int = 64
    channel_multipliers: Tuple[int, ...] = (1, 2, 4)
    blocks_per_scale: int = 2
    time_embed_dim: int = 128
    latent_dim: int = 100
    condition_channels: int = 32
    use_latent: bool = True
    zero_init_output: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'channel_multipliers', tuple(int(m) for m in self.channel_multipliers))
        _check(len(self.channel_multipliers) >= 1, "at least one channel multiplier is required",
               'model.channel_multipliers')
        levels = 2 ** (len(self.channel_multipliers) - 1)
        _check(self.input_resolution >= 1 and self.input_resolution % levels == 0,
               "resolution %d is not divisible by %d" % (self.input_resolution, levels), 'data.resolution')
        _check(self.latent_dim >= 1, "latent_dim must be >= 1", 'model.latent_dim')
        _check(self.label_channels >= 1, "label_channels must be >= 1", 'data.class_count')
        _check(self.image_channels >= 1, "image_channels must be >= 1", 'data.image_channels')
        _check(self.base_channels >= 1, "base_channels must be >= 1", 'model.base_channels')
        _check(self.blocks_per_scale >= 1, "blocks_per_scale must be >= 1", 'model.blocks_per_scale')
        _check(self.condition_channels >= 1, "condition_channels must be >= 1", 'model.condition_channels')
        _check(self.time_embed_dim >= 2 and self.time_embed_dim % 2 == 0,
               "time_embed_dim must be a positive even number", 'model.time_embed_dim')

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------

@dataclass(frozen=True)
class DiscriminatorConfig:
    """Time-conditioned residual encoder; one feature tap per resolution level.

    ``per_step`` > 0 builds that many independent discriminators, one per
    diffusion step; 0 shares a single network across steps.
    """
    input_resolution: int = 64
    label_channels: int = 1
    base_channels: int = 64
    channel_multipliers: Tuple[int, ...] = (1, 2, 4)
    blocks_per_scale: int = 1
    time_embed_dim: int = 128
    scales: Optional[Tuple[int, ...]] = None
    per_step: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'channel_multipliers', tuple(int(m) for m in self.channel_multipliers))
        levels = 2 ** (len(self.channel_multipliers) - 1)
        _check(self.input_resolution % levels == 0,
               "resolution %d is not divisible by %d" % (self.input_resolution, levels), 'data.resolution')
        _check(self.blocks_per_scale >= 1, "blocks_per_scale must be >= 1", 'model.blocks_per_scale')
        _check(self.time_embed_dim >= 2 and self.time_embed_dim % 2 == 0,
               "time_embed_dim must be a positive even number", 'model.time_embed_dim')
        _check(self.per_step >= 0, "per_step must be >= 0", 'model.disc_per_step')
        produced = tuple(self.input_resolution // 2 ** i for i in range(len(self.channel_multipliers)))
        scales = produced if self.scales is None else tuple(int(s) for s in self.scales)
        for s in scales:
            _check(s in produced and self.input_resolution % s == 0,
                   "tap scale %d is not produced (available: %s)" % (s, list(produced)), 'model.disc_scales')
        object.__setattr__(self, 'scales', scales)

    @classmethod
    def mirror(cls, generator, base_channels=None):
        """ discriminator shaped like the generator's encoder """
        return cls(input_resolution=generator.input_resolution,
                   label_channels=generator.label_channels,
                   base_channels=base_channels or generator.base_channels,
                   channel_multipliers=generator.channel_multipliers,
                   blocks_per_scale=generator.blocks_per_scale,
                   time_embed_dim=generator.time_embed_dim)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    timesteps: int = 4
    beta_min: float = 0.1
    beta_max: float = 20.0
    attn_scale: int = AttentionScales.SCALE_32
    use_latent: bool = True
    use_attention: bool = True
    attn_source: str = AttentionSource.FAKE
    attn_norm: str = AttentionNorm.MINMAX
    fresh_noise: bool = False
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    adam_betas: Tuple[float, float] = (0.5, 0.9)
    grad_clip: float = 1.0
    batch_size: int = 8
    max_steps: int = 5000
    seed: int = 0
    checkpoint_interval: int = 1000
    log_interval: int = 50
    attn_debug_dir: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'adam_betas', tuple(float(b) for b in self.adam_betas))
        _check(self.timesteps >= 1, "timesteps must be >= 1", 'diffusion.timesteps')
        _check(int(self.attn_scale) >= 1, "invalid attention scale %s" % self.attn_scale, 'train.attn_scale')
        _check(self.attn_source in AttentionSource.tuple(),
               "attn_source must be one of %s" % (AttentionSource.tuple(),), 'train.attn_source')
        _check(self.attn_norm in AttentionNorm.tuple(),
               "attn_norm must be one of %s" % (AttentionNorm.tuple(),), 'train.attn_norm')
        _check(self.lr_g > 0, "learning rate must be > 0", 'train.lr_g')
        _check(self.lr_d > 0, "learning rate must be > 0", 'train.lr_d')
        _check(self.batch_size >= 1, "batch_size must be >= 1", 'train.batch_size')
        _check(self.max_steps >= 0, "max_steps must be >= 0", 'train.max_steps')
        _check(self.grad_clip > 0, "grad_clip must be > 0", 'train.grad_clip')
        _check(self.checkpoint_interval >= 0, "checkpoint_interval must be >= 0", 'train.checkpoint_interval')

    def validate_against(self, disc_config):
        """ the attention tap must exist in the discriminator """
        if self.use_attention:
            _check(self.attn_scale in disc_config.scales,
                   "attention scale %d is not a discriminator tap (available: %s)"
                   % (self.attn_scale, list(disc_config.scales)), 'train.attn_scale')

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------

@dataclass(frozen=True)
class InferenceConfig:
    timesteps: int = 4
    n_instances: int = 5
    threshold: float = 0.5
    seed: int = 0
    stochastic: bool = False

    def __post_init__(self):
        _check(self.timesteps >= 1, "timesteps must be >= 1", 'diffusion.timesteps')
        _check(self.n_instances >= 1, "n_instances must be >= 1", 'infer.instances')
        _check(0.0 < self.threshold < 1.0, "threshold must lie in (0, 1)", 'infer.threshold')

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Scene recipe for the synthetic shapes dataset.

    :Parameters:

        radius_range : tuple
            Object semi-axis range as a fraction of the resolution
        contrast : float
            Foreground intensity offset over the background (diffusion units)
        class_count : int
            1 for binary labels, 2 to split every object into two adjacent classes
    """
    resolution: int = 64
    min_objects: int = 1
    max_objects: int = 4
    shape_family: str = ShapeFamily.ELLIPSE
    radius_range: Tuple[float, float] = (0.08, 0.22)
    contrast: float = 0.6
    noise_level: float = 0.1
    class_count: int = 1
    image_channels: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'radius_range', tuple(float(r) for r in self.radius_range))
        _check(self.resolution >= 4, "resolution must be >= 4", 'data.resolution')
        _check(0 <= self.min_objects <= self.max_objects, "need 0 <= min_objects <= max_objects",
               'synth.min_objects')
        _check(self.shape_family in ShapeFamily.tuple(),
               "shape_family must be one of %s" % (ShapeFamily.tuple(),), 'synth.shape')
        _check(0 < self.radius_range[0] <= self.radius_range[1], "invalid radius range", 'synth.radius_range')
        _check(self.class_count in (1, 2), "class_count must be 1 or 2", 'data.class_count')
        _check(self.noise_level >= 0, "noise_level must be >= 0", 'synth.noise')
        _check(self.image_channels in (1, 3), "image_channels must be 1 or 3", 'data.image_channels')

    @property
    def label_channels(self):
        return 1 if self.class_count == 1 else self.class_count + 1

    def to_dict(self):
        return asdict(self)


def label_channels_for(class_count):
    """ 1 channel for binary labels, one-hot with background otherwise """
    return 1 if int(class_count) <= 1 else int(class_count) + 1


__all__ = ['GeneratorConfig', 'DiscriminatorConfig', 'TrainConfig', 'InferenceConfig',
           'SyntheticSpec', 'label_channels_for']
