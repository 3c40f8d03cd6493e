import os

import pytest
import torch

from diffseg.data import generate_synthetic
from diffseg.models import GeneratorConfig, DiscriminatorConfig, TrainConfig, SyntheticSpec


def pytest_collection_modifyitems(config, items):
    if os.getenv('DIFFSEG_RUN_SLOW') == '1':
        return
    skip = pytest.mark.skip(reason="slow experiment, set DIFFSEG_RUN_SLOW=1")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


# ---------------------------------------------
# 8x8 toy configs, small enough for float64 finite differences

TOY_GEN = GeneratorConfig(input_resolution=8, label_channels=1, image_channels=1, base_channels=8,
                          channel_multipliers=(1, 2), blocks_per_scale=1, time_embed_dim=16,
                          latent_dim=4, condition_channels=4, zero_init_output=False)

TOY_DISC = DiscriminatorConfig.mirror(TOY_GEN)

TOY_TRAIN = TrainConfig(timesteps=2, attn_scale=4, batch_size=2, max_steps=4,
                        checkpoint_interval=0, log_interval=0)

TOY_SYNTH = SyntheticSpec(resolution=8, min_objects=1, max_objects=2, radius_range=(0.2, 0.35))


@pytest.fixture
def toy_gen_config():
    return TOY_GEN


@pytest.fixture
def toy_disc_config():
    return TOY_DISC


@pytest.fixture
def toy_train_config():
    return TOY_TRAIN


@pytest.fixture
def toy_dataset():
    return generate_synthetic(TOY_SYNTH, 4)


@pytest.fixture
def toy_batch(toy_dataset):
    """ (images, labels in diffusion space), float32 """
    images = torch.stack([s.image for s in toy_dataset])
    labels = torch.stack([s.label for s in toy_dataset]) * 2 - 1
    return images, labels
