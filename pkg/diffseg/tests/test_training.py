import math
import os
from dataclasses import replace

import numpy as np
import pytest
import torch
import torch.nn as nn

from diffseg.attention import AttentionMap
from diffseg.data import generate_synthetic, to_diffusion_space, label_to_index
from diffseg.diffusion import build_schedule, forward_sample, forward_reparam_prev
from diffseg.exceptions import ConfigurationError, TrainingDivergedError
from diffseg.metrics import evaluate_dataset
from diffseg.models import GeneratorConfig, DiscriminatorConfig, TrainConfig, InferenceConfig, SyntheticSpec
from diffseg.networks import GeneratorState, generator_forward, discriminator_forward
from diffseg.sampler import predict
from diffseg.trainer import Trainer, train
from diffseg.utils.utils import DataStore, read_json


def make_trainer(gen_config, disc_config, train_config, **kwargs):
    return Trainer(gen_config, disc_config, train_config, **kwargs)


def one_batch(toy_batch, seed=0, latent_dim=4):
    images, labels = toy_batch
    g = torch.Generator().manual_seed(seed)
    x0, image = labels[:2], images[:2]
    return x0, image, torch.randn(x0.shape, generator=g), torch.randn(2, latent_dim, generator=g)


class Oracle(nn.Module):
    """ returns a fixed label whatever the input """

    def __init__(self, target):
        super().__init__()
        self.target = target
        self.unused = nn.Parameter(torch.zeros(1))

    def forward(self, x, t, z, image):
        return self.target + 0 * self.unused


class TestDiscriminatorStep:

    def test_generator_frozen(self, toy_gen_config, toy_disc_config, toy_train_config, toy_batch):
        trainer = make_trainer(toy_gen_config, toy_disc_config, toy_train_config)
        x0, image, eps, z = one_batch(toy_batch)
        gen_before = trainer.gen.parameter_vector()
        disc_before = trainer.disc.parameter_vector()

        trainer.discriminator_step(x0, image, 2, eps, z)

        assert torch.equal(trainer.gen.parameter_vector(), gen_before)
        assert not torch.equal(trainer.disc.parameter_vector(), disc_before)
        assert trainer.disc.step == 1 and trainer.gen.step == 0

    def test_untrained_loss_near_chance(self, toy_gen_config, toy_disc_config, toy_train_config, toy_batch):
        trainer = make_trainer(toy_gen_config, toy_disc_config, toy_train_config)
        x0, image, eps, z = one_batch(toy_batch)
        result = trainer.discriminator_step(x0, image, 1, eps, z)
        total = result.real_loss + result.fake_loss
        assert abs(total - 2 * math.log(2)) <= 0.2 * 2 * math.log(2)
        assert 0.0 <= result.accuracy <= 1.0

    def test_features_detached(self, toy_gen_config, toy_disc_config, toy_train_config, toy_batch):
        trainer = make_trainer(toy_gen_config, toy_disc_config, toy_train_config)
        x0, image, eps, z = one_batch(toy_batch)
        result = trainer.discriminator_step(x0, image, 2, eps, z)
        assert set(result.fake_features) == {8, 4}
        assert not any(f.requires_grad for f in result.fake_features.values())


class TestGeneratorStep:

    def test_discriminator_frozen(self, toy_gen_config, toy_disc_config, toy_train_config, toy_batch):
        trainer = make_trainer(toy_gen_config, toy_disc_config, toy_train_config)
        x0, image, eps, z = one_batch(toy_batch)
        gen_before = trainer.gen.parameter_vector()
        disc_before = trainer.disc.parameter_vector()

        loss = trainer.generator_step(x0, image, 1, eps, z)

        assert math.isfinite(loss)
        assert torch.equal(trainer.disc.parameter_vector(), disc_before)
        assert not torch.equal(trainer.gen.parameter_vector(), gen_before)

    def test_perfect_generator(self, toy_gen_config, toy_disc_config, toy_train_config, toy_batch):
        x0, image, eps, z = one_batch(toy_batch)
        gen = GeneratorState(module=Oracle(x0.clone()), config=toy_gen_config)
        trainer = make_trainer(toy_gen_config, toy_disc_config, toy_train_config, gen=gen)
        assert trainer.generator_step(x0, image, 2, eps, z) == 0.0

    def test_no_attention_equals_all_ones(self, toy_gen_config, toy_disc_config, toy_train_config, toy_batch):
        a = make_trainer(toy_gen_config, toy_disc_config, toy_train_config)
        b = make_trainer(toy_gen_config, toy_disc_config, toy_train_config)
        x0, image, eps, z = one_batch(toy_batch)
        ones = AttentionMap(torch.ones(2, 8, 8), 8)

        assert a.generator_step(x0, image, 2, eps, z) == b.generator_step(x0, image, 2, eps, z, attention=ones)
        assert torch.equal(a.gen.parameter_vector(), b.gen.parameter_vector())

    def test_attention_changes_target(self, toy_gen_config, toy_disc_config, toy_train_config, toy_batch):
        a = make_trainer(toy_gen_config, toy_disc_config, toy_train_config)
        b = make_trainer(toy_gen_config, toy_disc_config, toy_train_config)
        x0, image, eps, z = one_batch(toy_batch)
        half = AttentionMap(torch.full((2, 8, 8), 0.5), 8)
        assert a.generator_step(x0, image, 2, eps, z) != b.generator_step(x0, image, 2, eps, z, attention=half)


class TestTrainerStep:

    def test_record(self, toy_gen_config, toy_disc_config, toy_train_config, toy_batch):
        trainer = make_trainer(toy_gen_config, toy_disc_config, toy_train_config)
        record = trainer.step(*toy_batch)
        assert record.step == 1 and 1 <= record.t <= 2
        assert all(math.isfinite(v) for v in (record.generator_loss, record.disc_real_loss, record.disc_fake_loss))
        assert trainer.last_attention.shape == (2, 8, 8)
        assert len(trainer.train_log) == 1

    def test_uniform_timesteps(self, toy_gen_config, toy_disc_config, toy_train_config):
        trainer = make_trainer(toy_gen_config, toy_disc_config, replace(toy_train_config, timesteps=4))
        draws = np.array([trainer._sample_timestep() for _ in range(8000)])
        assert set(draws.tolist()) == {1, 2, 3, 4}
        for t in range(1, 5):
            assert abs((draws == t).mean() - 0.25) < 0.03

    @pytest.mark.parametrize("changes", [
        {'fresh_noise': True},
        {'attn_source': 'real'},
        {'attn_source': 'both', 'attn_norm': 'raw'},
        {'use_attention': False},
    ])
    def test_variants_run(self, toy_gen_config, toy_disc_config, toy_train_config, toy_batch, changes):
        trainer = make_trainer(toy_gen_config, toy_disc_config, replace(toy_train_config, **changes))
        record = trainer.step(*toy_batch)
        assert math.isfinite(record.generator_loss) and math.isfinite(record.disc_fake_loss)

    def test_latent_mismatch(self, toy_gen_config, toy_disc_config, toy_train_config):
        with pytest.raises(ConfigurationError) as e:
            make_trainer(toy_gen_config, toy_disc_config, replace(toy_train_config, use_latent=False))
        assert e.value.key == 'train.use_latent'

    def test_per_step_count_must_match_schedule(self, toy_gen_config, toy_disc_config, toy_train_config):
        with pytest.raises(ConfigurationError) as e:
            make_trainer(toy_gen_config, replace(toy_disc_config, per_step=3), toy_train_config)
        assert e.value.key == 'model.disc_per_step'

    def test_per_step_discriminators_train(self, toy_gen_config, toy_disc_config, toy_train_config, toy_batch):
        trainer = make_trainer(toy_gen_config, replace(toy_disc_config, per_step=2), toy_train_config)
        before = [p.detach().clone() for p in trainer.disc.module.parameters()]
        record = trainer.step(*toy_batch)
        assert math.isfinite(record.disc_real_loss) and math.isfinite(record.generator_loss)
        after = list(trainer.disc.module.parameters())
        changed = [not torch.equal(a, b) for a, b in zip(before, after)]
        assert any(changed) and not all(changed)

    def test_attention_scale_must_be_a_tap(self, toy_gen_config, toy_disc_config, toy_train_config):
        with pytest.raises(ConfigurationError) as e:
            make_trainer(toy_gen_config, toy_disc_config, replace(toy_train_config, attn_scale=16))
        assert e.value.key == 'train.attn_scale'

    def test_divergence_dumps_diagnostics(self, toy_gen_config, toy_disc_config, toy_train_config, tmp_path):
        trainer = make_trainer(toy_gen_config, toy_disc_config, toy_train_config, output=str(tmp_path))
        with pytest.raises(TrainingDivergedError) as e:
            trainer._check_finite(2, generator_loss=float('nan'))
        diagnostics = read_json(e.value.diagnostics)
        assert diagnostics['t'] == 2
        assert 'generator_loss' in diagnostics['losses']
        assert diagnostics['generator_norms']


class TestTrain:

    def test_deterministic(self, toy_gen_config, toy_disc_config, toy_train_config, toy_dataset):
        runs = [make_trainer(toy_gen_config, toy_disc_config, toy_train_config).train(toy_dataset)
                for _ in range(2)]
        (gen_a, disc_a, log_a), (gen_b, disc_b, log_b) = runs
        assert [r.deterministic_fields() for r in log_a] == [r.deterministic_fields() for r in log_b]
        assert torch.equal(gen_a.parameter_vector(), gen_b.parameter_vector())
        assert torch.equal(disc_a.parameter_vector(), disc_b.parameter_vector())
        assert gen_a.step == 4

    def test_without_latent(self, toy_gen_config, toy_disc_config, toy_train_config, toy_dataset):
        config = replace(toy_train_config, use_latent=False, max_steps=2)
        gen, _, log = train(config, toy_dataset, gen_config=toy_gen_config, disc_config=toy_disc_config)
        assert gen.module.latent_mlp is None
        assert len(log) == 2

    def test_disc_taps_survive_config_fill(self, toy_gen_config, toy_train_config, toy_dataset):
        disc_config = replace(DiscriminatorConfig.mirror(toy_gen_config), scales=(4,))
        config = replace(toy_train_config, max_steps=1)
        _, disc, _ = train(config, toy_dataset, gen_config=toy_gen_config, disc_config=disc_config)
        assert disc.config.scales == (4,)

    def test_empty_dataset(self, toy_gen_config, toy_disc_config, toy_train_config):
        with pytest.raises(ConfigurationError):
            make_trainer(toy_gen_config, toy_disc_config, toy_train_config).train([])

    def test_log_stream(self, toy_gen_config, toy_disc_config, toy_train_config, toy_dataset, tmp_path):
        trainer = make_trainer(toy_gen_config, toy_disc_config, toy_train_config, output=str(tmp_path))
        _, _, log = trainer.train(toy_dataset)
        frame = DataStore.load(os.path.join(str(tmp_path), 'train_log.jsonl'))
        assert len(frame) == len(log) == 4
        assert list(frame['step']) == [1, 2, 3, 4]
        assert os.path.exists(os.path.join(str(tmp_path), 'checkpoints', 'step_000004.pt'))

    def test_attention_debug_png(self, toy_gen_config, toy_disc_config, toy_train_config, toy_dataset, tmp_path):
        debug = str(tmp_path / 'attn')
        config = replace(toy_train_config, max_steps=2, attn_debug_dir=debug)
        make_trainer(toy_gen_config, toy_disc_config, config, output=str(tmp_path / 'run')).train(toy_dataset)
        assert os.path.exists(os.path.join(debug, 'step_000002.png'))

    def test_resume_continues_exactly(self, toy_gen_config, toy_disc_config, toy_train_config,
                                      toy_dataset, tmp_path):
        config = replace(toy_train_config, checkpoint_interval=2, max_steps=4)
        full = make_trainer(toy_gen_config, toy_disc_config, config, output=str(tmp_path / 'a'))
        full.train(toy_dataset)

        resumed = Trainer.resume(str(tmp_path / 'a' / 'checkpoints' / 'step_000002'), output=str(tmp_path / 'b'))
        assert resumed.gen.step == 2
        resumed.train(toy_dataset)

        expected = [r.deterministic_fields() for r in full.train_log][2:]
        got = [r.deterministic_fields() for r in resumed.train_log]
        assert [r['t'] for r in got] == [r['t'] for r in expected]
        for a, b in zip(got, expected):
            assert a['generator_loss'] == pytest.approx(b['generator_loss'], rel=1e-5)
        assert torch.allclose(resumed.gen.parameter_vector(), full.gen.parameter_vector(), atol=1e-6)


# =============================================
# experiments
# =============================================

def _dice(gen, schedule, samples, instances=5):
    cfg = InferenceConfig(timesteps=schedule.T, n_instances=instances)
    preds = [label_to_index(predict(s.image, gen, schedule, cfg)[1]) for s in samples]
    return evaluate_dataset(preds, [label_to_index(s.label) for s in samples]).dice


@pytest.mark.slow
class TestExperiments:

    def test_discriminator_learns_against_frozen_generator(self):
        spec = SyntheticSpec(resolution=16, radius_range=(0.15, 0.3))
        samples = generate_synthetic(spec, 80)
        gen_config = GeneratorConfig(input_resolution=16, base_channels=16, channel_multipliers=(1, 2),
                                     time_embed_dim=32, latent_dim=8, condition_channels=8,
                                     zero_init_output=False)
        disc_config = DiscriminatorConfig.mirror(gen_config)
        trainer = Trainer(gen_config, disc_config, TrainConfig(timesteps=2, attn_scale=8, batch_size=8))

        images = torch.stack([s.image for s in samples])
        labels = to_diffusion_space(torch.stack([s.label for s in samples]))
        train_idx, held_out = torch.arange(64), torch.arange(64, 80)
        for _ in range(1000):
            idx = train_idx[torch.randint(64, (8,), generator=trainer.rng)]
            x0 = labels[idx]
            t = trainer._sample_timestep()
            trainer.discriminator_step(x0, images[idx], t, trainer._randn(*x0.shape), trainer._randn(8, 8))

        correct = total = 0
        with torch.no_grad():
            for t in (1, 2):
                x0, image = labels[held_out], images[held_out]
                eps = torch.randn(x0.shape, generator=torch.Generator().manual_seed(t))
                x_t = forward_sample(x0, t, eps, trainer.schedule)
                x0_hat = generator_forward(x_t, t, torch.zeros(16, 8), image, trainer.gen)
                real, _ = discriminator_forward(x_t, forward_reparam_prev(x0, t, eps, trainer.schedule), t, trainer.disc)
                fake, _ = discriminator_forward(x_t, forward_reparam_prev(x0_hat, t, eps, trainer.schedule), t,
                                                trainer.disc)
                correct += int((real > 0).sum()) + int((fake < 0).sum())
                total += 32
        assert correct / total > 0.8

    def test_generator_loss_decreases_on_one_sample(self):
        sample = generate_synthetic(SyntheticSpec(resolution=16), 1)
        gen_config = GeneratorConfig(input_resolution=16, base_channels=16, channel_multipliers=(1, 2),
                                     time_embed_dim=32, latent_dim=8, condition_channels=8)
        config = TrainConfig(timesteps=2, attn_scale=8, batch_size=4, max_steps=500, log_interval=0)
        _, _, log = train(config, sample, gen_config=gen_config)
        losses = log.recorded['generator_loss']
        assert losses.iloc[-50:].mean() < losses.iloc[:50].mean()

    def test_overfits_sixteen_samples(self):
        samples = generate_synthetic(SyntheticSpec(resolution=64), 16)
        config = TrainConfig(timesteps=2, max_steps=5000, checkpoint_interval=0)
        gen, _, _ = train(config, samples)
        trainer_schedule = build_schedule(config.timesteps, config.beta_min, config.beta_max)
        assert _dice(gen.eval(), trainer_schedule, samples) >= 90.0


