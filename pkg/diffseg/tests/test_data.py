import logging
import os

import numpy as np
import numpy.testing as npt
import pytest
import torch
from PIL import Image

from diffseg.data import (normalize_image, denormalize_image, to_diffusion_space, to_probability_space,
                          one_hot, label_to_index, generate_synthetic, load_folder, load_images,
                          read_mask, write_mask_png, export_folder, fold_sizes, kfold_split)
from diffseg.enums import ValueSpace
from diffseg.exceptions import ConfigurationError, DataError
from diffseg.models import SyntheticSpec, LabelMap


def write_png(path, array):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)


class TestValueSpaces:

    def test_image_round_trip(self):
        pixels = np.random.default_rng(0).integers(0, 256, (8, 8)).astype(np.uint8)
        image = normalize_image(pixels)
        assert image.shape == (1, 8, 8)
        assert float(image.min()) >= -1 and float(image.max()) <= 1
        npt.assert_array_equal(denormalize_image(image), pixels)

    def test_rgb_round_trip(self):
        pixels = np.random.default_rng(1).integers(0, 256, (4, 4, 3)).astype(np.uint8)
        npt.assert_array_equal(denormalize_image(normalize_image(pixels)), pixels)

    def test_label_spaces_are_inverse(self):
        label = torch.tensor([[[0., 1.], [1., 0.]]])
        diffusion = to_diffusion_space(label)
        assert set(diffusion.unique().tolist()) == {-1.0, 1.0}
        assert torch.equal(to_probability_space(diffusion), label)

        m = to_diffusion_space(LabelMap(label, ValueSpace.PROBABILITY))
        assert m.value_space == ValueSpace.DIFFUSION

    def test_one_hot(self):
        idx = np.array([[0, 1], [2, 0]])
        hot = one_hot(idx, 2)
        assert hot.shape == (3, 2, 2)
        assert bool((hot.sum(dim=0) == 1).all())
        npt.assert_array_equal(label_to_index(hot), idx)
        npt.assert_array_equal(one_hot(idx > 0, 1)[0].numpy(), (idx > 0).astype(np.float32))


class TestSynthetic:

    def test_deterministic(self):
        spec = SyntheticSpec(resolution=16, seed=3)
        a, b = generate_synthetic(spec, 3), generate_synthetic(spec, 3)
        for x, y in zip(a, b):
            assert torch.equal(x.image, y.image) and torch.equal(x.label, y.label)
            assert x.identifier == y.identifier
        assert [s.identifier for s in a] == ['synth_0000', 'synth_0001', 'synth_0002']

    def test_prefix_stable(self):
        spec = SyntheticSpec(resolution=16)
        assert torch.equal(generate_synthetic(spec, 2)[1].image, generate_synthetic(spec, 5)[1].image)

    def test_shapes_and_ranges(self):
        s = generate_synthetic(SyntheticSpec(resolution=16, image_channels=3), 1)[0]
        assert s.image.shape == (3, 16, 16) and s.label.shape == (1, 16, 16)
        assert float(s.image.min()) >= -1 and float(s.image.max()) <= 1
        assert set(s.label.unique().tolist()) <= {0.0, 1.0}

    def test_no_objects(self):
        s = generate_synthetic(SyntheticSpec(resolution=16, min_objects=0, max_objects=0), 1)[0]
        assert float(s.label.sum()) == 0

    def test_foreground_fraction(self):
        samples = generate_synthetic(SyntheticSpec(), 100)
        fraction = float(torch.stack([s.label for s in samples]).mean())
        assert 0.05 <= fraction <= 0.60

    def test_two_classes(self):
        samples = generate_synthetic(SyntheticSpec(resolution=32, class_count=2), 5)
        assert samples[0].label.shape == (3, 32, 32)
        assert samples[0].class_count == 2
        labels = torch.stack([s.label for s in samples])
        assert bool((labels.sum(dim=1) == 1).all())
        assert float(labels[:, 1].sum()) > 0 and float(labels[:, 2].sum()) > 0

    def test_blob_family(self):
        s = generate_synthetic(SyntheticSpec(resolution=16, shape_family='blob'), 1)[0]
        assert s.label.shape == (1, 16, 16)

    def test_invalid_count(self):
        with pytest.raises(ConfigurationError):
            generate_synthetic(SyntheticSpec(), 0)


class TestLoadFolder:

    def test_empty_folder(self, tmp_path, caplog):
        logger = logging.getLogger('diffseg.data')
        logger.propagate = True
        try:
            with caplog.at_level(logging.WARNING, logger='diffseg.data'):
                assert load_folder(str(tmp_path)) == []
        finally:
            logger.propagate = False
        assert 'no PNG files' in caplog.text

    def test_missing_folder(self, tmp_path):
        with pytest.raises(ConfigurationError) as e:
            load_folder(str(tmp_path / 'absent'))
        assert e.value.key == 'data.root'

    def test_one_pair_binarized(self, tmp_path):
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[2:6, 3:5] = 255
        write_png(str(tmp_path / 'images' / 'case1.png'), np.full((8, 8), 128))
        write_png(str(tmp_path / 'masks' / 'case1.png'), mask)

        samples = load_folder(str(tmp_path), resolution=8)
        assert [s.identifier for s in samples] == ['case1']
        npt.assert_array_equal(samples[0].label[0].numpy(), (mask == 255).astype(np.float32))

    def test_unmatched_files_skipped(self, tmp_path):
        write_png(str(tmp_path / 'images' / 'a.png'), np.zeros((8, 8)))
        write_png(str(tmp_path / 'masks' / 'a.png'), np.zeros((8, 8)))
        write_png(str(tmp_path / 'images' / 'b.png'), np.zeros((8, 8)))
        assert [s.identifier for s in load_folder(str(tmp_path), resolution=8)] == ['a']
        with pytest.raises(DataError) as e:
            load_folder(str(tmp_path), resolution=8, strict=True)
        assert any('b' in r for r in e.value.rejected)

    def test_sorted_with_threads(self, tmp_path):
        export_folder(generate_synthetic(SyntheticSpec(resolution=8), 6), str(tmp_path))
        samples = load_folder(str(tmp_path), resolution=8, threads=3)
        assert [s.identifier for s in samples] == ['synth_%04d' % i for i in range(6)]

    def test_resized(self, tmp_path):
        write_png(str(tmp_path / 'images' / 'a.png'), np.zeros((16, 16)))
        write_png(str(tmp_path / 'masks' / 'a.png'), np.full((16, 16), 255))
        s = load_folder(str(tmp_path), resolution=8)[0]
        assert s.image.shape == (1, 8, 8) and bool((s.label == 1).all())

    def test_export_round_trip(self, tmp_path):
        samples = generate_synthetic(SyntheticSpec(resolution=16, class_count=2), 3)
        export_folder(samples, str(tmp_path))
        loaded = load_folder(str(tmp_path), resolution=16, class_count=2)
        for a, b in zip(samples, loaded):
            assert torch.equal(a.label, b.label)
            assert float((a.image - b.image).abs().max()) <= 1 / 127.5 + 1e-6

    def test_load_images(self, tmp_path):
        write_png(str(tmp_path / 'b.png'), np.zeros((8, 8)))
        write_png(str(tmp_path / 'a.png'), np.zeros((8, 8)))
        assert [stem for stem, _ in load_images(str(tmp_path), resolution=8)] == ['a', 'b']
        with pytest.raises(ConfigurationError):
            load_images(str(tmp_path / 'absent'))


class TestReadMask:

    def test_small_binary_values_kept(self, tmp_path):
        path = str(tmp_path / 'm.png')
        write_png(path, np.eye(4))
        npt.assert_array_equal(read_mask(path, 4), np.eye(4))

    def test_multiclass_out_of_range(self, tmp_path):
        path = str(tmp_path / 'm.png')
        write_png(path, np.full((4, 4), 7))
        with pytest.raises(DataError):
            read_mask(path, 4, class_count=2)

    def test_colour_rejected(self, tmp_path):
        path = str(tmp_path / 'm.png')
        rgb = np.zeros((4, 4, 3), dtype=np.uint8)
        rgb[0, 0] = (255, 0, 0)
        Image.fromarray(rgb).save(path)
        with pytest.raises(DataError):
            read_mask(path, 4)

    def test_palette_masks(self, tmp_path):
        idx = np.array([[0, 1], [2, 1]])
        path = write_mask_png(str(tmp_path / 'm.png'), idx, class_count=2)
        with Image.open(path) as img:
            assert img.mode == 'P'
        npt.assert_array_equal(read_mask(path, 2, class_count=2), idx)


class TestKFold:

    def test_even_split(self):
        train, val = kfold_split(list(range(4)), 2, 0)
        assert len(val) == 2 and len(train) == 2
        assert not set(train) & set(val)

    def test_folds_partition(self):
        items = list(range(10))
        vals = [kfold_split(items, 3, f, seed=5)[1] for f in range(3)]
        assert sorted(len(v) for v in vals) == [3, 3, 4]
        assert [len(v) for v in vals] == [4, 3, 3]
        assert sorted(x for v in vals for x in v) == items

    def test_sizes(self):
        assert fold_sizes(10, 3) == [4, 3, 3]
        assert fold_sizes(4, 2) == [2, 2]

    def test_stable(self):
        items = list(range(12))
        assert kfold_split(items, 4, 1, seed=2) == kfold_split(items, 4, 1, seed=2)
        assert [kfold_split(items, 4, f, seed=2)[1] for f in range(4)] != \
            [kfold_split(items, 4, f, seed=3)[1] for f in range(4)]

    @pytest.mark.parametrize("k, fold, key", [(1, 0, 'data.k_folds'), (3, 3, 'data.fold'), (20, 0, 'data.k_folds')])
    def test_invalid(self, k, fold, key):
        with pytest.raises(ConfigurationError) as e:
            kfold_split(list(range(10)), k, fold)
        assert e.value.key == key
