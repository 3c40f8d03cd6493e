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
"""Datasets: synthetic scenes, ``images/`` + ``masks/`` PNG folders and fold splits.

Images live in [-1, 1]; labels rest in probability space (binary ``[1, H, W]``
or one-hot ``[class_count + 1, H, W]`` with background in channel 0).
"""
import glob
import logging
import os

import numpy as np
import torch
from PIL import Image

from diffseg.enums import COMMON_TYPES, ShapeFamily, ValueSpace
from diffseg.exceptions import ConfigurationError, DataError
from diffseg.models import Sample, SyntheticSpec, LabelMap
from diffseg.utils.asynctools import multitasking
from diffseg.utils.utils import create_logger, makedirs

# =============================================
# Configure logging
create_logger(__name__, level=os.getenv('LOGLEVEL') or logging.INFO)

__pool__ = __name__


# =============================================
# value spaces
# =============================================

def normalize_image(pixels):
    """ uint8 ``[H, W]`` or ``[H, W, C]`` -> float32 ``[C, H, W]`` in [-1, 1] """
    arr = np.asarray(pixels, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1) / 127.5 - 1.0))


def denormalize_image(image):
    """ ``[C, H, W]`` in [-1, 1] -> uint8 ``[H, W]`` (gray) or ``[H, W, C]`` """
    arr = image.detach().cpu().double().numpy() if torch.is_tensor(image) else np.asarray(image, np.float64)
    arr = np.clip(np.round((arr + 1.0) * 127.5), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    return arr[:, :, 0] if arr.shape[2] == 1 else arr


def to_diffusion_space(label):
    """ probability [0, 1] -> diffusion [-1, 1] """
    if isinstance(label, LabelMap):
        return LabelMap(label.values * 2 - 1, ValueSpace.DIFFUSION)
    return label * 2 - 1


def to_probability_space(label):
    """ diffusion [-1, 1] -> probability [0, 1] """
    if isinstance(label, LabelMap):
        return LabelMap((label.values + 1) / 2, ValueSpace.PROBABILITY)
    return (label + 1) / 2


def one_hot(index_map, class_count):
    """ integer ``[H, W]`` -> float32 label tensor (1 channel when binary) """
    index_map = np.asarray(index_map, dtype=np.int64)
    if class_count <= 1:
        return torch.from_numpy((index_map > 0).astype(np.float32)[None])
    eye = np.eye(class_count + 1, dtype=np.float32)
    return torch.from_numpy(np.ascontiguousarray(eye[index_map].transpose(2, 0, 1)))


def label_to_index(label):
    """ hard label tensor ``[K, H, W]`` -> integer ``[H, W]`` """
    values = label.values if isinstance(label, LabelMap) else label
    values = values.detach().cpu() if torch.is_tensor(values) else torch.as_tensor(values)
    if values.shape[0] == 1:
        return (values[0] >= 0.5).numpy().astype(np.int64)
    return values.argmax(dim=0).numpy().astype(np.int64)


# =============================================
# synthetic scenes
# =============================================

def _texture(rng, yy, xx, waves=4):
    texture = np.zeros_like(yy)
    for _ in range(waves):
        fy, fx = rng.uniform(0.5, 4.0, 2)
        texture += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * (fy * yy + fx * xx) + rng.uniform(0, 2 * np.pi))
    return texture / waves


def _object(spec, rng, yy, xx):
    """ :Return: (inside mask, position along the major axis) for one rotated ellipse/blob """
    cy, cx = rng.uniform(0.0, 1.0, 2)
    ry, rx = rng.uniform(spec.radius_range[0], spec.radius_range[1], 2)
    theta = rng.uniform(0, np.pi)

    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    radius = np.sqrt((u / rx) ** 2 + (v / ry) ** 2)

    boundary = 1.0
    if spec.shape_family == ShapeFamily.BLOB:
        phi = np.arctan2(v / ry, u / rx)
        boundary = np.ones_like(phi)
        for m in (2, 3, 4):
            boundary += rng.uniform(0.0, 0.15) * np.cos(m * phi + rng.uniform(0, 2 * np.pi))

    return radius <= boundary, u


def _synthetic_sample(spec: SyntheticSpec, rng, identifier):
    res = spec.resolution
    yy, xx = np.mgrid[0:res, 0:res].astype(np.float64)
    yy, xx = (yy + 0.5) / res, (xx + 0.5) / res

    index_map = np.zeros((res, res), dtype=np.int64)
    for _ in range(int(rng.integers(spec.min_objects, spec.max_objects + 1))):
        inside, along = _object(spec, rng, yy, xx)
        if spec.class_count == 2:
            index_map[inside & (along < 0)] = 1
            index_map[inside & (along >= 0)] = 2
        else:
            index_map[inside] = 1

    intensity = np.where(index_map == 2, 0.75 * spec.contrast, np.where(index_map == 1, spec.contrast, 0.0))
    gray = -0.5 + 0.15 * _texture(rng, yy, xx) + intensity
    channels = [gray] if spec.image_channels == 1 else [gray * g for g in (1.0, 0.85, 0.7)]
    image = np.stack([c + spec.noise_level * rng.standard_normal((res, res)) for c in channels])

    return Sample(image=torch.from_numpy(np.clip(image, -1, 1).astype(np.float32)),
                  label=one_hot(index_map, spec.class_count),
                  identifier=identifier)


def generate_synthetic(spec: SyntheticSpec, n):
    """ ``n`` scenes; sample ``i`` depends only on ``(spec, i)`` """
    if int(n) < 1:
        raise ConfigurationError("sample count must be >= 1 (got %s)" % n, key='synth.count')
    return [_synthetic_sample(spec, np.random.default_rng([spec.seed, i]), "synth_%04d" % i)
            for i in range(int(n))]


# =============================================
# PNG folders
# =============================================

def _stems(folder):
    return {os.path.splitext(os.path.basename(p))[0]: p for p in glob.glob(os.path.join(folder, "*.png"))}


def read_image(path, resolution, image_channels=1):
    with Image.open(path) as img:
        img = img.convert("L" if image_channels == 1 else "RGB")
        if img.size != (resolution, resolution):
            img = img.resize((resolution, resolution), Image.Resampling.BILINEAR)
        return normalize_image(np.array(img))


def read_mask(path, resolution, class_count=1):
    """ :Return: integer ``[H, W]`` class index map """
    with Image.open(path) as img:
        if img.mode not in ("1", "L", "P", "RGB", "RGBA"):
            raise DataError("%s: unsupported mask mode %s" % (path, img.mode), rejected=[path])
        if img.size != (resolution, resolution):
            img = img.resize((resolution, resolution), Image.Resampling.NEAREST)

        if img.mode in ("RGB", "RGBA"):
            arr = np.array(img)[:, :, :3]
            if not ((arr[:, :, 0] == arr[:, :, 1]) & (arr[:, :, 1] == arr[:, :, 2])).all():
                raise DataError("%s: colour mask, expected grayscale or palette indices" % path, rejected=[path])
            arr = arr[:, :, 0]
        elif img.mode == "1":
            arr = np.array(img.convert("L"))
        else:
            arr = np.array(img)

    arr = arr.astype(np.int64)
    values = set(np.unique(arr).tolist())

    if class_count <= 1:
        if values <= {0, 1}:
            return arr
        return (arr >= COMMON_TYPES["BINARY_MASK_THRESHOLD"]).astype(np.int64)

    if not values <= set(range(class_count + 1)):
        raise DataError("%s: mask values %s outside 0..%d" % (path, sorted(values), class_count), rejected=[path])
    return arr


def load_folder(root, resolution=64, class_count=1, image_channels=1, threads=0, strict=False):
    """Pair ``root/images/*.png`` with ``root/masks/*.png`` by stem.

    Unmatched, unreadable or invalid files are listed in a warning and
    skipped (``strict=True`` raises DataError instead). Samples come back
    sorted by identifier.
    """
    if root is None or not os.path.isdir(root):
        raise ConfigurationError("dataset folder not found: %s" % root, key='data.root')

    log = logging.getLogger(__name__)
    images = _stems(os.path.join(root, COMMON_TYPES["IMAGES_DIR"]))
    masks = _stems(os.path.join(root, COMMON_TYPES["MASKS_DIR"]))
    if not images and not masks:
        log.warning("no PNG files under %s", root)
        return []

    rejected = ["%s: no matching mask" % s for s in sorted(set(images) - set(masks))]
    rejected += ["%s: no matching image" % s for s in sorted(set(masks) - set(images))]

    results = {}

    def _load_pair(stem):
        try:
            image = read_image(images[stem], resolution, image_channels)
            label = one_hot(read_mask(masks[stem], resolution, class_count), class_count)
            results[stem] = Sample(image=image, label=label, identifier=stem)
        except DataError as e:
            results[stem] = "%s: %s" % (stem, e)
        except Exception as e:
            results[stem] = "%s: unreadable (%s)" % (stem, e)

    multitasking.createPool(__pool__, threads)
    load = multitasking.task(_load_pair, pool=__pool__)
    for stem in sorted(set(images) & set(masks)):
        load(stem)
    multitasking.wait_for_tasks(__pool__)

    samples = []
    for stem in sorted(results):
        if isinstance(results[stem], Sample):
            samples.append(results[stem])
        else:
            rejected.append(results[stem])

    if rejected:
        if strict:
            raise DataError("%d file(s) rejected under %s" % (len(rejected), root), rejected=rejected)
        log.warning("rejected %d file(s) under %s:\n  %s", len(rejected), root, "\n  ".join(rejected))

    log.info("loaded %d samples from %s", len(samples), root)
    return samples


def load_images(folder, resolution=64, image_channels=1):
    """ unlabeled images for prediction, as ``(stem, image)`` sorted by stem """
    if folder is None or not os.path.isdir(folder):
        raise ConfigurationError("image folder not found: %s" % folder, key='infer.images')
    stems = _stems(folder)
    if not stems:
        logging.getLogger(__name__).warning("no PNG files under %s", folder)
    return [(stem, read_image(stems[stem], resolution, image_channels)) for stem in sorted(stems)]


# ---------------------------------------------

def write_mask_png(path, index_map, class_count=1):
    """ 8-bit 0/255 for binary masks, paletted class indices otherwise """
    index_map = np.asarray(index_map, dtype=np.uint8)
    if class_count <= 1:
        img = Image.fromarray((index_map > 0).astype(np.uint8) * 255)
    else:
        h, w = index_map.shape
        img = Image.frombytes("P", (w, h), np.ascontiguousarray(index_map).tobytes())
        palette = list(COMMON_TYPES["PALETTE"])
        img.putpalette(palette + [0] * (768 - len(palette)))
    img.save(path)
    return path


def write_probability_png(path, probability):
    """ 16-bit grayscale, 65535 = 1.0 """
    prob = probability.detach().cpu().double().numpy() if torch.is_tensor(probability) else np.asarray(probability)
    Image.fromarray(np.round(np.clip(prob, 0, 1) * 65535).astype(np.uint16)).save(path)
    return path


def export_folder(samples, root):
    """ write samples in the ``images/`` + ``masks/`` layout :func:`load_folder` reads """
    images_dir = makedirs(os.path.join(root, COMMON_TYPES["IMAGES_DIR"]))
    masks_dir = makedirs(os.path.join(root, COMMON_TYPES["MASKS_DIR"]))
    for s in samples:
        Image.fromarray(denormalize_image(s.image)).save(os.path.join(images_dir, s.identifier + ".png"))
        write_mask_png(os.path.join(masks_dir, s.identifier + ".png"), label_to_index(s.label), s.class_count)
    logging.getLogger(__name__).info("exported %d samples to %s", len(samples), root)
    return root


# =============================================
# folds
# =============================================

def fold_sizes(n, k):
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


def kfold_split(samples, k, fold, seed=0):
    """ :Return: (train, val) for ``fold`` of a seeded ``k``-fold partition """
    n = len(samples)
    if int(k) < 2:
        raise ConfigurationError("k must be >= 2 (got %s)" % k, key='data.k_folds')
    if not 0 <= int(fold) < int(k):
        raise ConfigurationError("fold %s is not in [0, %d)" % (fold, k), key='data.fold')
    if n < k:
        raise ConfigurationError("%d samples cannot be split into %d folds" % (n, k), key='data.k_folds')

    order = np.random.default_rng(seed).permutation(n)
    sizes = fold_sizes(n, int(k))
    start = sum(sizes[:fold])
    val_idx = order[start:start + sizes[fold]]
    val_set = set(val_idx.tolist())

    train = [samples[i] for i in range(n) if i not in val_set]
    val = [samples[i] for i in sorted(val_set)]
    return train, val


__all__ = ['normalize_image', 'denormalize_image', 'to_diffusion_space', 'to_probability_space',
           'one_hot', 'label_to_index', 'generate_synthetic', 'load_folder', 'load_images',
           'read_image', 'read_mask', 'write_mask_png', 'write_probability_png', 'export_folder',
           'fold_sizes', 'kfold_split']
