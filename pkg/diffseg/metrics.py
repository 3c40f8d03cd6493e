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
"""Dice / IoU / precision / recall from exact pixel counts.

All values are percentages. Background (class 0) never enters the means.
When a class is absent from both masks (``TP + FP + FN = 0``) every metric
of that class is 100; any other zero denominator gives 0.
"""
import functools
import logging
import operator
import os

import numpy as np
import pandas as pd
import torch

from diffseg.enums import COMMON_TYPES, class_names
from diffseg.exceptions import ShapeError
from diffseg.models import ConfusionCounts, MetricsReport, LabelMap
from diffseg.utils.utils import create_logger

# =============================================
# Configure logging
create_logger(__name__, level=os.getenv('LOGLEVEL') or logging.INFO)

METRICS = COMMON_TYPES["METRICS"]


# ---------------------------------------------

def _as_array(x):
    if isinstance(x, LabelMap):
        x = x.values
    if torch.is_tensor(x):
        x = x.detach().cpu().numpy()
    return np.asarray(x)


def _to_index(x, num_classes=None):
    """ hard label (``[1, H, W]`` binary, ``[K, H, W]`` one-hot or integer ``[H, W]``) -> (index map, classes) """
    arr = _as_array(x)
    if arr.ndim == 3:
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("label is not hard: values outside {0, 1}")
        if arr.shape[0] == 1:
            return arr[0].astype(np.int64), 2
        if not (arr.sum(axis=0) == 1).all():
            raise ValueError("label is not one-hot: channels do not sum to 1")
        return arr.argmax(axis=0).astype(np.int64), arr.shape[0]

    if arr.ndim == 2:
        if not np.array_equal(arr, np.round(arr)) or (arr < 0).any():
            raise ValueError("index map must hold non-negative integers")
        arr = arr.astype(np.int64)
        classes = int(num_classes) if num_classes else max(2, int(arr.max()) + 1)
        if arr.max(initial=0) >= classes:
            raise ValueError("index %d out of range for %d classes" % (arr.max(), classes))
        return arr, classes

    raise ShapeError("expected [K, H, W] or [H, W] labels, got %s" % (arr.shape,))


def confusion(pred, gt, num_classes=None):
    """ :Return: ConfusionCounts with one entry per class (background first) """
    pred_arr, gt_arr = _as_array(pred), _as_array(gt)
    if pred_arr.shape != gt_arr.shape:
        raise ShapeError("prediction %s and ground truth %s differ" % (pred_arr.shape, gt_arr.shape))

    p, pc = _to_index(pred_arr, num_classes)
    g, gc = _to_index(gt_arr, num_classes)
    c = int(num_classes) if num_classes else max(pc, gc)

    cm = np.bincount(g.ravel() * c + p.ravel(), minlength=c * c).reshape(c, c)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    tn = cm.sum() - tp - fp - fn

    return ConfusionCounts(tp, fp, fn, tn, class_names(c - 1))


# ---------------------------------------------

def _ratio(num, den, empty):
    return np.where(empty, 100.0, np.where(den > 0, 100.0 * num / np.where(den > 0, den, 1), 0.0))


def compute_metrics(counts: ConfusionCounts):
    """ per-foreground-class percentages """
    tp, fp, fn = (counts.tp.astype(np.float64), counts.fp.astype(np.float64), counts.fn.astype(np.float64))
    empty = (tp + fp + fn) == 0

    table = pd.DataFrame({
        'dice': _ratio(2 * tp, 2 * tp + fp + fn, empty),
        'iou': _ratio(tp, tp + fp + fn, empty),
        'precision': _ratio(tp, tp + fp, empty),
        'recall': _ratio(tp, tp + fn, empty),
    }, index=counts.class_names)

    per_class = table.iloc[counts.foreground][METRICS].copy()
    per_class.index.name = 'class'
    return MetricsReport(per_class=per_class)


# ---------------------------------------------

def aggregate_folds(reports):
    """ fold mean and population standard deviation, per class and for the class mean """
    if not reports:
        raise ValueError("no reports to aggregate")

    stacked = pd.concat([r.per_class[METRICS] for r in reports], keys=range(len(reports)))
    grouped = stacked.groupby(level=1, sort=False)
    means = pd.DataFrame([r.mean for r in reports])

    per_class = grouped.mean()
    per_class.index.name = 'class'
    return MetricsReport(per_class=per_class,
                         std=grouped.std(ddof=0).fillna(0.0),
                         mean_std=means.std(ddof=0).fillna(0.0),
                         folds=len(reports))


def evaluate_dataset(preds, gts, pooled=False, num_classes=None):
    """Dataset report from paired hard masks.

    Per-image metrics averaged over images by default; ``pooled=True``
    sums the counts over the dataset first.
    """
    if len(preds) != len(gts):
        raise ShapeError("%d predictions for %d ground-truth masks" % (len(preds), len(gts)))
    if not preds:
        raise ValueError("nothing to evaluate")

    counts = [confusion(p, g, num_classes) for p, g in zip(preds, gts)]
    if pooled:
        return compute_metrics(functools.reduce(operator.add, counts))

    frames = pd.concat([compute_metrics(c).per_class for c in counts], keys=range(len(counts)))
    per_class = frames.groupby(level=1, sort=False).mean()
    per_class.index.name = 'class'
    return MetricsReport(per_class=per_class)
