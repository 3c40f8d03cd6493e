from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd

from diffseg.enums import COMMON_TYPES
from diffseg.utils.utils import write_json

METRICS = COMMON_TYPES["METRICS"]


# ---------------------------------------------

@dataclass
class ConfusionCounts:
    """Per-class pixel counts; index 0 is always background."""
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray
    class_names: List[str]

    def __post_init__(self):
        for name in ('tp', 'fp', 'fn', 'tn'):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.shape != (len(self.class_names),):
                raise ValueError("%s must have one entry per class" % name)
            if (arr < 0).any():
                raise ValueError("%s counts must be non-negative" % name)
            setattr(self, name, arr)
        self.class_names = list(self.class_names)

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def pixels(self):
        return self.tp + self.fp + self.fn + self.tn

    @property
    def foreground(self):
        """ class indices that enter mean aggregates """
        return list(range(1, self.num_classes))

    def __add__(self, other):
        if self.class_names != other.class_names:
            raise ValueError("cannot pool counts over different class sets")
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn, self.class_names)


# ---------------------------------------------

@dataclass
class MetricsReport:
    """Percent-valued Dice / IoU / precision / recall per foreground class.

    ``std`` and ``mean_std`` are filled when the report aggregates folds
    (population standard deviation across folds).
    """
    per_class: pd.DataFrame
    std: Optional[pd.DataFrame] = None
    mean_std: Optional[pd.Series] = None
    folds: int = 1

    @property
    def mean(self):
        return self.per_class[METRICS].mean(axis=0)

    @property
    def dice(self):
        return float(self.mean['dice'])

    @property
    def miou(self):
        return float(self.mean['iou'])

    # ---------------------------------------
    def to_dict(self):
        data = {
            'folds': int(self.folds),
            'per_class': {str(k): {m: float(v) for m, v in row.items()}
                          for k, row in self.per_class[METRICS].to_dict(orient='index').items()},
            'mean': {m: float(v) for m, v in self.mean.items()},
        }
        if self.std is not None:
            data['std'] = {str(k): {m: float(v) for m, v in row.items()}
                           for k, row in self.std[METRICS].to_dict(orient='index').items()}
        if self.mean_std is not None:
            data['mean_std'] = {m: float(v) for m, v in self.mean_std.items()}
        return data

    @classmethod
    def from_dict(cls, data):
        per_class = pd.DataFrame.from_dict(data['per_class'], orient='index')[METRICS]
        std = pd.DataFrame.from_dict(data['std'], orient='index')[METRICS] if 'std' in data else None
        mean_std = pd.Series(data['mean_std'])[METRICS] if 'mean_std' in data else None
        return cls(per_class=per_class, std=std, mean_std=mean_std, folds=int(data.get('folds', 1)))

    # ---------------------------------------
    def to_frame(self, fold=None):
        """ one flat row per (fold, class), plus the class mean """
        rows = self.per_class[METRICS].copy()
        rows.loc['mean'] = self.mean
        if self.std is not None:
            std = self.std[METRICS].copy()
            std.loc['mean'] = self.mean_std if self.mean_std is not None else np.nan
            rows = rows.join(std.add_suffix('_std'))
        rows.index.name = 'class'
        rows = rows.reset_index()
        rows.insert(0, 'fold', 'all' if fold is None else fold)
        return rows

    def to_json(self, path):
        return write_json(path, self.to_dict())

    def to_csv(self, path, fold=None):
        self.to_frame(fold=fold).to_csv(path, index=False)
        return path
