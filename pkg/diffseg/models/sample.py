from dataclasses import dataclass

import torch

from diffseg.enums import ValueSpace
from diffseg.exceptions import ShapeError


# ---------------------------------------------

@dataclass
class LabelMap:
    """ dense label grid [..., K, H, W] tagged with the value space it lives in """
    values: torch.Tensor
    value_space: str = ValueSpace.DIFFUSION

    def __post_init__(self):
        if self.value_space not in ValueSpace.tuple():
            raise ValueError("unknown value space %r" % self.value_space)

    @property
    def shape(self):
        return tuple(self.values.shape)

    def is_valid(self, atol=1e-6):
        """ probability maps lie in [0, 1] and multi-channel maps sum to 1 per pixel """
        if self.value_space != ValueSpace.PROBABILITY:
            return bool(torch.isfinite(self.values).all())
        v = self.values
        ok = bool(((v >= -atol) & (v <= 1 + atol)).all())
        if v.shape[-3] > 1:
            ok = ok and bool(torch.allclose(v.sum(dim=-3), torch.ones_like(v[..., 0, :, :]), atol=1e-4))
        return ok


# ---------------------------------------------

@dataclass
class Sample:
    """An image/label pair.

    :Parameters:

        image : torch.Tensor
            [C, H, W] image normalized to [-1, 1]
        label : torch.Tensor
            [K, H, W] label in probability space (binary K=1, one-hot K=classes+1)
        identifier : str
            stem of the source file or synthetic index
    """
    image: torch.Tensor
    label: torch.Tensor
    identifier: str

    def __post_init__(self):
        if self.image.dim() != 3 or self.label.dim() != 3:
            raise ShapeError("%s: image and label must be [C, H, W]" % self.identifier)
        if self.image.shape[-2:] != self.label.shape[-2:]:
            raise ShapeError("%s: image %s and label %s spatial sizes differ"
                             % (self.identifier, tuple(self.image.shape), tuple(self.label.shape)))

    @property
    def resolution(self):
        return int(self.image.shape[-1])

    @property
    def class_count(self):
        k = int(self.label.shape[0])
        return 1 if k == 1 else k - 1
