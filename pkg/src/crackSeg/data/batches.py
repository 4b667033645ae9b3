import math
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from crackSeg.data.dataset import Sample
from crackSeg.data.transforms import augment, resize_crop
from crackSeg.models.configs import AugmentSpec
from crackSeg.tensor.tensor import Tensor

Batch = Tuple[Tensor, Tensor]


def batches_per_epoch(n_samples: int, batch_size: int) -> int:
    return math.ceil(n_samples / batch_size)


def make_batches(
    samples: Sequence[Sample],
    batch_size: int,
    size: int,
    mode: str = "eval",
    spec: Optional[AugmentSpec] = None,
    rng: Optional[np.random.Generator] = None,
    dtype: str = "float32",
) -> Iterator[Batch]:
    """
    One epoch of (images N x 3 x S x S, masks N x 1 x S x S) batches.

    Train mode shuffles with `rng` and applies a random crop plus `spec` augmentation to every
    sample; eval mode keeps the input order and center-crops. The last batch may be short.

    Args:
        samples (Sequence[Sample]): Decoded pairs.
        batch_size (int): Samples per batch, at least 1.
        size (int): Output side S.
        mode (str): "train" or "eval".
        spec (AugmentSpec, optional): Augmentation settings for train mode.
        rng (np.random.Generator, optional): Required in train mode.
        dtype (str): Dtype of the emitted tensors.

    Yields:
        Batch: Image and mask tensors.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    train = mode == "train"
    if train and rng is None:
        raise ValueError("make_batches needs an rng in train mode")
    order = rng.permutation(len(samples)) if train else np.arange(len(samples))

    for start in range(0, len(samples), batch_size):
        images, masks = [], []
        for index in order[start : start + batch_size]:
            sample = resize_crop(samples[index], size, mode="train" if train else "eval", rng=rng)
            if train and spec is not None:
                sample = augment(sample, spec, rng)
            images.append(sample.image)
            masks.append(sample.mask)
        yield Tensor(np.stack(images), dtype=dtype), Tensor(np.stack(masks), dtype=dtype)
