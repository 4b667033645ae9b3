"""Generated crack images with exact masks: textured background plus thin dark polylines."""
import os
from typing import List

import cv2
import numpy as np

from crackSeg.config import config
from crackSeg.data.dataset import Sample
from crackSeg.utils import file_handler


def synthetic_sample(name: str, size: int, rng: np.random.Generator) -> Sample:
    """
    One image with 1-3 random polylines of width 1-3 px drawn over blurred noise.

    The mask is exactly the set of drawn pixels and the crack pixels are the only dark ones.
    """
    noise = rng.normal(0.0, 1.0, size=(size, size)).astype(np.float32)
    texture = cv2.GaussianBlur(noise, (0, 0), sigmaX=2.0)
    texture /= max(float(np.abs(texture).max()), 1e-6)
    tint = rng.uniform(-0.05, 0.05, size=3).astype(np.float32)
    background = 0.65 + 0.12 * texture[None] + tint[:, None, None]

    mask = np.zeros((size, size), dtype=np.uint8)
    for _ in range(int(rng.integers(1, 4))):
        n_points = int(rng.integers(3, 7))
        points = rng.integers(0, size, size=(n_points, 2)).astype(np.int32)
        thickness = int(rng.integers(1, 4))
        cv2.polylines(mask, [points.reshape(-1, 1, 2)], isClosed=False, color=1, thickness=thickness)

    crack_level = rng.uniform(0.08, 0.2)
    image = np.where(mask[None] > 0, np.float32(crack_level), background)
    return Sample(
        name=name,
        image=np.clip(image, 0.0, 1.0).astype(np.float32),
        mask=mask.astype(np.float32)[None],
    )


def generate_synthetic(count: int = 8, size: int = 64, seed: int = 0) -> List[Sample]:
    rng = np.random.default_rng(seed)
    return [synthetic_sample(f"synthetic_{index:03d}", size, rng) for index in range(count)]


def write_synthetic_dataset(out_dir: str, count: int = 8, size: int = 64, seed: int = 0) -> List[str]:
    """
    Write a generated dataset in the `images/` + `masks/` PNG layout.

    Args:
        out_dir (str): Dataset root to create.
        count (int): Number of pairs.
        size (int): Side length in pixels.
        seed (int): Generator seed.

    Returns:
        List[str]: Names of the written pairs.
    """
    names = []
    for sample in generate_synthetic(count, size, seed):
        image = np.rint(sample.image.transpose(1, 2, 0) * 255.0).astype(np.uint8)
        mask = (sample.mask[0] * 255).astype(np.uint8)
        file_handler.write_png(os.path.join(out_dir, config.IMAGES_DIR_NAME, f"{sample.name}.png"), image)
        file_handler.write_png(os.path.join(out_dir, config.MASKS_DIR_NAME, f"{sample.name}.png"), mask)
        names.append(sample.name)
    config.logger.info(f"Wrote {len(names)} synthetic pairs to {out_dir}")
    return names
