"""
Mask-consistent geometry (resize, crop, rotate, flip) and image-only lighting.

Images are 3 x H x W float32, masks 1 x H x W float32; OpenCV works on H x W x C views.
Positive rotation angles turn the picture clockwise.
"""
from typing import Optional

import cv2
import numpy as np

from crackSeg.config import config
from crackSeg.data.dataset import Sample
from crackSeg.errors import DimensionError
from crackSeg.models.configs import AugmentSpec


def _to_hwc(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image.transpose(1, 2, 0))


def _to_chw(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        image = image[:, :, None]
    return np.ascontiguousarray(image.transpose(2, 0, 1))


def _rebinarize(mask: np.ndarray) -> np.ndarray:
    return (mask > 0.5).astype(np.float32)


def resize_crop(sample: Sample, target: int, mode: str = "eval", rng: Optional[np.random.Generator] = None) -> Sample:
    """
    Bilinear-resize the shorter side to `target`, then crop a target x target window.

    Args:
        sample (Sample): Source pair.
        target (int): Output side, a multiple of 32.
        mode (str): "train" crops at a random offset drawn from `rng`, "eval" crops the center.
        rng (np.random.Generator, optional): Required in train mode.

    Returns:
        Sample: Resized and cropped pair; the mask is re-binarized at 0.5.
    """
    h, w = sample.size
    if h < 1 or w < 1:
        raise DimensionError(f"Sample {sample.name} has degenerate size {h}x{w}")
    if target <= 0 or target % config.SIZE_MULTIPLE:
        raise DimensionError(f"Crop size {target} must be a positive multiple of {config.SIZE_MULTIPLE}")

    image, mask = sample.image, sample.mask
    shorter = min(h, w)
    if shorter != target:
        scale = target / shorter
        new_h = target if h == shorter else max(target, int(round(h * scale)))
        new_w = target if w == shorter else max(target, int(round(w * scale)))
        image = _to_chw(cv2.resize(_to_hwc(image), (new_w, new_h), interpolation=cv2.INTER_LINEAR))
        mask = _rebinarize(_to_chw(cv2.resize(_to_hwc(mask), (new_w, new_h), interpolation=cv2.INTER_LINEAR)))
        h, w = new_h, new_w

    if mode == "train":
        if rng is None:
            raise ValueError("resize_crop needs an rng in train mode")
        top = int(rng.integers(0, h - target + 1))
        left = int(rng.integers(0, w - target + 1))
    else:
        top, left = (h - target) // 2, (w - target) // 2

    return Sample(
        name=sample.name,
        image=np.clip(image[:, top : top + target, left : left + target], 0.0, 1.0).astype(np.float32),
        mask=_rebinarize(mask[:, top : top + target, left : left + target]),
    )


def rotate(image: np.ndarray, mask: np.ndarray, angle: float):
    """
    Rotate a C x H x W image and its mask clockwise by `angle` degrees about the center.

    Multiples of 90 degrees are exact index permutations. Other angles resample the image
    bilinearly and the mask by nearest neighbour, filling the corners with a reflect-101
    border.
    """
    angle = float(angle) % 360.0
    if angle % 90.0 == 0.0:
        quarter_turns = int(angle // 90.0)
        return (
            np.ascontiguousarray(np.rot90(image, k=-quarter_turns, axes=(1, 2))),
            np.ascontiguousarray(np.rot90(mask, k=-quarter_turns, axes=(1, 2))),
        )
    h, w = image.shape[1:]
    matrix = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), -angle, 1.0)
    rotated_image = cv2.warpAffine(
        _to_hwc(image), matrix, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101
    )
    rotated_mask = cv2.warpAffine(
        _to_hwc(mask), matrix, (w, h), flags=cv2.INTER_NEAREST, borderMode=cv2.BORDER_REFLECT_101
    )
    return _to_chw(rotated_image), _rebinarize(_to_chw(rotated_mask))


def adjust_lighting(image: np.ndarray, brightness: float, contrast: float) -> np.ndarray:
    """pixel <- (pixel - 0.5) * (1 + contrast) + 0.5 + brightness, clamped to [0, 1]."""
    adjusted = (image - 0.5) * (1.0 + contrast) + 0.5 + brightness
    return np.clip(adjusted, 0.0, 1.0).astype(image.dtype)


def augment(sample: Sample, spec: AugmentSpec, rng: np.random.Generator) -> Sample:
    """
    Random rotation, independent horizontal / vertical flips, then lighting on the image only.

    Every call draws the same five random numbers (angle, two flips, brightness, contrast),
    so the stream stays aligned whatever the outcome.

    Args:
        sample (Sample): Pair to augment.
        spec (AugmentSpec): Ranges and probabilities.
        rng (np.random.Generator): Source of randomness.

    Returns:
        Sample: Augmented pair with a binary mask.
    """
    angle = rng.uniform(spec.rotation_min, spec.rotation_max)
    hflip = rng.random() < spec.hflip_prob
    vflip = rng.random() < spec.vflip_prob
    brightness = rng.uniform(-spec.lighting_delta, spec.lighting_delta)
    contrast = rng.uniform(-spec.lighting_delta, spec.lighting_delta)

    image, mask = rotate(sample.image, sample.mask, angle)
    if hflip:
        image, mask = image[:, :, ::-1], mask[:, :, ::-1]
    if vflip:
        image, mask = image[:, ::-1, :], mask[:, ::-1, :]
    if spec.lighting_delta > 0.0:
        image = adjust_lighting(image, brightness, contrast)

    return Sample(name=sample.name, image=np.ascontiguousarray(image), mask=np.ascontiguousarray(mask))
