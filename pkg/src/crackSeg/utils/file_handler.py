import json
import os
from typing import Iterable, List

import cv2
import numpy as np

from crackSeg.config import config
from crackSeg.errors import ImageFormatError, IngestionError


def read_png(filename: str, grayscale: bool = False) -> np.ndarray:
    """
    Reads an 8-bit PNG.

    Args:
        filename (str): Path to the PNG file.
        grayscale (bool): Read a single channel instead of RGB.

    Returns:
        np.ndarray: H x W (grayscale) or H x W x 3 RGB uint8 array.
    """
    if not filename.lower().endswith(".png"):
        message = f"{filename} is not a PNG file."
        config.logger.error(message)
        raise ImageFormatError(message)
    flag = cv2.IMREAD_GRAYSCALE if grayscale else cv2.IMREAD_COLOR
    image = cv2.imread(filename, flag)
    if image is None:
        message = f"The {filename} could not be decoded as an image."
        config.logger.error(message)
        raise ImageFormatError(message)
    if image.dtype != np.uint8:
        message = f"The {filename} is not 8-bit ({image.dtype})."
        config.logger.error(message)
        raise ImageFormatError(message)
    return image if grayscale else cv2.cvtColor(image, cv2.COLOR_BGR2RGB)


def write_png(filename: str, image: np.ndarray) -> None:
    """
    Writes an H x W or H x W x 3 RGB uint8 array as PNG.

    Args:
        filename (str): Destination path; parent directories are created.
        image (np.ndarray): Pixel data.
    """
    os.makedirs(os.path.dirname(os.path.abspath(filename)), exist_ok=True)
    data = np.ascontiguousarray(image, dtype=np.uint8)
    if data.ndim == 3:
        data = cv2.cvtColor(data, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(filename, data):
        message = f"The {filename} could not be written."
        config.logger.error(message)
        raise OSError(message)


def read_manifest(filename: str) -> List[str]:
    """Names listed one per line; blank lines are ignored."""
    try:
        with open(filename, "r") as stream:
            return [line.strip() for line in stream if line.strip()]
    except OSError as e:
        config.logger.error(f"The {filename} could not be read.")
        raise IngestionError(f"Cannot read manifest {filename}: {e}") from e


def write_manifest(filename: str, names: Iterable[str]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(filename)), exist_ok=True)
    with open(filename, "w") as stream:
        for name in names:
            stream.write(f"{name}\n")


def write_json(filename: str, data: dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(filename)), exist_ok=True)
    with open(filename, "w") as stream:
        json.dump(data, stream, indent=2)
        stream.write("\n")


def append_json_line(filename: str, data: dict) -> None:
    """Append one JSON object as a line (JSON-lines log)."""
    os.makedirs(os.path.dirname(os.path.abspath(filename)), exist_ok=True)
    with open(filename, "a") as stream:
        stream.write(json.dumps(data) + "\n")
