"""Image/mask pairs on disk, train/test splits and manifests."""
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from crackSeg.config import config
from crackSeg.errors import ConfigError, DimensionError, ImageFormatError, IngestionError
from crackSeg.utils import file_handler


@dataclass
class Sample:
    """
    One training or evaluation pair.

    Attributes:
        name (str): Filename stem shared by image and mask.
        image (np.ndarray): 3 x H x W float32 in [0, 1].
        mask (np.ndarray): 1 x H x W float32 in {0, 1}.
    """

    name: str
    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.image.ndim != 3 or self.mask.ndim != 3 or self.mask.shape[0] != 1:
            raise DimensionError(f"Sample {self.name}: expected C x H x W image and 1 x H x W mask")
        if self.image.shape[1:] != self.mask.shape[1:]:
            raise DimensionError(
                f"Sample {self.name}: image {self.image.shape[1:]} and mask {self.mask.shape[1:]} differ in size"
            )

    @property
    def size(self) -> Tuple[int, int]:
        return self.image.shape[1], self.image.shape[2]


@dataclass(frozen=True)
class IndexEntry:
    name: str
    image_path: str
    mask_path: str


@dataclass
class DatasetIndex:
    """Image/mask paths paired by stem, sorted by name."""

    entries: List[IndexEntry] = field(default_factory=list)
    root: Optional[str] = None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[IndexEntry]:
        return iter(self.entries)

    def names(self) -> List[str]:
        return [entry.name for entry in self.entries]

    def select(self, names: Sequence[str]) -> "DatasetIndex":
        """Sub-index of `names`, kept in name order; unknown names raise IngestionError."""
        by_name = {entry.name: entry for entry in self.entries}
        unknown = [name for name in names if name not in by_name]
        if unknown:
            message = f"Manifest names not found in {self.root}: {', '.join(unknown)}"
            config.logger.error(message)
            raise IngestionError(message)
        return DatasetIndex(sorted((by_name[name] for name in names), key=lambda e: e.name), self.root)

    def load(self) -> List[Sample]:
        return [load_sample(entry) for entry in self.entries]


def load_sample(entry: IndexEntry) -> Sample:
    """Decode one pair: RGB scaled to [0, 1], mask pixels above 127 become 1."""
    image = file_handler.read_png(entry.image_path)
    mask = file_handler.read_png(entry.mask_path, grayscale=True)
    return Sample(
        name=entry.name,
        image=np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32) / np.float32(255.0),
        mask=(mask > config.MASK_THRESHOLD).astype(np.float32)[None],
    )


def _png_stems(directory: str) -> dict:
    stems = {}
    for filename in sorted(os.listdir(directory)):
        path = os.path.join(directory, filename)
        if not os.path.isfile(path) or filename.startswith("."):
            continue
        stem, extension = os.path.splitext(filename)
        if extension.lower() != ".png":
            message = f"{path} is not a PNG file."
            config.logger.error(message)
            raise ImageFormatError(message)
        stems[stem] = path
    return stems


def load_dataset(root: str) -> DatasetIndex:
    """
    Index `<root>/images/*.png` against `<root>/masks/*.png` by filename stem.

    Args:
        root (str): Dataset directory.

    Returns:
        DatasetIndex: Pairs sorted by name; empty (with a warning) when there are no images.

    Raises:
        IngestionError: A subdirectory is missing or some image/mask has no partner.
        ImageFormatError: A non-PNG file is present.
    """
    image_dir = os.path.join(root, config.IMAGES_DIR_NAME)
    mask_dir = os.path.join(root, config.MASKS_DIR_NAME)
    for directory in (image_dir, mask_dir):
        if not os.path.isdir(directory):
            message = f"Dataset directory {directory} is missing."
            config.logger.error(message)
            raise IngestionError(message)

    images = _png_stems(image_dir)
    masks = _png_stems(mask_dir)
    orphans = sorted(set(images) ^ set(masks))
    if orphans:
        details = [f"{stem} ({'no mask' if stem in images else 'no image'})" for stem in orphans]
        message = f"Unpaired files in {root}: {', '.join(details)}"
        config.logger.error(message)
        raise IngestionError(message)

    if not images:
        config.logger.warning(f"Dataset {root} is empty.")
    entries = [IndexEntry(stem, images[stem], masks[stem]) for stem in sorted(images)]
    config.logger.info(f"Indexed {len(entries)} image/mask pairs in {root}")
    return DatasetIndex(entries, root)


def split(
    index: DatasetIndex, train_ratio: float = config.TRAIN_RATIO, seed: int = 0
) -> Tuple[DatasetIndex, DatasetIndex]:
    """
    Seeded random partition with ceil(train_ratio * n) training entries (71 / 47 for n = 118 at 0.6,
    72 / 46 at 0.61).

    Args:
        index (DatasetIndex): Entries to split.
        train_ratio (float): Fraction in (0, 1).
        seed (int): Shuffle seed.

    Returns:
        Tuple[DatasetIndex, DatasetIndex]: (train, test), each sorted by name.
    """
    if not 0.0 < train_ratio < 1.0:
        message = f"train_ratio must be in (0, 1), got {train_ratio}"
        config.logger.error(message)
        raise ConfigError(message)
    order = np.random.default_rng(seed).permutation(len(index))
    n_train = math.ceil(train_ratio * len(index))
    names = index.names()
    train = index.select([names[i] for i in order[:n_train]])
    test = index.select([names[i] for i in order[n_train:]])
    return train, test


def write_split(root: str, train: DatasetIndex, test: DatasetIndex) -> Tuple[str, str]:
    train_path = os.path.join(root, config.TRAIN_MANIFEST)
    test_path = os.path.join(root, config.TEST_MANIFEST)
    file_handler.write_manifest(train_path, train.names())
    file_handler.write_manifest(test_path, test.names())
    return train_path, test_path


def has_split(root: str) -> bool:
    return all(os.path.isfile(os.path.join(root, name)) for name in (config.TRAIN_MANIFEST, config.TEST_MANIFEST))


def load_split(root: str) -> Tuple[DatasetIndex, DatasetIndex]:
    """Read `train.txt` / `test.txt` manifests (written by `split` or shipped with the dataset)."""
    index = load_dataset(root)
    train = index.select(file_handler.read_manifest(os.path.join(root, config.TRAIN_MANIFEST)))
    test = index.select(file_handler.read_manifest(os.path.join(root, config.TEST_MANIFEST)))
    overlap = set(train.names()) & set(test.names())
    if overlap:
        message = f"Names in both manifests: {', '.join(sorted(overlap))}"
        config.logger.error(message)
        raise IngestionError(message)
    return train, test


def load_manifest(root: str, manifest: str) -> DatasetIndex:
    """Entries of one manifest file, resolved against the dataset under `root`."""
    return load_dataset(root).select(file_handler.read_manifest(manifest))
