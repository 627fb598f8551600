"""
Desk-scale image datasets.

Synthetic oriented-bar and colour-blob tasks, plus a loader for small
``class/*.png`` image folders.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from seqkit.errors import EmptySequenceError, FormatError, ShapeError
from seqkit.logger import get_logger
from seqkit.tensor import Array

logger = get_logger()

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm")

# Class colours for the blob task
_PALETTE = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 1.0],
        [1.0, 0.0, 1.0],
    ]
)


@dataclass
class Dataset:
    """Images ``[N, H, W, C]`` with integer labels ``[N]``."""

    images: Array
    labels: Array
    num_classes: int
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise ShapeError(f"Dataset images must be [N, H, W, C], got {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ShapeError(
                f"{self.labels.shape[0]} labels for {self.images.shape[0]} images"
            )

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def resolution(self) -> tuple[int, int]:
        return int(self.images.shape[1]), int(self.images.shape[2])

    def batches(
        self, batch_size: int, rng: np.random.Generator | None = None
    ) -> Iterator[tuple[Array, Array]]:
        """Mini-batches in order, or shuffled when ``rng`` is given."""
        if len(self) == 0:
            raise EmptySequenceError("Dataset is empty")
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            idx = order[start : start + batch_size]
            yield self.images[idx], self.labels[idx]

    def split(self, fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
        """Random ``(first, rest)`` split with ``fraction`` of samples in the first part."""
        order = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(fraction * len(self)))
        a, b = order[:cut], order[cut:]
        return (
            Dataset(self.images[a], self.labels[a], self.num_classes, self.class_names),
            Dataset(self.images[b], self.labels[b], self.num_classes, self.class_names),
        )


def _balanced_labels(n: int, num_classes: int, rng: np.random.Generator) -> Array:
    return rng.permutation(np.arange(n) % num_classes).astype(np.int64)


def make_bar_dataset(
    n: int = 200,
    size: int = 28,
    num_classes: int = 2,
    seed: int = 0,
    noise: float = 0.05,
    jitter: bool = False,
    channels: int = 3,
    dtype: np.dtype | type = np.float64,
) -> Dataset:
    """
    Oriented bars on a dark background.

    Classes are horizontal, vertical, diagonal and anti-diagonal bars (the
    first ``num_classes`` of them). Bars are two pixels thick through the
    image centre; with ``jitter`` their offset varies by up to a quarter of
    the image. Bar intensity is drawn from U(0.8, 1.2) and Gaussian pixel
    noise with std ``noise`` is added.
    """
    if not 2 <= num_classes <= 4:
        raise ValueError("make_bar_dataset supports 2 to 4 classes")
    if n < 1:
        raise EmptySequenceError("make_bar_dataset needs n >= 1")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, num_classes, rng)
    images = np.zeros((n, size, size, channels))
    rows, cols = np.mgrid[0:size, 0:size]
    center = size // 2
    max_shift = size // 4
    for i, label in enumerate(labels):
        shift = int(rng.integers(-max_shift, max_shift + 1)) if jitter else 0
        c = center + shift
        if label == 0:
            mask = (rows >= c - 1) & (rows <= c)
        elif label == 1:
            mask = (cols >= c - 1) & (cols <= c)
        elif label == 2:
            mask = np.abs(rows - cols - shift) <= 1
        else:
            mask = np.abs(rows + cols - (size - 1) - shift) <= 1
        images[i][mask] = rng.uniform(0.8, 1.2)
    images += rng.normal(0.0, noise, size=images.shape)
    names = ["horizontal", "vertical", "diagonal", "antidiagonal"][:num_classes]
    return Dataset(images.astype(dtype), labels, num_classes, names)


def make_blob_dataset(
    n: int = 200,
    size: int = 28,
    num_classes: int = 3,
    seed: int = 0,
    noise: float = 0.05,
    sigma: float = 4.0,
    dtype: np.dtype | type = np.float64,
) -> Dataset:
    """Gaussian colour blobs at random positions; the class is the blob colour."""
    if not 2 <= num_classes <= len(_PALETTE):
        raise ValueError(f"make_blob_dataset supports 2 to {len(_PALETTE)} classes")
    if n < 1:
        raise EmptySequenceError("make_blob_dataset needs n >= 1")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, num_classes, rng)
    rows, cols = np.mgrid[0:size, 0:size]
    images = np.empty((n, size, size, 3))
    for i, label in enumerate(labels):
        cy, cx = rng.uniform(sigma, size - sigma, size=2)
        blob = np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2 * sigma**2))
        images[i] = blob[..., None] * _PALETTE[label]
    images += rng.normal(0.0, noise, size=images.shape)
    names = ["red", "green", "blue", "yellow", "cyan", "magenta"][:num_classes]
    return Dataset(images.astype(dtype), labels, num_classes, names)


def load_image_folder(
    directory: str | Path,
    size: int | None = None,
    multiple: int = 14,
    dtype: np.dtype | type = np.float32,
) -> Dataset:
    """
    Load ``directory/<class>/<image>`` files as an RGB dataset scaled to ``[0, 1]``.

    Classes are the sorted sub-directory names. Images are resized to
    ``size`` (rounded down to a multiple of ``multiple``); without ``size``
    the first image's height sets it.
    """
    root = Path(directory)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise FormatError(f"{root} has no class sub-directories")
    images: list[Array] = []
    labels: list[int] = []
    side: int | None = None
    for label, class_dir in enumerate(class_dirs):
        for path in sorted(class_dir.iterdir()):
            if path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            with Image.open(path) as img:
                rgb = img.convert("RGB")
                if side is None:
                    base = size if size is not None else rgb.height
                    side = max(multiple, (base // multiple) * multiple)
                if rgb.size != (side, side):
                    rgb = rgb.resize((side, side), Image.Resampling.BILINEAR)
                images.append(np.asarray(rgb, dtype=np.float64) / 255.0)
            labels.append(label)
    if not images:
        raise EmptySequenceError(f"No images found under {root}")
    logger.info("Loaded %d images in %d classes from %s", len(images), len(class_dirs), root)
    return Dataset(
        np.stack(images).astype(dtype),
        np.asarray(labels, dtype=np.int64),
        len(class_dirs),
        [p.name for p in class_dirs],
    )
