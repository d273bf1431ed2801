"""Seeded synthetic images: photo-like corpora and a shapes dataset.

Keeps every experiment hermetic; nothing is downloaded.  The photo
generator layers multi-octave smoothed noise (roughly 1/f spectra, like
natural photos), correlated channels, a soft global gradient, and a few
soft discs, then adds mild sensor-style noise.  The shapes dataset drops
one of four high-contrast geometric silhouettes (disc, square, diamond,
cross) on a dark noisy background with jittered position, size, and
color.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import ndimage

from . import blocks as blk
from .errors import UsageError
from .probe import LabeledDataset

SHAPE_CLASSES = ("disc", "square", "diamond", "cross")


def synth_photo(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    img = np.zeros((height, width, 3))
    for octave, weight in [(16, 1.0), (8, 0.55), (4, 0.30), (2, 0.15), (1, 0.06)]:
        low = rng.standard_normal((height // octave + 2, width // octave + 2, 3))
        up = ndimage.zoom(low, (octave, octave, 1), order=1)[:height, :width, :]
        img += weight * up
    luminance = img.mean(axis=2, keepdims=True)
    img = 0.6 * luminance + 0.4 * img  # correlate channels
    img += np.linspace(-1, 1, height)[:, None, None] * rng.standard_normal(3) * 0.5

    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(int(rng.integers(2, 6))):
        cy, cx = rng.integers(0, height), rng.integers(0, width)
        radius = rng.integers(min(height, width) // 8, min(height, width) // 3)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < radius * radius
        img[mask] += rng.standard_normal(3) * 0.8

    img = (img - img.min()) / (np.ptp(img) + 1e-9)
    noisy = img * 255.0 + rng.standard_normal((height, width, 3)) * 2.0
    return np.clip(noisy, 0, 255).astype(np.uint8)


def make_photo_corpus(
    out_dir, count: int, sizes=((128, 128), (112, 160), (96, 128), (160, 112)), seed: int = 0
) -> list[Path]:
    """Write ``count`` seeded photo-like PNGs; returns the sorted paths."""
    if count < 1:
        raise UsageError("corpus needs at least one image")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        h, w = sizes[i % len(sizes)]
        path = root / f"photo_{i:04d}.png"
        blk.save_png(path, synth_photo(h, w, rng))
        paths.append(path)
    return paths


def _shape_mask(cls: int, size: int, cy: int, cx: int, radius: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    dy, dx = np.abs(yy - cy), np.abs(xx - cx)
    if cls == 0:  # disc
        return (yy - cy) ** 2 + (xx - cx) ** 2 < radius * radius
    if cls == 1:  # square
        return (dy < radius - 4) & (dx < radius - 4)
    if cls == 2:  # diamond
        return dy + dx < radius
    band = max(3, radius // 4)  # cross
    return ((dy < band) | (dx < band)) & (dy < radius) & (dx < radius)


def make_shapes_dataset(
    count: int,
    num_classes: int = 4,
    size: int = 48,
    seed: int = 0,
    train_fraction: float = 0.75,
) -> LabeledDataset:
    """Colored geometric shapes on noisy dark backgrounds, class-balanced.

    The default 48x48 geometry gives 9 blocks at block size 16; an odd
    block count means per-block sign flips can never cancel completely in
    mean-pooled features, which keeps the dataset learnable through
    per-block encryption for any key.
    """
    if not 2 <= num_classes <= len(SHAPE_CLASSES):
        raise UsageError(f"num_classes must be in [2, {len(SHAPE_CLASSES)}]")
    if count < 2 * num_classes:
        raise UsageError("need at least two samples per class")
    rng = np.random.default_rng(seed)
    images = np.zeros((count, size, size, 3), np.uint8)
    labels = np.zeros(count, np.int64)
    for i in range(count):
        cls = i % num_classes
        labels[i] = cls
        background = rng.integers(5, 50, 3)
        img = np.ones((size, size, 3)) * background
        img += rng.standard_normal((size, size, 3)) * 4.0
        cy = size // 2 + int(rng.integers(-size // 12, size // 12 + 1))
        cx = size // 2 + int(rng.integers(-size // 12, size // 12 + 1))
        radius = int(rng.integers(size // 3, size // 2 - 2))
        color = rng.integers(160, 255, 3)
        mask = _shape_mask(cls, size, cy, cx, radius)
        img[mask] = color + rng.standard_normal(3) * 4.0
        images[i] = np.clip(img, 0, 255).astype(np.uint8)
    return LabeledDataset.from_arrays(images, labels, train_fraction, seed)


def load_class_directory_dataset(
    root, train_fraction: float = 0.75, seed: int = 0
) -> LabeledDataset:
    """Directory-per-class corpus: root/<class name>/*.png|jpg."""
    root = Path(root)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if len(class_dirs) < 2:
        raise UsageError(f"{root} needs at least two class subdirectories")
    images, labels = [], []
    for label, class_dir in enumerate(class_dirs):
        for path in sorted(class_dir.iterdir()):
            if path.suffix.lower() in (".png", ".jpg", ".jpeg"):
                images.append(blk.load_image(path))
                labels.append(label)
    if not images:
        raise UsageError(f"{root} holds no decodable images")
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise UsageError(f"corpus images must share one shape, found {sorted(shapes)}")
    return LabeledDataset.from_arrays(np.stack(images), np.array(labels), train_fraction, seed)
