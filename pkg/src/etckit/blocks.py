"""Block decomposition of RGB images.

Images are numpy arrays of shape (H, W, 3), dtype uint8, row-major with
interleaved channels.  A block grid holds the image's non-overlapping
``block_h x block_w`` blocks enumerated row-major over the grid, as one
array of shape (N, block_h, block_w, 3).

Flattening convention (normative, used by the cipher algebra as well):
a block is flattened channel-major, then row, then column, i.e. the flat
index of block element (y, x, c) is::

    c * (block_h * block_w) + y * block_w + x

These two conventions are the only layout facts the rest of the toolkit
depends on; everything else is derived from them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DimensionError, ShapeError

CHANNELS = 3
BIT_DEPTH = 8
MAX_VALUE = 2**BIT_DEPTH - 1


def validate_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != CHANNELS:
        raise ShapeError(f"expected (H, W, 3) array, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise ShapeError(f"expected uint8 pixels, got {image.dtype}")
    return image


@dataclass
class BlockGrid:
    """Non-overlapping blocks of an image, row-major over the grid."""

    blocks: np.ndarray  # (N, block_h, block_w, 3) uint8
    rows: int
    cols: int
    block_h: int
    block_w: int

    @property
    def n_blocks(self) -> int:
        return self.rows * self.cols


def split(image: np.ndarray, block_w: int, block_h: int) -> BlockGrid:
    """Decompose an image into non-overlapping blocks.

    Raises DimensionError if the width is not divisible by block_w or the
    height by block_h; there is no implicit padding.
    """
    image = validate_image(image)
    h, w, _ = image.shape
    if block_w < 1 or block_h < 1:
        raise DimensionError("block dimensions must be positive")
    if w % block_w != 0 or h % block_h != 0:
        raise DimensionError(
            f"image {w}x{h} not divisible by block {block_w}x{block_h}"
        )
    rows, cols = h // block_h, w // block_w
    blocks = (
        image.reshape(rows, block_h, cols, block_w, CHANNELS)
        .transpose(0, 2, 1, 3, 4)
        .reshape(rows * cols, block_h, block_w, CHANNELS)
    )
    return BlockGrid(np.ascontiguousarray(blocks), rows, cols, block_h, block_w)


def merge(grid: BlockGrid) -> np.ndarray:
    """Reassemble a block grid into an image; exact inverse of split."""
    b = grid.blocks
    if b.shape != (grid.n_blocks, grid.block_h, grid.block_w, CHANNELS):
        raise ShapeError(f"grid blocks have shape {b.shape}")
    image = (
        b.reshape(grid.rows, grid.cols, grid.block_h, grid.block_w, CHANNELS)
        .transpose(0, 2, 1, 3, 4)
        .reshape(grid.rows * grid.block_h, grid.cols * grid.block_w, CHANNELS)
    )
    return np.ascontiguousarray(image)


def flatten(block: np.ndarray) -> np.ndarray:
    """Flatten a (h, w, c) block channel-major: index = c*h*w + y*w + x."""
    block = np.asarray(block)
    if block.ndim != 3:
        raise ShapeError(f"expected (h, w, c) block, got shape {block.shape}")
    return block.transpose(2, 0, 1).reshape(-1)


def unflatten(patch: np.ndarray, block_h: int, block_w: int, channels: int = CHANNELS) -> np.ndarray:
    """Inverse of flatten for the given block dimensions."""
    patch = np.asarray(patch)
    if patch.ndim != 1 or patch.size != block_h * block_w * channels:
        raise ShapeError(
            f"patch length {patch.size} != {block_h}*{block_w}*{channels}"
        )
    return patch.reshape(channels, block_h, block_w).transpose(1, 2, 0)


def center_crop_to_multiple(image: np.ndarray, block_size: int) -> np.ndarray:
    """Crop borders so both dimensions become multiples of block_size."""
    image = validate_image(image)
    h, w, _ = image.shape
    nh, nw = (h // block_size) * block_size, (w // block_size) * block_size
    if nh == 0 or nw == 0:
        raise DimensionError(f"image {w}x{h} smaller than block size {block_size}")
    top, left = (h - nh) // 2, (w - nw) // 2
    return np.ascontiguousarray(image[top : top + nh, left : left + nw])


def load_image(path) -> np.ndarray:
    """Read a PNG or JPEG file as an (H, W, 3) uint8 array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def save_png(path, image: np.ndarray) -> None:
    """Write losslessly; ciphertext must not be re-compressed lossily."""
    Image.fromarray(validate_image(image)).save(path, format="PNG")
