"""Block-wise encryption-then-compression cipher and its exact inverse.

Encryption runs four keyed steps over the block grid of an image:

    1. scramble      -- permute whole blocks (key K1),
    2. dihedral      -- rotate/flip each block (key K2),
    3. negpos        -- negative-positive transform per block (key K3),
    4. colorshuffle  -- permute the RGB planes per block (key K4).

All randomness comes from the four subkey streams; encryption is a pure
function of (image, key, spec).  Two keying modes exist: PER_BLOCK draws a
fresh transform for every block (the real scheme), UNIFORM shares one
step-2/3/4 transform across all blocks (the regime where patch-embedding
adaptation is exact; see the embedding module).

Normative conventions, frozen here and relied on elsewhere:

* Dihedral states: ``state`` in [0, 8).  ``state % 4`` clockwise quarter
  turns are applied first; if ``state >= 4`` a left-right mirror follows.
* Color shuffle: index in [0, 6) into the lexicographic permutations of
  (R, G, B); output channel k reads input channel ``COLOR_PERMS[index][k]``.
* Scrambling: Fisher-Yates over block indices with ``i`` descending from
  N-1 to 1, one ``uniform_below(i + 1)`` draw per step.  The resulting
  ``perm`` means "grid position i of the ciphertext holds source block
  ``perm[i]``".
* Per-block transforms are drawn in block-index order and attach to grid
  positions of the already-scrambled grid, which keeps decryption a pure
  tape re-derivation.
* Disabled steps consume no tape.

There is no MAC: decrypting with the wrong key or spec deterministically
returns garbage rather than failing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import blocks as blk
from .errors import RangeError, ShapeError, UsageError
from .keying import KeyStream, MasterKey, derive_streams

STEP_SCRAMBLE = "scramble"
STEP_DIHEDRAL = "dihedral"
STEP_NEGPOS = "negpos"
STEP_COLORSHUFFLE = "colorshuffle"
ALL_STEPS = (STEP_SCRAMBLE, STEP_DIHEDRAL, STEP_NEGPOS, STEP_COLORSHUFFLE)

N_DIHEDRAL = 8
N_COLOR_PERMS = 6

# Lexicographic permutations of (R, G, B) = channels (0, 1, 2).
COLOR_PERMS = (
    (0, 1, 2),  # RGB (identity)
    (0, 2, 1),  # RBG
    (1, 0, 2),  # GRB
    (1, 2, 0),  # GBR
    (2, 0, 1),  # BRG
    (2, 1, 0),  # BGR
)
_COLOR_INVERSES = tuple(
    tuple(int(np.argsort(p)[k]) for k in range(3)) for p in COLOR_PERMS
)


class Mode(enum.Enum):
    PER_BLOCK = "per-block"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class CipherSpec:
    block_size: int = 16
    mode: Mode = Mode.PER_BLOCK
    steps: frozenset = field(default_factory=lambda: frozenset(ALL_STEPS))

    def __post_init__(self):
        if self.block_size < 1:
            raise UsageError("block_size must be positive")
        unknown = set(self.steps) - set(ALL_STEPS)
        if unknown:
            raise UsageError(f"unknown cipher steps: {sorted(unknown)}")
        object.__setattr__(self, "steps", frozenset(self.steps))

    def enabled(self, step: str) -> bool:
        return step in self.steps


@dataclass(frozen=True)
class BlockTransform:
    """Per-block step-2/3/4 parameters."""

    dihedral: int = 0  # [0, 8)
    np_flag: int = 0  # {0, 1}
    color_perm: int = 0  # [0, 6)

    def __post_init__(self):
        if not 0 <= self.dihedral < N_DIHEDRAL:
            raise RangeError(f"dihedral state {self.dihedral} not in [0, 8)")
        if self.np_flag not in (0, 1):
            raise RangeError(f"np_flag {self.np_flag} not a bit")
        if not 0 <= self.color_perm < N_COLOR_PERMS:
            raise RangeError(f"color_perm {self.color_perm} not in [0, 6)")


@dataclass(frozen=True)
class EncryptedImage:
    pixels: np.ndarray  # ciphertext, same shape as the plaintext
    spec: CipherSpec


@dataclass
class CipherTape:
    """Materialized per-image randomness.

    Arrays are indexed by grid position (after scrambling).  ``perm`` is
    None when scrambling is disabled.  ``uniform_transform`` is set in
    UNIFORM mode.  Materializing the tape up front is what makes block
    processing order-independent and parallelizable.
    """

    perm: np.ndarray | None
    dihedral: np.ndarray
    np_flags: np.ndarray
    color_perms: np.ndarray
    uniform_transform: BlockTransform | None = None


def scramble_permutation(stream: KeyStream, n: int) -> np.ndarray:
    """Fisher-Yates permutation of [0, n) drawn from one key stream."""
    idx = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = stream.uniform_below(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def derive_tape(key: MasterKey, spec: CipherSpec, n_blocks: int) -> CipherTape:
    """Re-derivable randomness for one image of ``n_blocks`` blocks."""
    k1, k2, k3, k4 = derive_streams(key)
    n = n_blocks

    perm = scramble_permutation(k1, n) if spec.enabled(STEP_SCRAMBLE) else None

    if spec.mode is Mode.UNIFORM:
        t = BlockTransform(
            dihedral=k2.uniform_below(N_DIHEDRAL) if spec.enabled(STEP_DIHEDRAL) else 0,
            np_flag=k3.bernoulli_half() if spec.enabled(STEP_NEGPOS) else 0,
            color_perm=k4.uniform_below(N_COLOR_PERMS) if spec.enabled(STEP_COLORSHUFFLE) else 0,
        )
        return CipherTape(
            perm=perm,
            dihedral=np.full(n, t.dihedral),
            np_flags=np.full(n, t.np_flag),
            color_perms=np.full(n, t.color_perm),
            uniform_transform=t,
        )

    dihedral = (
        np.array([k2.uniform_below(N_DIHEDRAL) for _ in range(n)])
        if spec.enabled(STEP_DIHEDRAL)
        else np.zeros(n, dtype=np.int64)
    )
    np_flags = (
        np.array([k3.bernoulli_half() for _ in range(n)])
        if spec.enabled(STEP_NEGPOS)
        else np.zeros(n, dtype=np.int64)
    )
    color_perms = (
        np.array([k4.uniform_below(N_COLOR_PERMS) for _ in range(n)])
        if spec.enabled(STEP_COLORSHUFFLE)
        else np.zeros(n, dtype=np.int64)
    )
    return CipherTape(perm, dihedral, np_flags, color_perms)


def scramble_blocks(grid: blk.BlockGrid, stream: KeyStream) -> blk.BlockGrid:
    """Reorder blocks by a Fisher-Yates permutation drawn from K1."""
    perm = scramble_permutation(stream, grid.n_blocks)
    return blk.BlockGrid(
        grid.blocks[perm], grid.rows, grid.cols, grid.block_h, grid.block_w
    )


def _dihedral_batch(batch: np.ndarray, state: int, inverse: bool) -> np.ndarray:
    """Apply one dihedral state to a (N, h, w, c) batch of square blocks."""
    rot = state % 4
    flip = state >= 4
    if inverse:
        if flip:
            batch = batch[:, :, ::-1, :]
        return np.rot90(batch, k=rot, axes=(1, 2))
    out = np.rot90(batch, k=-rot, axes=(1, 2))
    if flip:
        out = out[:, :, ::-1, :]
    return out


def _require_square(block: np.ndarray) -> None:
    if block.ndim != 3 or block.shape[0] != block.shape[1]:
        raise ShapeError(f"dihedral transforms need a square block, got {block.shape}")


def apply_dihedral(block: np.ndarray, state: int) -> np.ndarray:
    """One of the 8 isometries of the square: rotate, then optionally mirror."""
    if not 0 <= state < N_DIHEDRAL:
        raise RangeError(f"dihedral state {state} not in [0, 8)")
    block = np.asarray(block)
    _require_square(block)
    return np.ascontiguousarray(_dihedral_batch(block[None], state, inverse=False)[0])


def invert_dihedral(block: np.ndarray, state: int) -> np.ndarray:
    if not 0 <= state < N_DIHEDRAL:
        raise RangeError(f"dihedral state {state} not in [0, 8)")
    block = np.asarray(block)
    _require_square(block)
    return np.ascontiguousarray(_dihedral_batch(block[None], state, inverse=True)[0])


def negpos(block: np.ndarray, r: int) -> np.ndarray:
    """r=1 inverts every 8-bit value (v -> 255 - v); r=0 is the identity.

    One flag covers all three color components of the block.  The
    transform is an involution.
    """
    if r not in (0, 1):
        raise RangeError(f"negpos flag {r} not a bit")
    block = np.asarray(block)
    if r == 0:
        return block.copy()
    return (blk.MAX_VALUE - block.astype(np.int16)).astype(np.uint8)


def shuffle_colors(block: np.ndarray, perm_index: int) -> np.ndarray:
    if not 0 <= perm_index < N_COLOR_PERMS:
        raise RangeError(f"color permutation index {perm_index} not in [0, 6)")
    return np.ascontiguousarray(np.asarray(block)[..., COLOR_PERMS[perm_index]])


def unshuffle_colors(block: np.ndarray, perm_index: int) -> np.ndarray:
    if not 0 <= perm_index < N_COLOR_PERMS:
        raise RangeError(f"color permutation index {perm_index} not in [0, 6)")
    return np.ascontiguousarray(np.asarray(block)[..., _COLOR_INVERSES[perm_index]])


def _apply_block_steps(
    batch: np.ndarray, tape: CipherTape, spec: CipherSpec, inverse: bool
) -> np.ndarray:
    """Steps 2-4 (or their inverses, in reverse order) on a block batch."""
    out = batch.copy()

    def dihedral_pass(invert: bool):
        for s in range(1, N_DIHEDRAL):
            m = tape.dihedral == s
            if m.any():
                out[m] = _dihedral_batch(out[m], s, inverse=invert)

    def negpos_pass():
        m = tape.np_flags == 1
        if m.any():
            out[m] = blk.MAX_VALUE - out[m]

    def color_pass(invert: bool):
        perms = _COLOR_INVERSES if invert else COLOR_PERMS
        for p in range(1, N_COLOR_PERMS):
            m = tape.color_perms == p
            if m.any():
                out[m] = out[m][..., perms[p]]

    if not inverse:
        if spec.enabled(STEP_DIHEDRAL):
            dihedral_pass(invert=False)
        if spec.enabled(STEP_NEGPOS):
            negpos_pass()
        if spec.enabled(STEP_COLORSHUFFLE):
            color_pass(invert=False)
    else:
        if spec.enabled(STEP_COLORSHUFFLE):
            color_pass(invert=True)
        if spec.enabled(STEP_NEGPOS):
            negpos_pass()
        if spec.enabled(STEP_DIHEDRAL):
            dihedral_pass(invert=True)
    return out


def encrypt(image: np.ndarray, key: MasterKey, spec: CipherSpec) -> EncryptedImage:
    """Run the enabled steps in order 1 -> 4 over the image's block grid."""
    grid = blk.split(image, spec.block_size, spec.block_size)
    tape = derive_tape(key, spec, grid.n_blocks)

    out = grid.blocks
    if tape.perm is not None:
        out = out[tape.perm]
    out = _apply_block_steps(out, tape, spec, inverse=False)

    cipher_grid = blk.BlockGrid(out, grid.rows, grid.cols, grid.block_h, grid.block_w)
    return EncryptedImage(blk.merge(cipher_grid), spec)


def decrypt(enc: EncryptedImage, key: MasterKey) -> np.ndarray:
    """Invert the enabled steps in order 4 -> 1 after re-deriving the tape."""
    spec = enc.spec
    grid = blk.split(enc.pixels, spec.block_size, spec.block_size)
    tape = derive_tape(key, spec, grid.n_blocks)

    out = _apply_block_steps(grid.blocks, tape, spec, inverse=True)
    if tape.perm is not None:
        unscrambled = np.empty_like(out)
        unscrambled[tape.perm] = out
        out = unscrambled

    plain_grid = blk.BlockGrid(out, grid.rows, grid.cols, grid.block_h, grid.block_w)
    return blk.merge(plain_grid)
