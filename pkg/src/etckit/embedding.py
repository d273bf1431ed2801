"""Patch-embedding algebra of the cipher.

A patch embedding maps each flattened, normalized block x (row vector of
length P*P*C) to z = x @ E + e_pos.  For a ciphertext produced in UNIFORM
mode, the whole effect of steps 2-4 on a normalized patch is one signed
permutation, and block scrambling is one row permutation of the positional
table.  Adapting (E, E_pos) by those permutations makes the embedding of
the ciphertext equal the (row-permuted) embedding of the plaintext, up to
floating-point rounding.  ``verify_equivalence`` measures the deviation.

Matrix orientation, fixed once: a SignedPermutation ``M`` acts on column
vectors, (M @ v)[i] = signs[i] * v[perm[i]].  With patches as row vectors
this means x_cipher = x_plain @ M^T, and the adapted embedding matrix is
M @ E (M^T's inverse is M, signed permutations being orthogonal).

In PER_BLOCK mode no single signed permutation exists and the equality
genuinely fails; ``equivalence_deviation`` still measures how far off the
uniform-recipe adaptation is, which is what the counter-check asserts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import blocks as blk
from . import cipher as ciph
from .errors import ModeError, ShapeError
from .keying import MasterKey, derive_streams


def normalize(patch: np.ndarray) -> np.ndarray:
    """Map 8-bit values affinely onto [-1, 1]: p -> (p/255 - 0.5) / 0.5.

    Computed as (p - 127.5) / 127.5, which is the same map but makes
    normalize(255 - p) == -normalize(p) hold bit-exactly for every 8-bit
    value (both sides divide the exact float 127.5 - p by 127.5).
    """
    return (np.asarray(patch, dtype=np.float64) - 127.5) / 127.5


@dataclass(frozen=True)
class SignedPermutation:
    """Square matrix with exactly one entry of +-1 per row and column.

    Stored sparsely: row i has value signs[i] in column perm[i].
    """

    perm: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        signs = np.asarray(self.signs, dtype=np.float64)
        if perm.ndim != 1 or signs.shape != perm.shape:
            raise ShapeError("perm and signs must be equal-length vectors")
        if not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ShapeError("perm is not a permutation of [0, n)")
        if not np.all(np.abs(signs) == 1.0):
            raise ShapeError("signs must be +-1")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "signs", signs)

    @property
    def size(self) -> int:
        return self.perm.size

    def to_matrix(self) -> np.ndarray:
        m = np.zeros((self.size, self.size))
        m[np.arange(self.size), self.perm] = self.signs
        return m

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Column action: result[i] = signs[i] * v[perm[i]].

        Works on vectors or on matrices (rows are permuted/signed), so it
        applies equally to stacked row-vector parameter tables.
        """
        v = np.asarray(v)
        if v.shape[0] != self.size:
            raise ShapeError(f"operand first axis {v.shape[0]} != {self.size}")
        if v.ndim == 1:
            return self.signs * v[self.perm]
        return self.signs[:, None] * v[self.perm]

    def transpose(self) -> "SignedPermutation":
        inv = np.argsort(self.perm)
        return SignedPermutation(inv, self.signs[inv])


@dataclass(frozen=True)
class EmbeddingParams:
    """Patch-embedding matrix E ((P*P*C) x D) and positional table (N x D)."""

    E: np.ndarray
    E_pos: np.ndarray

    def __post_init__(self):
        E = np.asarray(self.E, dtype=np.float64)
        E_pos = np.asarray(self.E_pos, dtype=np.float64)
        if E.ndim != 2 or E_pos.ndim != 2:
            raise ShapeError("E and E_pos must be 2-D")
        if E.shape[1] != E_pos.shape[1]:
            raise ShapeError(
                f"embedding dims disagree: E has {E.shape[1]}, E_pos has {E_pos.shape[1]}"
            )
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "E_pos", E_pos)

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    @property
    def patch_dim(self) -> int:
        return self.E.shape[0]

    @property
    def n_patches(self) -> int:
        return self.E_pos.shape[0]

    @property
    def patch_size(self) -> int:
        """Square patch side length implied by E's input dimension."""
        p = round((self.patch_dim / blk.CHANNELS) ** 0.5)
        if p * p * blk.CHANNELS != self.patch_dim:
            raise ShapeError(
                f"E input dim {self.patch_dim} is not {blk.CHANNELS} * P^2 for integer P"
            )
        return p


def random_params(
    patch_size: int, n_patches: int, dim: int, rng: np.random.Generator
) -> EmbeddingParams:
    """Standard-normal E and E_pos for the given geometry."""
    return EmbeddingParams(
        E=rng.standard_normal((patch_size * patch_size * blk.CHANNELS, dim)),
        E_pos=rng.standard_normal((n_patches, dim)),
    )


def position_permutation(
    key: MasterKey, n_patches: int, spec: ciph.CipherSpec | None = None
) -> SignedPermutation:
    """Row permutation matching the block scramble drawn from K1.

    Row i of the result selects source row perm[i]: applied to the
    positional table it produces the table a network would need for
    scrambled inputs.  All signs are +1.  If ``spec`` disables the
    scramble step, this is the identity.
    """
    signs = np.ones(n_patches)
    if spec is not None and not spec.enabled(ciph.STEP_SCRAMBLE):
        return SignedPermutation(np.arange(n_patches), signs)
    k1 = derive_streams(key)[0]
    return SignedPermutation(ciph.scramble_permutation(k1, n_patches), signs)


def block_transform_matrix(
    t: ciph.BlockTransform, patch_size: int, channels: int = blk.CHANNELS
) -> SignedPermutation:
    """Signed permutation equal to steps 2-4 on a normalized flat patch.

    Contract: for every block b,
    flatten(normalize(steps234(b, t))) == M.apply(flatten(normalize(b))).

    The permutation part is obtained by pushing flat indices through the
    same dihedral and color-shuffle maps the cipher applies to pixels; the
    negative-positive flag becomes a uniform sign because one flag covers
    the whole block and normalization turns value inversion into negation.
    """
    n = patch_size * patch_size * channels
    index_block = blk.unflatten(np.arange(n), patch_size, patch_size, channels)
    moved = ciph.apply_dihedral(index_block, t.dihedral)
    moved = ciph.shuffle_colors(moved, t.color_perm)
    sign = -1.0 if t.np_flag else 1.0
    return SignedPermutation(blk.flatten(moved), np.full(n, sign))


def _flat_normalized_patches(image: np.ndarray, patch_size: int) -> np.ndarray:
    """(N, P*P*C) matrix of flattened, normalized patches."""
    grid = blk.split(image, patch_size, patch_size)
    n = grid.n_blocks
    flat = grid.blocks.transpose(0, 3, 1, 2).reshape(n, -1)
    return normalize(flat)


def embed(image: np.ndarray, params: EmbeddingParams) -> np.ndarray:
    """Patch embeddings z_i = normalize(x_i) @ E + e_pos_i, stacked (N, D)."""
    x = _flat_normalized_patches(image, params.patch_size)
    if x.shape[0] != params.n_patches:
        raise ShapeError(
            f"image has {x.shape[0]} patches, E_pos has {params.n_patches} rows"
        )
    return x @ params.E + params.E_pos


def adapt_params(
    params: EmbeddingParams, key: MasterKey, spec: ciph.CipherSpec
) -> EmbeddingParams:
    """Key-derived parameters that embed UNIFORM-mode ciphertexts.

    Returns (M @ E, E1 @ E_pos) where M is the signed permutation of the
    shared step-2/3/4 transform and E1 the scramble permutation, both
    re-derived from the key tape.  Only UNIFORM mode admits an exact
    adaptation; PER_BLOCK mode raises ModeError.
    """
    if spec.mode is not ciph.Mode.UNIFORM:
        raise ModeError("parameter adaptation is exact only in uniform mode")
    if params.patch_dim != spec.block_size ** 2 * blk.CHANNELS:
        raise ShapeError(
            f"E patch dim {params.patch_dim} does not match block size {spec.block_size}"
        )
    tape = ciph.derive_tape(key, spec, params.n_patches)
    m = block_transform_matrix(tape.uniform_transform, spec.block_size)
    e_new = m.apply(params.E)
    e_pos_new = params.E_pos[tape.perm] if tape.perm is not None else params.E_pos
    return EmbeddingParams(e_new, e_pos_new)


def equivalence_deviation(
    image: np.ndarray,
    params: EmbeddingParams,
    key: MasterKey,
    spec: ciph.CipherSpec,
) -> float:
    """Max |embed(encrypt(image)) with adapted params - permuted plain embed|.

    The adaptation always uses the uniform recipe (one transform draw per
    step).  In UNIFORM mode this is the exact theorem and the deviation is
    rounding noise; in PER_BLOCK mode it measures how badly a single
    transform fails to describe per-block encryption.
    """
    uniform_spec = ciph.CipherSpec(spec.block_size, ciph.Mode.UNIFORM, spec.steps)
    adapted = adapt_params(params, key, uniform_spec)

    enc = ciph.encrypt(image, key, spec)
    z_cipher = embed(enc.pixels, adapted)

    z_plain = embed(image, params)
    e1 = position_permutation(key, params.n_patches, spec)
    return float(np.max(np.abs(z_cipher - e1.apply(z_plain))))


def verify_equivalence(
    image: np.ndarray,
    params: EmbeddingParams,
    key: MasterKey,
    spec: ciph.CipherSpec,
) -> float:
    """Deviation of the embedding-equivalence identity; requires UNIFORM mode.

    Contract: < 1e-9 in double precision (the identity is exact in real
    arithmetic; the tolerance only absorbs rounding).
    """
    if spec.mode is not ciph.Mode.UNIFORM:
        raise ModeError("equivalence holds only in uniform mode")
    return equivalence_deviation(image, params, key, spec)


def dump_matrix(path, matrix: np.ndarray, label: str) -> None:
    """Plain-text dump: `# label rows cols` header, one row per line."""
    matrix = np.asarray(matrix)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {label} {matrix.shape[0]} {matrix.shape[1]}\n")
        np.savetxt(fh, matrix, fmt="%.17g")
