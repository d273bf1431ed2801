"""Block-wise encryption-then-compression toolkit.

Deterministic EtC image cipher and its inverse, the signed-permutation
algebra that lets patch embeddings absorb uniform-key encryption, and
desk-scale compressibility / visual-leakage / linear-probe experiments.
"""

from .blocks import BlockGrid, flatten, load_image, merge, save_png, split, unflatten
from .cipher import (
    ALL_STEPS,
    BlockTransform,
    CipherSpec,
    EncryptedImage,
    Mode,
    decrypt,
    encrypt,
)
from .embedding import (
    EmbeddingParams,
    SignedPermutation,
    adapt_params,
    block_transform_matrix,
    embed,
    equivalence_deviation,
    normalize,
    position_permutation,
    verify_equivalence,
)
from .errors import (
    DimensionError,
    EtcError,
    ModeError,
    RangeError,
    ShapeError,
    UsageError,
)
from .evaluation import compression_report, jpeg_roundtrip_size, leakage_report, ssim
from .keying import KeyStream, MasterKey, derive_streams, load_key_file, save_key_file
from .probe import Hyper, LabeledDataset, LinearProbe, evaluate, featurize, parity_experiment, train

__version__ = "0.1.0"
