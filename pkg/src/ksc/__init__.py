"""Keyed block shuffling / sign flipping for speech features, with matching
patch-embedding kernel transforms and an attack harness."""

from .blocking import BlockGrid, BlockSpec, assemble, partition
from .cipher import (
    EncryptedSignal,
    decrypt,
    encrypt,
    flip_decrypt,
    flip_encrypt,
    shuffle_decrypt,
    shuffle_encrypt,
)
from .errors import (
    DimensionError,
    FormatError,
    KeyMismatchError,
    KeyParseError,
    KscError,
    ParameterError,
    StructuralError,
    WrongCipherError,
)
from .keys import (
    FlipKey,
    ShuffleKey,
    generate_flip_key,
    generate_key,
    generate_shuffle_key,
    invert_shuffle_key,
    key_space_size,
    parse_key,
    serialize_key,
)
from .patch_embed import (
    PatchEmbedKernel,
    VerifyReport,
    embed,
    transform_kernel_flip,
    transform_kernel_shuffle,
    verify_scenarios,
)
from .presets import PRESETS, get_preset

__version__ = "0.1.0"
