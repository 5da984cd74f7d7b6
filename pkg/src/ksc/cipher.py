"""Block-wise shuffling and sign-flipping ciphers.

Shuffling moves values inside every block: output position ``i`` takes the
input value at position ``K_s(i)`` (1-based). Flipping negates the values at
positions whose key bit is 1. The same key is used for every block; cells in
the remainder region are never touched.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .blocking import BlockSpec, assemble, partition
from .errors import KeyMismatchError, WrongCipherError
from .keys import FlipKey, Key, ShuffleKey, invert_shuffle_key, key_fingerprint


@dataclass(frozen=True)
class EncryptedSignal:
    data: np.ndarray
    cipher: str
    block_spec: BlockSpec
    key_fingerprint: str

    @property
    def shape(self):
        return self.data.shape


def _check_key(key: Key, spec: BlockSpec) -> None:
    if key.mode != spec.mode or key.block_size != spec.M:
        raise KeyMismatchError(
            f"key is (mode={key.mode}, M={key.block_size}) but blocks are "
            f"(mode={spec.mode}, M={spec.M})"
        )


def permute_blocks(X, spec: BlockSpec, order) -> np.ndarray:
    """Apply ``out_block[i] = in_block[order[i]]`` (0-based) to every block."""
    grid = partition(np.asarray(X, dtype=np.float64), spec)
    grid.blocks = grid.blocks[:, np.asarray(order, dtype=np.intp)]
    return assemble(grid)


def negate_blocks(X, spec: BlockSpec, bits) -> np.ndarray:
    grid = partition(np.asarray(X, dtype=np.float64), spec)
    mask = np.asarray(bits, dtype=bool)
    grid.blocks[:, mask] = -grid.blocks[:, mask]
    return assemble(grid)


def shuffle_encrypt(X, key: ShuffleKey, spec: BlockSpec) -> EncryptedSignal:
    if not isinstance(key, ShuffleKey):
        raise WrongCipherError("shuffle_encrypt needs a ShuffleKey")
    _check_key(key, spec)
    data = permute_blocks(X, spec, key.zero_based)
    return EncryptedSignal(data, "shuffle", spec, key_fingerprint(key))


def shuffle_decrypt(Y: EncryptedSignal, key: ShuffleKey) -> np.ndarray:
    if Y.cipher != "shuffle" or not isinstance(key, ShuffleKey):
        raise WrongCipherError(f"cannot shuffle-decrypt a {Y.cipher!r} signal with a {key.cipher} key")
    _check_key(key, Y.block_spec)
    return permute_blocks(Y.data, Y.block_spec, invert_shuffle_key(key).zero_based)


def flip_encrypt(X, key: FlipKey, spec: BlockSpec) -> EncryptedSignal:
    if not isinstance(key, FlipKey):
        raise WrongCipherError("flip_encrypt needs a FlipKey")
    _check_key(key, spec)
    return EncryptedSignal(negate_blocks(X, spec, key.bits), "flip", spec, key_fingerprint(key))


def flip_decrypt(Y: EncryptedSignal, key: FlipKey) -> np.ndarray:
    """Sign flipping is an involution, so decryption re-applies the key."""
    if Y.cipher != "flip" or not isinstance(key, FlipKey):
        raise WrongCipherError(f"cannot flip-decrypt a {Y.cipher!r} signal with a {key.cipher} key")
    _check_key(key, Y.block_spec)
    return negate_blocks(Y.data, Y.block_spec, key.bits)


def encrypt(X, key: Key, spec: BlockSpec) -> EncryptedSignal:
    if isinstance(key, ShuffleKey):
        return shuffle_encrypt(X, key, spec)
    return flip_encrypt(X, key, spec)


def decrypt(Y: EncryptedSignal, key: Key) -> np.ndarray:
    if Y.cipher == "shuffle":
        return shuffle_decrypt(Y, key)
    return flip_decrypt(Y, key)


def as_encrypted(data, key: Key, spec: BlockSpec) -> EncryptedSignal:
    """Wrap ciphertext read from disk so it can be passed to ``decrypt``."""
    return EncryptedSignal(np.asarray(data, dtype=np.float64), key.cipher, spec, key_fingerprint(key))


def with_data(Y: EncryptedSignal, data) -> EncryptedSignal:
    return replace(Y, data=np.asarray(data, dtype=np.float64))
