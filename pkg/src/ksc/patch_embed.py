"""Patch-embedding layer (kernel = stride = P) and its keyed kernel transforms.

The permutation matrix that multiplies the kernel is never built. The
transformed kernel is defined by the rule that makes the layer commute with
the cipher::

    embed(transform_kernel(E, K), encrypt(X, K)) == embed(E, X)

For shuffling this means the kernel is permuted with the same rule as the
data, ``E'[i] = E[K(i)]``; for flipping the weights at flipped positions are
negated. Kernel rows are flattened exactly like signal blocks, ``l = i*P + j``
(0-based), so both sides agree on positions.

There is no bias term: a bias does not see the input and is unaffected by
either cipher.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .blocking import BlockSpec, partition
from .cipher import encrypt
from .errors import FormatError, KeyMismatchError, ParameterError
from .keys import FlipKey, Key, ShuffleKey, key_fingerprint

KERNEL_MAGIC = b"KRN1"
_MODE_FLAG = {"1d": 1, "2d": 2}
_FLAG_MODE = {v: k for k, v in _MODE_FLAG.items()}


@dataclass(frozen=True)
class PatchEmbedKernel:
    """First-layer kernel, shape ``(P, P, d)`` in 2-D mode or ``(P, d)`` in 1-D mode."""

    weights: np.ndarray
    mode: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if self.mode not in _MODE_FLAG:
            raise ParameterError(f"unknown mode {self.mode!r}")
        want_ndim = 3 if self.mode == "2d" else 2
        if w.ndim != want_ndim:
            raise ParameterError(f"{self.mode} kernel must have {want_ndim} dims, got {w.shape}")
        if self.mode == "2d" and w.shape[0] != w.shape[1]:
            raise ParameterError(f"2d kernel must be P x P x d, got {w.shape}")
        if min(w.shape) < 1:
            raise ParameterError("P and d must be >= 1")
        if not np.all(np.isfinite(w)):
            raise ParameterError("kernel has non-finite entries")
        object.__setattr__(self, "weights", w)

    @property
    def P(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[-1]

    @property
    def flat(self) -> np.ndarray:
        """``(L, d)`` view with row ``l = i*P + j``."""
        return self.weights.reshape(-1, self.d)

    @classmethod
    def from_flat(cls, flat, mode: str) -> "PatchEmbedKernel":
        flat = np.asarray(flat, dtype=np.float64)
        L, d = flat.shape
        P = int(round(L**0.5)) if mode == "2d" else L
        shape = (P, P, d) if mode == "2d" else (P, d)
        if int(np.prod(shape[:-1])) != L:
            raise ParameterError(f"{L} rows do not form a {mode} patch")
        return cls(flat.reshape(shape), mode)


def random_kernel(P: int, d: int, mode: str, seed: int = 0) -> PatchEmbedKernel:
    rng = np.random.default_rng(seed)
    shape = (P, P, d) if mode == "2d" else (P, d)
    return PatchEmbedKernel(rng.standard_normal(shape), mode)


def _check_key(E: PatchEmbedKernel, key: Key) -> None:
    if key.mode != E.mode or key.block_size != E.P:
        raise KeyMismatchError(
            f"key (mode={key.mode}, M={key.block_size}) does not fit kernel "
            f"(mode={E.mode}, P={E.P})"
        )


def embed(X, E: PatchEmbedKernel, strict: bool = True) -> np.ndarray:
    """Non-overlapping convolution with kernel = stride = ``E.P``, no bias.

    Returns ``(T//P, F//P, d)`` for 2-D input or ``(N//P, d)`` for 1-D input.
    Products are accumulated in ascending flat-index order.
    """
    spec = BlockSpec(E.mode, E.P, "strict" if strict else "passthrough")
    grid = partition(np.asarray(X, dtype=np.float64), spec)
    W = E.flat
    out = np.zeros((grid.blocks.shape[0], E.d))
    for l in range(W.shape[0]):
        out += grid.blocks[:, l : l + 1] * W[l]
    return out.reshape(*grid.grid_dims, E.d)


def transform_kernel_shuffle(E: PatchEmbedKernel, key: ShuffleKey) -> PatchEmbedKernel:
    if not isinstance(key, ShuffleKey):
        raise KeyMismatchError("shuffle transform needs a ShuffleKey")
    _check_key(E, key)
    return PatchEmbedKernel.from_flat(E.flat[key.zero_based], E.mode)


def transform_kernel_flip(E: PatchEmbedKernel, key: FlipKey) -> PatchEmbedKernel:
    if not isinstance(key, FlipKey):
        raise KeyMismatchError("flip transform needs a FlipKey")
    _check_key(E, key)
    W = E.flat.copy()
    mask = np.asarray(key.bits, dtype=bool)
    W[mask] = -W[mask]
    return PatchEmbedKernel.from_flat(W, E.mode)


def transform_kernel(E: PatchEmbedKernel, key: Key) -> PatchEmbedKernel:
    if isinstance(key, ShuffleKey):
        return transform_kernel_shuffle(E, key)
    return transform_kernel_flip(E, key)


def channel_rel_diff(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Per output channel ``||A_c - B_c||_F / ||B_c||_F`` (channel = last axis)."""
    A = A.reshape(-1, A.shape[-1])
    B = B.reshape(-1, B.shape[-1])
    num = np.sqrt(np.sum((A - B) ** 2, axis=0))
    den = np.sqrt(np.sum(B**2, axis=0))
    return num / np.maximum(den, 1e-300)


@dataclass
class VerifyReport:
    max_rel_diff_correct: float
    mean_rel_diff_incorrect: float
    mean_rel_diff_plain: float
    cipher: str
    mode: str
    P: int
    d: int
    key_correct: str
    key_incorrect: str
    degenerate_kernel: bool = False
    extra: dict = field(default_factory=dict)

    def lines(self) -> list[str]:
        return [
            f"cipher={self.cipher} mode={self.mode} P={self.P} d={self.d}",
            f"key_correct={self.key_correct} key_incorrect={self.key_incorrect}",
            f"max_rel_diff_correct={self.max_rel_diff_correct:.6e}",
            f"mean_rel_diff_incorrect={self.mean_rel_diff_incorrect:.6e}",
            f"mean_rel_diff_plain={self.mean_rel_diff_plain:.6e}",
            f"degenerate_kernel={str(self.degenerate_kernel).lower()}",
        ]


def verify_scenarios(X, E: PatchEmbedKernel, cipher: str, key_correct: Key, key_incorrect: Key,
                     remainder_policy: str = "passthrough") -> VerifyReport:
    """Compare the owner's encrypted model against three kinds of query.

    correct   -- query encrypted with the model's key
    incorrect -- query encrypted with another key
    plain     -- query not encrypted at all
    """
    if key_correct.cipher != cipher or key_incorrect.cipher != cipher:
        raise KeyMismatchError(f"both keys must be {cipher} keys")
    if key_correct == key_incorrect:
        raise ParameterError("incorrect key must differ from the correct key")
    strict = remainder_policy == "strict"
    spec = BlockSpec(E.mode, E.P, remainder_policy)
    reference = embed(X, E, strict)
    E_enc = transform_kernel(E, key_correct)
    correct = embed(encrypt(X, key_correct, spec).data, E_enc, strict)
    incorrect = embed(encrypt(X, key_incorrect, spec).data, E_enc, strict)
    plain = embed(X, E_enc, strict)
    degenerate = not np.any(E.weights)
    if degenerate:
        warnings.warn("all-zero kernel: every scenario distance is trivially 0", RuntimeWarning)
    return VerifyReport(
        max_rel_diff_correct=float(np.max(channel_rel_diff(correct, reference))),
        mean_rel_diff_incorrect=float(np.mean(channel_rel_diff(incorrect, reference))),
        mean_rel_diff_plain=float(np.mean(channel_rel_diff(plain, reference))),
        cipher=cipher,
        mode=E.mode,
        P=E.P,
        d=E.d,
        key_correct=key_fingerprint(key_correct),
        key_incorrect=key_fingerprint(key_incorrect),
        degenerate_kernel=degenerate,
    )


def kernel_to_bytes(E: PatchEmbedKernel) -> bytes:
    header = KERNEL_MAGIC + struct.pack("<IIB", E.P, E.d, _MODE_FLAG[E.mode])
    return header + E.weights.astype("<f8").tobytes(order="C")


def kernel_from_bytes(buf: bytes) -> PatchEmbedKernel:
    if buf[:4] != KERNEL_MAGIC:
        raise FormatError(f"not a kernel file (magic {buf[:4]!r})")
    if len(buf) < 13:
        raise FormatError("truncated kernel header")
    P, d, flag = struct.unpack("<IIB", buf[4:13])
    if flag not in _FLAG_MODE:
        raise FormatError(f"unknown kernel mode flag {flag}")
    mode = _FLAG_MODE[flag]
    shape = (P, P, d) if mode == "2d" else (P, d)
    n = int(np.prod(shape))
    if len(buf) != 13 + 8 * n:
        raise FormatError(f"kernel payload has {len(buf) - 13} bytes, expected {8 * n}")
    return PatchEmbedKernel(np.frombuffer(buf, dtype="<f8", offset=13).reshape(shape).copy(), mode)


def write_kernel(E: PatchEmbedKernel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(kernel_to_bytes(E))


def read_kernel(path) -> PatchEmbedKernel:
    with open(path, "rb") as fh:
        return kernel_from_bytes(fh.read())
