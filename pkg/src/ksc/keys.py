"""Secret keys for the block ciphers.

Two key families exist:

* ``ShuffleKey``: a 1-based permutation of ``{1..L}``.
* ``FlipKey``: a bit sequence of length ``L``.

``L`` is ``M*M`` for 2-D (spectrogram) blocks and ``M`` for 1-D (waveform)
blocks.

Keys are generated from a 64-bit seed with a splitmix64 stream so that every
implementation reproduces the same key from the same ``(seed, mode, M)``:

    state <- seed
    next():
        state <- (state + 0x9E3779B97F4A7C15) mod 2**64
        z <- state
        z <- ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
        z <- ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
        return z ^ (z >> 31)

Permutation: Fisher-Yates over ``[1..L]``, for ``i = L-1 .. 1`` draw
``j`` uniform in ``[0, i]`` by rejection (discard draws ``>= 2**64 -
(2**64 mod (i+1))``, then ``j = draw mod (i+1)``), swap positions ``i`` and
``j``. Bits: ``next() & 1`` for each of the ``L`` positions in order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Union

from .errors import KeyParseError, ParameterError

MASK64 = (1 << 64) - 1
MODES = ("1d", "2d")
CIPHERS = ("shuffle", "flip")
MAGIC = "KSC1"


class SplitMix64:
    def __init__(self, seed: int):
        if not 0 <= seed <= MASK64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.state = seed

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n)."""
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next()
            if r < limit:
                return r % n


def key_length(mode: str, M: int) -> int:
    _check_mode(mode)
    if M < 1:
        raise ParameterError(f"block size M must be >= 1, got {M}")
    return M * M if mode == "2d" else M


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class ShuffleKey:
    indices: tuple[int, ...]
    mode: str
    block_size: int

    cipher = "shuffle"

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        L = key_length(self.mode, self.block_size)
        if len(self.indices) != L:
            raise ParameterError(
                f"shuffle key for mode={self.mode}, M={self.block_size} needs {L} indices, "
                f"got {len(self.indices)}"
            )
        seen = [False] * (L + 1)
        for i in self.indices:
            if not 1 <= i <= L or seen[i]:
                raise ParameterError(f"indices are not a bijection on 1..{L}")
            seen[i] = True

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def zero_based(self) -> list[int]:
        return [i - 1 for i in self.indices]


@dataclass(frozen=True)
class FlipKey:
    bits: tuple[int, ...]
    mode: str
    block_size: int

    cipher = "flip"

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        L = key_length(self.mode, self.block_size)
        if len(self.bits) != L:
            raise ParameterError(
                f"flip key for mode={self.mode}, M={self.block_size} needs {L} bits, "
                f"got {len(self.bits)}"
            )
        if any(b not in (0, 1) for b in self.bits):
            raise ParameterError("flip key bits must be 0 or 1")

    def __len__(self) -> int:
        return len(self.bits)


Key = Union[ShuffleKey, FlipKey]


def generate_shuffle_key(seed: int, mode: str, M: int) -> ShuffleKey:
    L = key_length(mode, M)
    rng = SplitMix64(seed)
    perm = list(range(1, L + 1))
    for i in range(L - 1, 0, -1):
        j = rng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return ShuffleKey(tuple(perm), mode, M)


def generate_flip_key(seed: int, mode: str, M: int) -> FlipKey:
    L = key_length(mode, M)
    rng = SplitMix64(seed)
    return FlipKey(tuple(rng.next() & 1 for _ in range(L)), mode, M)


def generate_key(cipher: str, seed: int, mode: str, M: int) -> Key:
    if cipher == "shuffle":
        return generate_shuffle_key(seed, mode, M)
    if cipher == "flip":
        return generate_flip_key(seed, mode, M)
    raise ParameterError(f"cipher must be one of {CIPHERS}, got {cipher!r}")


def invert_shuffle_key(key: ShuffleKey) -> ShuffleKey:
    inv = [0] * len(key)
    for i, k in enumerate(key.indices, start=1):
        inv[k - 1] = i
    return ShuffleKey(tuple(inv), key.mode, key.block_size)


def key_space_size(cipher: str, mode: str, M: int) -> int:
    """Number of distinct keys: (M^2)!, 2^(M^2), M! or 2^M."""
    L = key_length(mode, M)
    if cipher == "shuffle":
        return math.factorial(L)
    if cipher == "flip":
        return 2**L
    raise ParameterError(f"cipher must be one of {CIPHERS}, got {cipher!r}")


def serialize_key(key: Key) -> str:
    payload = key.indices if isinstance(key, ShuffleKey) else key.bits
    return (
        f"{MAGIC}\ncipher={key.cipher}\nmode={key.mode}\nM={key.block_size}\n"
        + " ".join(str(v) for v in payload)
        + "\n"
    )


def _field(line: str, name: str) -> str:
    prefix = name + "="
    if not line.startswith(prefix):
        raise KeyParseError(name, f"expected '{prefix}...', got {line!r}")
    return line[len(prefix):]


def _int_token(tok: str, field: str) -> int:
    # no signs, no leading '+', no whitespace variants
    if not tok.isdigit() or not tok.isascii():
        raise KeyParseError(field, f"not a non-negative integer: {tok!r}")
    return int(tok)


def parse_key(text: str) -> Key:
    if not text.endswith("\n"):
        raise KeyParseError("format", "missing trailing newline")
    lines = text[:-1].split("\n")
    if len(lines) != 5:
        raise KeyParseError("format", f"expected 5 lines, got {len(lines)}")
    if lines[0] != MAGIC:
        raise KeyParseError("magic", f"expected {MAGIC!r}, got {lines[0]!r}")
    cipher = _field(lines[1], "cipher")
    if cipher not in CIPHERS:
        raise KeyParseError("cipher", f"unknown cipher {cipher!r}")
    mode = _field(lines[2], "mode")
    if mode not in MODES:
        raise KeyParseError("mode", f"unknown mode {mode!r}")
    M = _int_token(_field(lines[3], "M"), "M")
    if M < 1:
        raise KeyParseError("M", "block size must be >= 1")
    tokens = lines[4].split(" ")
    values = [_int_token(t, "payload") for t in tokens]
    L = key_length(mode, M)
    if len(values) != L:
        raise KeyParseError("payload", f"expected {L} values, got {len(values)}")
    if cipher == "shuffle":
        if sorted(values) != list(range(1, L + 1)):
            raise KeyParseError("payload", f"indices are not a bijection on 1..{L}")
        return ShuffleKey(tuple(values), mode, M)
    if any(v not in (0, 1) for v in values):
        raise KeyParseError("payload", "invalid bit (flip key values must be 0 or 1)")
    return FlipKey(tuple(values), mode, M)


def key_fingerprint(key: Key) -> str:
    return hashlib.sha256(serialize_key(key).encode("ascii")).hexdigest()[:16]


def write_key(key: Key, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(serialize_key(key))


def read_key(path) -> Key:
    with open(path, "r", encoding="ascii", newline="") as fh:
        return parse_key(fh.read())
