"""Attacks used to judge how much an encrypted spectrogram still leaks.

Two families:

* phase reconstruction: turn a (possibly encrypted) magnitude spectrogram
  back into audio with Griffin-Lim or phase-gradient heuristic integration
  (PGHI), then compare against the original audio;
* key recovery: a ciphertext-only search for the block key that makes the
  trial decryption smoothest. This is a transparent stand-in for image
  jigsaw-style attacks; it assumes the attacker knows the block size.
"""

from __future__ import annotations

import heapq
import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .blocking import BlockSpec, assemble, partition
from .cipher import EncryptedSignal, encrypt
from .dsp import (
    ByteScale,
    ComplexSpectrogram,
    Spectrogram,
    StftParams,
    Waveform,
    istft,
    log_magnitude,
    magnitude,
    stft,
    to_linear_magnitude,
)
from .errors import ParameterError
from .keys import FlipKey, Key, ShuffleKey, SplitMix64, key_space_size
from .metrics import log_lsd_db, lsd_db, snr_db, spectral_convergence

# Equivalent Gaussian time-frequency ratio of a Hann window of length L is
# HANN_GAMMA * L**2 (in samples^2).
HANN_GAMMA = 0.25645


# --- phase reconstruction --------------------------------------------------

@dataclass(frozen=True)
class PhaseReconConfig:
    method: str = "griffin_lim"
    iterations: int = 100
    relative_threshold: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("griffin_lim", "pghi"):
            raise ParameterError(f"unknown phase reconstruction method {self.method!r}")
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")
        if not 0.0 < self.relative_threshold < 1.0:
            raise ParameterError("relative_threshold must be in (0, 1)")


def _frames_length(n_frames: int, p: StftParams) -> int:
    # signal length whose STFT has exactly n_frames frames
    return (n_frames - 1) * p.hop + p.window_length - 2 * (p.window_length // 2)


def griffin_lim(mag, params: StftParams, iterations: int = 100, length: int | None = None,
                history: list | None = None) -> Waveform:
    """Alternating projections starting from zero phase.

    If ``history`` is a list, the spectral convergence of every iterate is
    appended to it.
    """
    mag = np.asarray(mag, dtype=np.float64)
    n = _frames_length(mag.shape[0], params)
    Z = mag.astype(np.complex128)
    for _ in range(iterations):
        x = istft(ComplexSpectrogram.from_complex(Z, params), length=n)
        C = stft(x, params).complex
        A = np.abs(C)
        if history is not None:
            history.append(spectral_convergence(mag, A))
        unit = np.ones_like(C)
        nz = A > 0
        unit[nz] = C[nz] / A[nz]
        Z = mag * unit
    return istft(ComplexSpectrogram.from_complex(Z, params), length=length or n)


def pghi_phase(mag, params: StftParams, relative_threshold: float = 1e-7, seed: int = 0) -> np.ndarray:
    """Phase (in the STFT's own frame-start convention) estimated from magnitude alone.

    Phase derivatives come from the log-magnitude gradients of a Gaussian
    window with the Hann-equivalent ratio, and are integrated along a
    max-heap of magnitudes so that phase spreads outward from the strongest
    coefficients. Coefficients below ``relative_threshold * max`` get a
    seeded random phase.
    """
    mag = np.asarray(mag, dtype=np.float64)
    T, K = mag.shape
    a, N = params.hop, params.fft_size
    lam = HANN_GAMMA * params.window_length**2
    s = np.log(mag + 1e-300 + np.finfo(float).tiny)
    ds_dm = np.gradient(s, axis=0) if T > 1 else np.zeros_like(s)
    ds_dk = np.gradient(s, axis=1) if K > 1 else np.zeros_like(s)
    k = np.arange(K)[None, :]
    dphi_dm = a * (2 * np.pi * k / N + (N / lam) * ds_dk)
    dphi_dk = -(lam / (N * a)) * ds_dm

    rng = np.random.default_rng(seed)
    phase = rng.uniform(-np.pi, np.pi, size=(T, K))
    peak = mag.max() if mag.size else 0.0
    todo = mag > relative_threshold * peak if peak > 0 else np.zeros_like(mag, dtype=bool)
    flat_order = np.argsort(-mag, axis=None, kind="stable")
    cursor = 0
    heap: list = []
    while True:
        while cursor < flat_order.size and not todo.flat[flat_order[cursor]]:
            cursor += 1
        if cursor >= flat_order.size:
            break
        m0, k0 = divmod(int(flat_order[cursor]), K)
        phase[m0, k0] = 0.0
        todo[m0, k0] = False
        heapq.heappush(heap, (-mag[m0, k0], m0, k0))
        while heap:
            _, m, kk = heapq.heappop(heap)
            for mm, kn, step in ((m + 1, kk, 0), (m - 1, kk, 1), (m, kk + 1, 2), (m, kk - 1, 3)):
                if not (0 <= mm < T and 0 <= kn < K) or not todo[mm, kn]:
                    continue
                if step == 0:
                    phase[mm, kn] = phase[m, kk] + 0.5 * (dphi_dm[m, kk] + dphi_dm[mm, kn])
                elif step == 1:
                    phase[mm, kn] = phase[m, kk] - 0.5 * (dphi_dm[m, kk] + dphi_dm[mm, kn])
                elif step == 2:
                    phase[mm, kn] = phase[m, kk] + 0.5 * (dphi_dk[m, kk] + dphi_dk[mm, kn])
                else:
                    phase[mm, kn] = phase[m, kk] - 0.5 * (dphi_dk[m, kk] + dphi_dk[mm, kn])
                todo[mm, kn] = False
                heapq.heappush(heap, (-mag[mm, kn], mm, kn))
    # derivatives above assume a window-centred phase reference; frames start half a window earlier
    centre = params.window_length // 2
    return phase - 2 * np.pi * k * centre / N


def phase_reconstruct(S: Spectrogram, cfg: PhaseReconConfig = PhaseReconConfig(),
                      length: int | None = None) -> Waveform:
    if S.kind != "linear_magnitude":
        raise ParameterError(f"phase reconstruction needs a linear_magnitude spectrogram, got {S.kind}")
    params = S.params
    params.validate()
    if S.values.shape[1] != params.n_bins:
        raise ParameterError(f"spectrogram has {S.values.shape[1]} bins, STFT params imply {params.n_bins}")
    mag = np.abs(S.values)
    if cfg.method == "griffin_lim":
        return griffin_lim(mag, params, cfg.iterations, length)
    phi = pghi_phase(mag, params, cfg.relative_threshold, cfg.seed)
    n = length if length is not None else _frames_length(mag.shape[0], params)
    return istft(ComplexSpectrogram.from_complex(mag * np.exp(1j * phi), params), length=n)


@dataclass(frozen=True)
class ReconMetrics:
    lsd_db: float
    snr_db: float | None


def evaluate_reconstruction(original: Waveform, reconstructed: Waveform,
                            params: StftParams | None = None) -> ReconMetrics:
    if original.sample_rate != reconstructed.sample_rate:
        raise ParameterError(
            f"sample rates differ: {original.sample_rate} vs {reconstructed.sample_rate}"
        )
    n = min(len(original.samples), len(reconstructed.samples))
    a = Waveform(original.samples[:n], original.sample_rate)
    b = Waveform(reconstructed.samples[:n], reconstructed.sample_rate)
    p = params or StftParams(sample_rate=original.sample_rate)
    lsd = lsd_db(magnitude(stft(a, p)).values, magnitude(stft(b, p)).values)
    snr = snr_db(a.samples, b.samples) if np.any(a.samples) else None
    return ReconMetrics(lsd, snr)


def encrypted_phase_attack(wave: Waveform, key: Key | None, cfg: PhaseReconConfig = PhaseReconConfig(),
                           params: StftParams | None = None) -> tuple[Waveform, ReconMetrics]:
    """Encrypt the log-magnitude spectrogram of ``wave`` (or not, if ``key`` is None),
    rebuild audio from it and score the result against ``wave``."""
    p = params or StftParams(sample_rate=wave.sample_rate)
    logspec = log_magnitude(stft(wave, p))
    if key is not None:
        spec = BlockSpec("2d", key.block_size, "passthrough")
        logspec = Spectrogram(encrypt(logspec.values, key, spec).data, "log_magnitude", logspec.params)
    rec = phase_reconstruct(to_linear_magnitude(logspec), cfg, length=len(wave.samples))
    return rec, evaluate_reconstruction(wave, rec, p)


# --- key recovery ------------------------------------------------------------

@dataclass
class AttackReport:
    recovered_key: Key | None
    key_accuracy: float | None
    lsd_db: float | None
    snr_db: float | None
    candidates: int
    objective: float
    search: str
    restarts: int = 0
    extra: dict = field(default_factory=dict)

    def to_line(self) -> str:
        if self.recovered_key is None:
            key = "none"
        elif isinstance(self.recovered_key, ShuffleKey):
            key = ",".join(map(str, self.recovered_key.indices))
        else:
            key = "".join(map(str, self.recovered_key.bits))
        acc = "none" if self.key_accuracy is None else f"{self.key_accuracy:.6f}"
        lsd = "none" if self.lsd_db is None else f"{self.lsd_db:.6f}"
        return f"key={key} accuracy={acc} lsd_db={lsd} candidates={self.candidates}"


def parse_attack_report(line: str) -> dict:
    out = {}
    for tok in line.strip().split(" "):
        name, _, value = tok.partition("=")
        if not _:
            raise ParameterError(f"malformed report token {tok!r}")
        out[name] = value
    missing = {"key", "accuracy", "lsd_db", "candidates"} - out.keys()
    if missing:
        raise ParameterError(f"report lacks {sorted(missing)}")
    out["candidates"] = int(out["candidates"])
    for name in ("accuracy", "lsd_db"):
        out[name] = None if out[name] == "none" else float(out[name])
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("KSC_THREADS", "1")))
    except ValueError:
        return 1


class SmoothnessObjective:
    """Total variation of a trial decryption, evaluated from precomputed tables.

    The objective is the sum of ``|a - b|`` over all horizontally and
    vertically adjacent cell pairs of the whole decrypted image (inside
    blocks, across block borders and against the untouched remainder), plus,
    for flipping, ``negativity_weight`` times the total negative mass.

    Shuffle candidates are given as ``src`` arrays: decrypted position ``p``
    takes ciphertext position ``src[p]`` (``src`` is the inverse of the key,
    0-based). Flip candidates are bit arrays.
    """

    def __init__(self, values: np.ndarray, M: int, cipher: str, negativity_weight: float = 0.0):
        self.M, self.cipher = M, cipher
        self.negativity_weight = negativity_weight
        spec = BlockSpec("2d", M, "passthrough")
        grid = partition(values, spec)
        R, C = grid.grid_dims
        if R * C == 0:
            raise ParameterError(f"image {values.shape} holds no complete {M}x{M} block")
        self.L = M * M
        B = grid.blocks.reshape(R, C, self.L)
        pos = lambda t, f: t * M + f  # noqa: E731
        # (p, q, "kind") adjacency list with kind in {int, t, f}
        pairs = []
        for t in range(M):
            for f in range(M):
                if t + 1 < M:
                    pairs.append((pos(t, f), pos(t + 1, f), "int"))
                if f + 1 < M:
                    pairs.append((pos(t, f), pos(t, f + 1), "int"))
        for f in range(M):
            pairs.append((pos(M - 1, f), pos(0, f), "t"))
        for t in range(M):
            pairs.append((pos(t, M - 1), pos(t, 0), "f"))
        self.pairs = pairs
        # neighbour block sets for cross-border adjacencies
        left = {"int": B.reshape(-1, self.L), "t": B[:-1].reshape(-1, self.L), "f": B[:, :-1].reshape(-1, self.L)}
        right = {"int": B.reshape(-1, self.L), "t": B[1:].reshape(-1, self.L), "f": B[:, 1:].reshape(-1, self.L)}
        # unary terms: block cells bordering the remainder
        bottom, rightrem = grid.remainder
        unary_vals = [[] for _ in range(self.L)]  # per position: list of (ciphertext column, neighbour values)
        if bottom.shape[0] > 0:
            row = bottom[0]
            for f in range(M):
                unary_vals[pos(M - 1, f)].append((B[R - 1, :, :], row[f : C * M : M][:C]))
        if rightrem.shape[1] > 0:
            col = rightrem[:, 0]
            for t in range(M):
                unary_vals[pos(t, M - 1)].append((B[:, C - 1, :], col[t : R * M : M][:R]))
        # constant: adjacencies entirely inside the remainder
        full = np.asarray(values, dtype=np.float64)
        mask = np.ones(full.shape, dtype=bool)
        mask[: R * M, : C * M] = False
        const = 0.0
        for axis in (0, 1):
            d = np.abs(np.diff(full, axis=axis))
            m = mask[1:, :] & mask[:-1, :] if axis == 0 else mask[:, 1:] & mask[:, :-1]
            const += float(d[m].sum())
        self.const = const
        neg = np.maximum(0.0, -B.reshape(-1, self.L))
        negf = np.maximum(0.0, B.reshape(-1, self.L))

        if cipher == "shuffle":
            tables = {}
            for kind in ("int", "t", "f"):
                Lb, Rb = left[kind], right[kind]
                if Lb.shape[0] == 0:
                    tables[kind] = np.zeros((self.L, self.L))
                else:
                    tables[kind] = np.abs(Lb[:, :, None] - Rb[:, None, :]).sum(axis=0)
            self.pair_tables = [tables[kind] for _, _, kind in pairs]
            U = np.zeros((self.L, self.L))  # U[p, u]: ciphertext position u placed at p
            for p in range(self.L):
                for cells, nb in unary_vals[p]:
                    U[p] += np.abs(cells - nb[:, None]).sum(axis=0)
            self.unary = U
        elif cipher == "flip":
            sign = np.array([1.0, -1.0])  # bit 0 keeps, bit 1 negates
            self.pair_tables = []
            for p, q, kind in pairs:
                a, b = left[kind][:, p], right[kind][:, q]
                T = np.empty((2, 2))
                for i in range(2):
                    for j in range(2):
                        T[i, j] = np.abs(sign[i] * a - sign[j] * b).sum()
                self.pair_tables.append(T)
            U = np.zeros((self.L, 2))
            for p in range(self.L):
                for i in range(2):
                    for cells, nb in unary_vals[p]:
                        U[p, i] += np.abs(sign[i] * cells[:, p] - nb).sum()
                U[p, 0] += negativity_weight * neg[:, p].sum()
                U[p, 1] += negativity_weight * negf[:, p].sum()
            self.unary = U
        else:
            raise ParameterError(f"unknown cipher {cipher!r}")

    def __call__(self, cands: np.ndarray) -> np.ndarray:
        """Objective for a ``(k, L)`` batch of candidates (src arrays or bit arrays)."""
        cands = np.asarray(cands, dtype=np.intp)
        if cands.ndim == 1:
            cands = cands[None, :]
        total = np.full(cands.shape[0], self.const)
        for (p, q, _), T in zip(self.pairs, self.pair_tables):
            total += T[cands[:, p], cands[:, q]]
        total += self.unary[np.arange(self.L)[None, :], cands].sum(axis=1)
        return total


def trial_decrypt(values: np.ndarray, cand, cipher: str, M: int) -> np.ndarray:
    """Apply a candidate directly (oracle path for ``SmoothnessObjective``)."""
    spec = BlockSpec("2d", M, "passthrough")
    grid = partition(np.asarray(values, dtype=np.float64), spec)
    if cipher == "shuffle":
        grid.blocks = grid.blocks[:, np.asarray(cand, dtype=np.intp)]
    else:
        mask = np.asarray(cand, dtype=bool)
        grid.blocks[:, mask] = -grid.blocks[:, mask]
    return assemble(grid)


def total_variation(img: np.ndarray) -> float:
    return float(np.abs(np.diff(img, axis=0)).sum() + np.abs(np.diff(img, axis=1)).sum())


def _key_from_candidate(cand, cipher: str, M: int) -> Key:
    if cipher == "shuffle":
        src = np.asarray(cand)
        key = np.empty_like(src)
        key[src] = np.arange(len(src))  # key = inverse of src
        return ShuffleKey(tuple(int(v) + 1 for v in key), "2d", M)
    return FlipKey(tuple(int(b) for b in cand), "2d", M)


def _candidate_from_key(key: Key) -> np.ndarray:
    if isinstance(key, ShuffleKey):
        return np.argsort(np.asarray(key.zero_based))
    return np.asarray(key.bits, dtype=np.intp)


def _key_tuple(cand, cipher: str) -> tuple:
    if cipher == "shuffle":
        return tuple(np.argsort(np.asarray(cand)))
    return tuple(int(b) for b in cand)


def _evaluate(objective: SmoothnessObjective, cands: np.ndarray, chunk: int = 8192) -> np.ndarray:
    chunks = [cands[i : i + chunk] for i in range(0, len(cands), chunk)]
    threads = _threads()
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(objective, chunks))
    else:
        parts = [objective(c) for c in chunks]
    return np.concatenate(parts) if parts else np.empty(0)


def _enumerate_keys(cipher: str, L: int):
    """All keys in lexicographic key order, as candidate arrays, in batches."""
    if cipher == "shuffle":
        it = itertools.permutations(range(L))
        while True:
            batch = list(itertools.islice(it, 50000))
            if not batch:
                return
            keys = np.asarray(batch, dtype=np.intp)
            yield np.argsort(keys, axis=1)
    else:
        total = 1 << L
        for start in range(0, total, 1 << 16):
            ints = np.arange(start, min(total, start + (1 << 16)), dtype=np.int64)
            shifts = np.arange(L - 1, -1, -1, dtype=np.int64)
            yield ((ints[:, None] >> shifts[None, :]) & 1).astype(np.intp)


def _neighbours(cand: np.ndarray, cipher: str) -> np.ndarray:
    L = len(cand)
    if cipher == "shuffle":
        out = []
        for i in range(L):
            for j in range(i + 1, L):
                c = cand.copy()
                c[i], c[j] = c[j], c[i]
                out.append(c)
        return np.asarray(out)
    out = np.repeat(cand[None, :], L, axis=0)
    out[np.arange(L), np.arange(L)] ^= 1
    return out


def _restart_candidate(cipher: str, L: int, seed: int, restart: int) -> np.ndarray:
    rng = SplitMix64((seed * 0x100000001B3 + restart) & ((1 << 64) - 1))
    if cipher == "shuffle":
        perm = list(range(L))
        for i in range(L - 1, 0, -1):
            j = rng.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.asarray(perm, dtype=np.intp)
    return np.asarray([rng.next() & 1 for _ in range(L)], dtype=np.intp)


def _better(val: float, cand, best_val: float, best_cand, cipher: str) -> bool:
    if best_cand is None or val < best_val:
        return True
    return val == best_val and _key_tuple(cand, cipher) < _key_tuple(best_cand, cipher)


def key_recovery_attack(Y: EncryptedSignal | np.ndarray, cipher: str, M: int, budget: int = 100_000, *,
                        scale: ByteScale | None = None, truth: Key | None = None,
                        reference: np.ndarray | None = None, reference_db_per_neper: float | None = None,
                        negativity_weight: float | None = None, init: Key | None = None,
                        seed: int = 0) -> AttackReport:
    """Search for the block key of a byte-scaled 2-D ciphertext.

    The whole key space is enumerated (in lexicographic key order) when it
    holds at most ``budget`` keys. Otherwise a steepest-descent hill climb
    runs over transpositions (shuffle) or single-bit flips (flip): restart 0
    begins at ``init`` (default: identity / all-zero key), restart ``r >= 1``
    at a seeded random key, and a restart begins whenever no neighbour
    improves. Every evaluated candidate counts against ``budget``. Ties go to
    the lexicographically smallest key.

    ``scale`` maps the bytes back to signal units before trial decryption.
    ``negativity_weight`` (default 1.0 for flip, unused for shuffle) adds the
    prior that the plaintext is non-negative. When ``reference`` is given,
    ``lsd_db`` compares the trial decryption with it: in natural-log units via
    ``reference_db_per_neper``, or as linear magnitudes when that is None.
    """
    if budget < 1:
        raise ParameterError("budget must be >= 1")
    data = Y.data if isinstance(Y, EncryptedSignal) else np.asarray(Y, dtype=np.float64)
    if data.ndim != 2:
        raise ParameterError("key recovery works on 2-D spectrogram images")
    values = scale.invert(data) if scale is not None else np.asarray(data, dtype=np.float64)
    if negativity_weight is None:
        negativity_weight = 1.0 if cipher == "flip" else 0.0
    objective = SmoothnessObjective(values, M, cipher, negativity_weight)
    L = M * M
    space = key_space_size(cipher, "2d", M)

    best_val, best_cand = float("inf"), None
    evaluated, restarts = 0, 0
    if space <= budget:
        search = "exhaustive"
        for cands in _enumerate_keys(cipher, L):
            vals = _evaluate(objective, cands)
            evaluated += len(cands)
            i = int(np.argmin(vals))  # first minimum = smallest key in this batch
            if best_cand is None or vals[i] < best_val:
                best_val, best_cand = float(vals[i]), cands[i].copy()
    else:
        search = "hill-climb"
        current = _candidate_from_key(init) if init is not None else (
            np.arange(L, dtype=np.intp) if cipher == "shuffle" else np.zeros(L, dtype=np.intp))
        cur_val = float(objective(current)[0])
        evaluated = 1
        best_val, best_cand = cur_val, current.copy()
        while evaluated < budget:
            nb = _neighbours(current, cipher)[: budget - evaluated]
            vals = _evaluate(objective, nb)
            evaluated += len(nb)
            i = int(np.argmin(vals))
            if vals[i] < cur_val:
                current, cur_val = nb[i], float(vals[i])
                if _better(cur_val, current, best_val, best_cand, cipher):
                    best_val, best_cand = cur_val, current.copy()
                continue
            if evaluated >= budget:
                break
            restarts += 1
            current = _restart_candidate(cipher, L, seed, restarts)
            cur_val = float(objective(current)[0])
            evaluated += 1
            if _better(cur_val, current, best_val, best_cand, cipher):
                best_val, best_cand = cur_val, current.copy()

    key = _key_from_candidate(best_cand, cipher, M)
    accuracy = None
    if truth is not None:
        t = truth.indices if isinstance(truth, ShuffleKey) else truth.bits
        r = key.indices if isinstance(key, ShuffleKey) else key.bits
        accuracy = float(np.mean(np.asarray(t) == np.asarray(r)))
    lsd = None
    if reference is not None:
        decrypted = trial_decrypt(values, best_cand, cipher, M)
        if reference_db_per_neper is None:
            lsd = lsd_db(reference, decrypted)
        else:
            lsd = log_lsd_db(reference, decrypted, reference_db_per_neper)
    return AttackReport(key, accuracy, lsd, None, evaluated, best_val, search, restarts)
