"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line."""

import itertools
import os
import subprocess
import sys
import time

import numpy as np
from conftest import ACCEPTANCE, ARCTIC
from scipy.io import wavfile

from ksc.attacks import encrypted_phase_attack, key_recovery_attack
from ksc.blocking import BlockSpec
from ksc.cipher import decrypt, encrypt
from ksc.dsp import Spectrogram, StftParams, log_mel, read_wav, scale_to_byte_range, stft
from ksc.keys import (
    FlipKey,
    ShuffleKey,
    generate_flip_key,
    generate_key,
    generate_shuffle_key,
    key_space_size,
)
from ksc.patch_embed import PatchEmbedKernel, embed, random_kernel, transform_kernel, verify_scenarios
from ksc.presets import PRESETS

LOG_POWER_DB = 10 / np.log(10)


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def random_signal(rng, mode, P):
    if mode == "2d":
        return rng.standard_normal((P * int(rng.integers(1, 7)) + int(rng.integers(0, P)),
                                    P * int(rng.integers(1, 7)) + int(rng.integers(0, P))))
    return rng.standard_normal(P * int(rng.integers(1, 31)) + int(rng.integers(0, P)))


def test_1_commutation():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = {}
    for cipher, mode in itertools.product(("shuffle", "flip"), ("2d", "1d")):
        bad, max_rel = 0, 0.0
        for _ in range(1000):
            P = int(rng.integers(1, 9))
            d = int(rng.integers(1, 17))
            X = random_signal(rng, mode, P)
            E = PatchEmbedKernel(rng.standard_normal((P, P, d) if mode == "2d" else (P, d)), mode)
            key = generate_key(cipher, int(rng.integers(0, 2**63)), mode, P)
            ref = embed(X, E, strict=False)
            got = embed(encrypt(X, key, BlockSpec(mode, P, "passthrough")).data, transform_kernel(E, key), strict=False)
            if cipher == "flip":
                bad += got.tobytes() != ref.tobytes()
            else:
                rel = np.linalg.norm(got - ref) / np.linalg.norm(ref)
                max_rel = max(max_rel, rel)
                bad += rel > 1e-12
        worst[(cipher, mode)] = (bad, max_rel)
    elapsed = time.perf_counter() - start
    ok = all(b == 0 for b, _ in worst.values()) and elapsed < 60
    detail = ", ".join(f"{c}/{m}: {b} bad, max_rel={r:.1e}" for (c, m), (b, r) in worst.items())
    assert record(1, ok, f"4x1000 triples ({detail}) in {elapsed:.1f}s"), worst


def test_2_wrong_key_degradation(arctic):
    lm = log_mel(stft(arctic)).values
    rng = np.random.default_rng(7)
    results = {}
    for cipher in ("shuffle", "flip"):
        hits = 0
        for _ in range(1000):
            T = int(rng.integers(12, 61))
            t0 = int(rng.integers(0, lm.shape[0] - T))
            X = lm[t0 : t0 + T]
            E = random_kernel(3, int(rng.integers(1, 17)), "2d", seed=int(rng.integers(0, 2**63)))
            kc = generate_key(cipher, int(rng.integers(0, 2**63)), "2d", 3)
            while True:
                ki = generate_key(cipher, int(rng.integers(0, 2**63)), "2d", 3)
                identity = ki == (ShuffleKey(tuple(range(1, 10)), "2d", 3) if cipher == "shuffle"
                                  else FlipKey((0,) * 9, "2d", 3))
                if ki != kc and not identity:
                    break
            r = verify_scenarios(X, E, cipher, kc, ki)
            hits += r.mean_rel_diff_incorrect > 1e-3
        results[cipher] = hits / 1000
    ok = all(v >= 0.99 for v in results.values())
    assert record(2, ok, "fraction with mean_rel_diff_incorrect > 1e-3: "
                  + ", ".join(f"{c}={v:.3f}" for c, v in results.items())), results


def test_3_round_trip():
    rng = np.random.default_rng(3)
    failures = 0
    cases = [("2d", 3, (80, 100)), ("1d", 10, None)]
    for mode, M, shape in cases:
        spec = BlockSpec(mode, M, "passthrough")
        for i in range(100):
            X = rng.standard_normal(shape if shape else int(rng.integers(1000, 5000)))
            for key in (generate_shuffle_key(i, mode, M), generate_flip_key(i, mode, M)):
                failures += decrypt(encrypt(X, key, spec), key).tobytes() != X.tobytes()
    assert record(3, failures == 0, f"{failures} of 400 round trips differ (80x100 M=3, 1-D M=10)")


def test_4_key_space():
    block = np.array([[1.0, 2.0], [3.0, 4.0]])
    spec = BlockSpec("2d", 2)
    shuf = {encrypt(block, ShuffleKey(p, "2d", 2), spec).data.tobytes()
            for p in itertools.permutations((1, 2, 3, 4))}
    flip = {encrypt(block, FlipKey(b, "2d", 2), spec).data.tobytes()
            for b in itertools.product((0, 1), repeat=4)}
    ok = len(shuf) == key_space_size("shuffle", "2d", 2) == 24 and len(flip) == key_space_size("flip", "2d", 2) == 16
    assert record(4, ok, f"shuffle {len(shuf)} distinct, flip {len(flip)} distinct")


def test_5_presets():
    asr, asv = PRESETS["asr3"], PRESETS["asv10"]
    ok = (asr.mode, asr.M, asr.feature, asr.n_mels) == ("2d", 3, "log_mel", 80) and (asv.mode, asv.M) == ("1d", 10)
    assert record(5, ok, f"asr3=({asr.mode}, M={asr.M}, {asr.n_mels} {asr.feature}) asv10=({asv.mode}, M={asv.M})")


def test_6_phase_reconstruction(clips):
    start = time.perf_counter()
    wins = {"shuffle": 0, "flip": 0}
    rows = []
    for i, clip in enumerate(clips):
        _, plain = encrypted_phase_attack(clip, None)
        row = [plain.lsd_db]
        for cipher in wins:
            _, m = encrypted_phase_attack(clip, generate_key(cipher, i, "2d", 3))
            wins[cipher] += m.lsd_db > plain.lsd_db
            row.append(m.lsd_db)
        rows.append(row)
    elapsed = time.perf_counter() - start
    med = np.median(rows, axis=0)
    ok = len(clips) >= 10 and all(w >= 9 for w in wins.values()) and elapsed < 300
    assert record(6, ok, f"encrypted LSD > plain LSD: shuffle {wins['shuffle']}/10, flip {wins['flip']}/10 "
                  f"(median LSD plain {med[0]:.2f}, shuffle {med[1]:.2f}, flip {med[2]:.2f} dB) in {elapsed:.1f}s")


def test_7a_exhaustive_smooth_m2():
    t, f = np.meshgrid(np.arange(20), np.arange(24), indexing="ij")
    img = 3.0 * t + f + 0.01 * t * f + 5.0
    accs = []
    for cipher in ("shuffle", "flip"):
        for seed in range(10):
            key = generate_key(cipher, seed, "2d", 2)
            Y = Spectrogram(encrypt(img, key, BlockSpec("2d", 2)).data, "log_mel", StftParams())
            scaled, rec = scale_to_byte_range(Y)
            rep = key_recovery_attack(scaled.values, cipher, 2, scale=rec, truth=key)
            accs.append(rep.key_accuracy if rep.search == "exhaustive" else -1.0)
    ok = min(accs) == 1.0
    assert record("7a", ok, f"exhaustive M=2 on smooth images: min accuracy {min(accs):.3f} over 20 keys")


def test_7b_hill_climb_m3_speech(clips):
    accs, lsds = [], []
    for i, clip in enumerate(clips):
        plain = log_mel(stft(clip))
        key = generate_shuffle_key(100 + i, "2d", 3)
        Y = Spectrogram(encrypt(plain.values, key, BlockSpec("2d", 3, "passthrough")).data, "log_mel", plain.params)
        scaled, rec = scale_to_byte_range(Y)
        rep = key_recovery_attack(scaled.values, "shuffle", 3, 100_000, scale=rec, truth=key,
                                  reference=plain.values, reference_db_per_neper=LOG_POWER_DB)
        accs.append(rep.key_accuracy)
        lsds.append(rep.lsd_db)
    med = float(np.median(accs))
    ok = med < 1.0 and all(v is not None for v in lsds)
    assert record("7b", ok, f"hill-climb M=3, budget 1e5: median key_accuracy {med:.3f} (want < 1.0), "
                  f"accuracies {[round(a, 2) for a in accs]}, decrypted LSD median {np.median(lsds):.3f} dB"), (
        f"median key_accuracy {med} is not below 1.0"
    )


def test_8_cli_determinism(tmp_path):
    short = tmp_path / "s.wav"
    wavfile.write(short, 16000, read_wav(ARCTIC).samples[:16000].astype(np.float32))

    def run_all(tag, threads):
        d = tmp_path / tag
        d.mkdir()
        steps = [
            ["keygen", "--cipher", "shuffle", "--M", "3", "--seed", "11", "-o", d / "k.key"],
            ["keygen", "--cipher", "flip", "--preset", "asv10", "--seed", "11", "-o", d / "w.key"],
            ["features", "-i", short, "-o", d / "x.spg", "--preset", "asr3"],
            ["features", "-i", short, "-o", d / "m.spg", "--kind", "log_magnitude"],
            ["encrypt", "-k", d / "k.key", "-i", d / "x.spg", "-o", d / "y.spg"],
            ["encrypt", "-k", d / "k.key", "-i", d / "m.spg", "-o", d / "my.spg"],
            ["encrypt", "-k", d / "w.key", "-i", short, "-o", d / "y.wav"],
            ["export-image", "-i", d / "y.spg", "-o", d / "y.pgm"],
            ["kernel-transform", "--random", "--M", "3", "--seed", "5", "-o", d / "e.krn"],
            ["kernel-transform", "-k", d / "k.key", "-i", d / "e.krn", "-o", d / "e2.krn"],
            ["embed", "-i", d / "y.spg", "--kernel", d / "e2.krn", "-o", d / "z.npy"],
            ["verify", "--preset", "asr3", "--seed", "11", "-i", short, "-o", d / "v.txt"],
            ["attack-key", "-i", d / "y.spg", "--cipher", "shuffle", "--M", "3", "--budget", "20000",
             "--seed", "2", "--truth", d / "k.key", "--reference", d / "x.spg", "-o", d / "a.txt"],
            ["attack-phase", "-i", d / "my.spg", "-o", d / "p.wav", "--method", "pghi", "--seed", "3"],
            ["attack-phase", "-i", d / "my.spg", "-o", d / "g.wav", "--iterations", "10"],
        ]
        env = dict(os.environ, KSC_THREADS=str(threads))
        for argv in steps:
            out = subprocess.run([sys.executable, "-m", "ksc.cli", *map(str, argv)], env=env, capture_output=True)
            assert out.returncode == 0, (argv, out.stderr)
        return {p.name: p.read_bytes() for p in sorted(d.iterdir())}

    runs = [run_all("r1", 1), run_all("r2", 1), run_all("r3", 4)]
    same = all(r == runs[0] for r in runs[1:])
    assert record(8, same, f"{len(runs[0])} artifacts byte-identical over 3 runs (KSC_THREADS=1,1,4)")

