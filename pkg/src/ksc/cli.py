"""Command line front end: ``ksc <subcommand> ...``."""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from . import dsp
from .attacks import PhaseReconConfig, evaluate_reconstruction, key_recovery_attack, phase_reconstruct
from .blocking import BlockSpec
from .cipher import as_encrypted, decrypt, encrypt
from .errors import KeyMismatchError, KscError, ParameterError
from .keys import generate_key, read_key, write_key
from .metrics import log_lsd_db, lsd_db, snr_db, tensor_diff
from .patch_embed import embed, random_kernel, read_kernel, transform_kernel, verify_scenarios, write_kernel
from .presets import get_preset

EXIT_CODES = """exit codes:
  0  success
  1  other error
  2  bad command line
  3  invalid parameter
  4  dimension error (signal vs block/patch size)
  5  key mismatch (mode, size or cipher)
  6  malformed file
  7  inconsistent block structure
  8  file not found / unreadable / unwritable
"""

LN10 = np.log(10.0)


def _out(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _sniff(path: str) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == dsp.SPG_MAGIC:
        return "spg"
    if head == dsp.STC_MAGIC:
        return "stc"
    if head == b"RIFF":
        return "wav"
    if head == b"KRN1":
        return "krn"
    raise KscError(f"{path}: unrecognised file type")


def _read_signal(path: str):
    """Returns (values, mode, writer) for a spectrogram or waveform file."""
    kind = _sniff(path)
    if kind == "spg":
        spec = dsp.read_spectrogram(path)
        return spec.values, "2d", lambda v, p: dsp.write_spectrogram(dsp.Spectrogram(v, spec.kind, spec.params), p)
    if kind == "wav":
        wave = dsp.read_wav(path)
        return wave.samples, "1d", lambda v, p: dsp.write_wav(dsp.Waveform(v, wave.sample_rate), p)
    raise KscError(f"{path}: expected a spectrogram (.spg) or WAV file")


def _stft_params(args, sample_rate: int) -> dsp.StftParams:
    return dsp.StftParams(args.window_length, args.hop, args.fft_size, sample_rate)


def _mode_and_M(args):
    if getattr(args, "preset", None):
        p = get_preset(args.preset)
        return p.mode, p.M
    if args.M is None:
        raise ParameterError("--M (or --preset) is required")
    return args.mode, args.M


# --- subcommands -------------------------------------------------------------

def cmd_keygen(args):
    mode, M = _mode_and_M(args)
    write_key(generate_key(args.cipher, args.seed, mode, M), args.output)


def _crypt(args, forward: bool):
    key = read_key(args.key)
    values, mode, writer = _read_signal(args.input)
    if key.mode != mode:
        raise KeyMismatchError(f"{key.mode} key cannot be applied to a {mode} signal")
    spec = BlockSpec(mode, key.block_size, args.remainder)
    if forward:
        out = encrypt(values, key, spec).data
    else:
        out = decrypt(as_encrypted(values, key, spec), key)
    writer(out, args.output)


def cmd_encrypt(args):
    _crypt(args, True)


def cmd_decrypt(args):
    _crypt(args, False)


def cmd_stft(args):
    wave = dsp.read_wav(args.input)
    dsp.write_complex(dsp.stft(wave, _stft_params(args, wave.sample_rate)), args.output)


def cmd_features(args):
    kind, n_mels = args.kind, args.n_mels
    if args.preset:
        p = get_preset(args.preset)
        if p.feature is None:
            raise ParameterError(f"preset {p.name} works on raw waveforms, not features")
        kind, n_mels = p.feature, p.n_mels
    if _sniff(args.input) == "stc":
        cs = dsp.read_complex(args.input)
    else:
        wave = dsp.read_wav(args.input)
        cs = dsp.stft(wave, _stft_params(args, wave.sample_rate))
    dsp.write_spectrogram(dsp.features(cs, kind, n_mels), args.output)


def cmd_export_image(args):
    dsp.export_spectrogram_image(dsp.read_spectrogram(args.input), args.output)


def cmd_kernel_transform(args):
    if args.random:
        mode, P = _mode_and_M(args)
        write_kernel(random_kernel(P, args.d, mode, args.seed), args.output)
        return
    if not args.key or not args.input:
        raise ParameterError("kernel-transform needs -k and -i (or --random)")
    write_kernel(transform_kernel(read_kernel(args.input), read_key(args.key)), args.output)


def cmd_embed(args):
    E = read_kernel(args.kernel)
    values, mode, _ = _read_signal(args.input)
    if mode != E.mode:
        raise KeyMismatchError(f"{E.mode} kernel cannot embed a {mode} signal")
    out = embed(values, E, strict=args.remainder == "strict")
    with open(args.output, "wb") as fh:
        np.save(fh, out)


def _next_distinct_key(cipher, seed, mode, M, correct):
    s = seed + 1
    while True:
        k = generate_key(cipher, s & ((1 << 64) - 1), mode, M)
        if k != correct:
            return k
        s += 1


def cmd_verify(args):
    mode, M = _mode_and_M(args)
    ftype = _sniff(args.input)
    if ftype == "spg":
        values = dsp.read_spectrogram(args.input).values
        if mode != "2d":
            raise KeyMismatchError("spectrogram input needs a 2d configuration")
    elif ftype == "wav":
        wave = dsp.read_wav(args.input)
        if mode == "1d":
            values = wave.samples
        else:
            n_mels = get_preset(args.preset).n_mels if args.preset else args.n_mels
            values = dsp.log_mel(dsp.stft(wave, _stft_params(args, wave.sample_rate)), n_mels).values
    else:
        raise KscError(f"{args.input}: expected a WAV or spectrogram file")
    E = random_kernel(M, args.d, mode, args.seed)
    ciphers = ["shuffle", "flip"] if args.cipher == "both" else [args.cipher]
    lines = []
    for cipher in ciphers:
        kc = generate_key(cipher, args.seed, mode, M)
        ki = _next_distinct_key(cipher, args.seed, mode, M, kc)
        lines += verify_scenarios(values, E, cipher, kc, ki, args.remainder).lines()
    _out("\n".join(lines) + "\n", args.output)


def cmd_attack_phase(args):
    spec = dsp.read_spectrogram(args.input)
    if spec.kind == "log_magnitude":
        spec = dsp.to_linear_magnitude(spec)
    cfg = PhaseReconConfig(args.method, args.iterations, args.threshold, args.seed)
    ref = dsp.read_wav(args.reference) if args.reference else None
    rec = phase_reconstruct(spec, cfg, length=len(ref.samples) if ref else None)
    dsp.write_wav(rec, args.output)
    if ref is not None:
        m = evaluate_reconstruction(ref, rec, spec.params)
        snr = "none" if m.snr_db is None else f"{m.snr_db:.6f}"
        _out(f"lsd_db={m.lsd_db:.6f} snr_db={snr}\n", args.report)


def cmd_attack_key(args):
    spec = dsp.read_spectrogram(args.input)
    if args.preset:
        p = get_preset(args.preset)
        if p.mode != "2d":
            raise ParameterError("key recovery works on 2-D spectrograms")
        M = p.M
    elif args.M is None:
        raise ParameterError("--M (or --preset) is required")
    else:
        M = args.M
    scaled, rec = dsp.scale_to_byte_range(spec)
    truth = read_key(args.truth) if args.truth else None
    if truth is not None and (truth.cipher != args.cipher or truth.block_size != M or truth.mode != "2d"):
        raise KeyMismatchError("--truth key does not match --cipher/--M")
    reference, per_neper = None, None
    if args.reference:
        ref = dsp.read_spectrogram(args.reference)
        reference = ref.values
        per_neper = {"linear_magnitude": None, "log_magnitude": 20 / LN10, "log_mel": 10 / LN10}[ref.kind]
    weight = args.negativity_weight
    if weight is None:
        weight = 1.0 if (args.cipher == "flip" and spec.kind == "linear_magnitude") else 0.0
    report = key_recovery_attack(scaled.values, args.cipher, M, args.budget, scale=rec, truth=truth,
                                 reference=reference, reference_db_per_neper=per_neper,
                                 negativity_weight=weight, seed=args.seed)
    _out(report.to_line() + "\n", args.output)


def cmd_metrics(args):
    ta, tb = _sniff(args.a), _sniff(args.b)
    if ta == tb == "wav":
        a, b = dsp.read_wav(args.a), dsp.read_wav(args.b)
        m = evaluate_reconstruction(a, b)
        n = min(len(a.samples), len(b.samples))
        snr = snr_db(a.samples[:n], b.samples[:n]) if np.any(a.samples[:n]) else None
        snr_txt = "none" if snr is None else f"{snr:.6f}"
        _out(f"lsd_db={m.lsd_db:.6f} snr_db={snr_txt}\n", args.output)
    elif ta == tb == "spg":
        a, b = dsp.read_spectrogram(args.a), dsp.read_spectrogram(args.b)
        d = tensor_diff(a.values, b.values)
        text = f"max_rel={d.max_rel:.6e} mean_rel={d.mean_rel:.6e} max_abs={d.max_abs:.6e}"
        if a.kind == b.kind == "linear_magnitude":
            text += f" lsd_db={lsd_db(a.values, b.values):.6f}"
        elif a.kind == b.kind:
            per = 20 / LN10 if a.kind == "log_magnitude" else 10 / LN10
            text += f" lsd_db={log_lsd_db(a.values, b.values, per):.6f}"
        _out(text + "\n", args.output)
    else:
        raise KscError("metrics compares two WAV files or two spectrogram files")


# --- parser ------------------------------------------------------------------

def _add_block_opts(p, with_preset=True):
    p.add_argument("--mode", choices=["1d", "2d"], default="2d")
    p.add_argument("--M", type=int, default=None, help="block size")
    if with_preset:
        p.add_argument("--preset", choices=["asr3", "asv10"], default=None)


def _add_stft_opts(p):
    p.add_argument("--window-length", type=int, default=400)
    p.add_argument("--hop", type=int, default=160)
    p.add_argument("--fft-size", type=int, default=512)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ksc",
        description="Block-wise shuffling/flipping ciphers for speech features.",
        epilog=EXIT_CODES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a key file")
    p.add_argument("--cipher", choices=["shuffle", "flip"], required=True)
    _add_block_opts(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_keygen)

    for name, func in (("encrypt", cmd_encrypt), ("decrypt", cmd_decrypt)):
        p = sub.add_parser(name, help=f"{name} a spectrogram (.spg) or waveform (.wav)")
        p.add_argument("-k", "--key", required=True)
        p.add_argument("-i", "--input", required=True)
        p.add_argument("-o", "--output", required=True)
        p.add_argument("--remainder", choices=["strict", "passthrough"], default="passthrough")
        p.set_defaults(func=func)

    p = sub.add_parser("stft", help="complex STFT of a WAV file")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_stft_opts(p)
    p.set_defaults(func=cmd_stft)

    p = sub.add_parser("features", help="magnitude / log-magnitude / log-mel spectrogram")
    p.add_argument("-i", "--input", required=True, help="WAV or complex STFT (.stc)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--kind", choices=list(dsp.KINDS), default="log_mel")
    p.add_argument("--n-mels", type=int, default=80)
    p.add_argument("--preset", choices=["asr3", "asv10"], default=None)
    _add_stft_opts(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("export-image", help="spectrogram to 8-bit PGM")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export_image)

    p = sub.add_parser("kernel-transform", help="encrypt a patch-embedding kernel (or create one with --random)")
    p.add_argument("-k", "--key")
    p.add_argument("-i", "--input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--random", action="store_true", help="write a seeded random plain kernel instead")
    p.add_argument("--d", type=int, default=16, help="output channels for --random")
    p.add_argument("--seed", type=int, default=0)
    _add_block_opts(p)
    p.set_defaults(func=cmd_kernel_transform)

    p = sub.add_parser("embed", help="apply a patch-embedding kernel, write .npy")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--remainder", choices=["strict", "passthrough"], default="passthrough")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("verify", help="Plain / Correct key / Incorrect key comparison at the first layer")
    p.add_argument("-i", "--input", required=True)
    _add_block_opts(p)
    p.add_argument("--cipher", choices=["shuffle", "flip", "both"], default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--n-mels", type=int, default=80)
    p.add_argument("--remainder", choices=["strict", "passthrough"], default="passthrough")
    p.add_argument("-o", "--output")
    _add_stft_opts(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("attack-phase", help="rebuild audio from a (possibly encrypted) magnitude spectrogram")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--method", choices=["griffin_lim", "pghi"], default="griffin_lim")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--threshold", type=float, default=1e-7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reference", help="original WAV; prints lsd_db / snr_db")
    p.add_argument("--report", help="write the metrics line here instead of stdout")
    p.set_defaults(func=cmd_attack_phase)

    p = sub.add_parser("attack-key", help="ciphertext-only key search on an encrypted spectrogram")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--cipher", choices=["shuffle", "flip"], required=True)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--preset", choices=["asr3"], default=None)
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truth", help="true key file, to report key accuracy")
    p.add_argument("--reference", help="plain spectrogram, to report lsd_db of the trial decryption")
    p.add_argument("--negativity-weight", type=float, default=None)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_attack_key)

    p = sub.add_parser("metrics", help="compare two WAVs (LSD, SNR) or two spectrograms")
    p.add_argument("-a", required=True)
    p.add_argument("-b", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_metrics)
    return parser


def _warn(message, category, filename, lineno, file=None, line=None):
    print(f"ksc: warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _warn
            args.func(args)
    except KscError as exc:
        print(f"ksc: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"ksc: error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return 8
    return 0


if __name__ == "__main__":
    sys.exit(main())
