"""Audio I/O, STFT/iSTFT, log features and spectrogram file formats.

Conventions
-----------
* Spectrogram matrices are ``T x F`` with time on axis 0.
* Analysis frames use a periodic Hann window of ``window_length`` samples,
  zero-padded to ``fft_size``. The signal is padded with
  ``window_length // 2`` zeros in front (and enough zeros at the end) so that
  frame ``m`` is centred on sample ``m * hop``.
* ``istft`` is the least-squares inverse (weighted overlap-add divided by the
  summed squared window), so any hop for which the squared windows cover every
  sample reconstructs exactly.
* Log features are ``ln(value + 1e-10)``. ``log_mel`` applies an HTK-scale,
  area-normalised triangular filterbank to the power spectrum.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import DegenerateRangeError, FormatError, ParameterError

LOG_FLOOR = 1e-10
KINDS = ("linear_magnitude", "log_magnitude", "log_mel")
SPG_MAGIC = b"SPG1"
STC_MAGIC = b"STC1"


@dataclass(frozen=True)
class StftParams:
    window_length: int = 400
    hop: int = 160
    fft_size: int = 512
    sample_rate: int = 16000

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def validate(self) -> None:
        if not 1 <= self.hop <= self.window_length <= self.fft_size:
            raise ParameterError(
                f"need 1 <= hop <= window_length <= fft_size, got hop={self.hop}, "
                f"window_length={self.window_length}, fft_size={self.fft_size}"
            )
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be positive")
        w2 = hann(self.window_length) ** 2
        cover = np.zeros(self.hop)
        for start in range(0, self.window_length, self.hop):
            seg = w2[start : start + self.hop]
            cover[: len(seg)] += seg
        if cover.min() < 1e-6 * cover.max():
            raise ParameterError(
                f"hop={self.hop} leaves samples uncovered by a Hann window of "
                f"{self.window_length} (overlap-add condition fails)"
            )


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be positive")
        if self.samples.ndim != 1:
            raise ParameterError("waveform must be 1-D")
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("waveform contains non-finite samples")


@dataclass
class Spectrogram:
    values: np.ndarray
    kind: str
    params: StftParams

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.kind not in KINDS:
            raise ParameterError(f"unknown spectrogram kind {self.kind!r}")
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ParameterError(f"spectrogram must be a non-empty matrix, got {self.values.shape}")

    @property
    def sample_rate(self) -> int:
        return self.params.sample_rate


@dataclass
class ComplexSpectrogram:
    real: np.ndarray
    imag: np.ndarray
    params: StftParams

    @property
    def complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @classmethod
    def from_complex(cls, Z, params: StftParams) -> "ComplexSpectrogram":
        Z = np.asarray(Z)
        if Z.shape[1] != params.n_bins:
            raise ParameterError(f"expected {params.n_bins} bins, got {Z.shape[1]}")
        return cls(np.ascontiguousarray(Z.real, dtype=np.float64),
                   np.ascontiguousarray(Z.imag, dtype=np.float64), params)


# --- WAV -----------------------------------------------------------------

def read_wav(path) -> Waveform:
    """Read PCM16 or float32 WAV. PCM16 is scaled by 1/32768, so full scale is [-1, 32767/32768]."""
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype} (need PCM16 or float32)")
    if x.ndim == 2:
        warnings.warn(f"{path}: {x.shape[1]} channels averaged to mono", RuntimeWarning)
        x = x.mean(axis=1)
    return Waveform(x, int(rate))


def write_wav(wave: Waveform, path, pcm16: bool = False) -> None:
    """Write float32 (default) or PCM16 mono WAV."""
    if pcm16:
        q = np.clip(np.round(wave.samples * 32768.0), -32768, 32767).astype("<i2")
        wavfile.write(path, wave.sample_rate, q)
    else:
        wavfile.write(path, wave.sample_rate, wave.samples.astype("<f4"))


# --- STFT ----------------------------------------------------------------

def hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _n_frames(n_samples: int, p: StftParams) -> int:
    # enough frames that the last sample sits no later than the last frame's centre
    need = n_samples + 2 * (p.window_length // 2) - p.window_length
    return 1 if need <= 0 else -(-need // p.hop) + 1


def stft(wave: Waveform, params: StftParams | None = None) -> ComplexSpectrogram:
    p = params or StftParams(sample_rate=wave.sample_rate)
    if p.sample_rate != wave.sample_rate:
        p = StftParams(p.window_length, p.hop, p.fft_size, wave.sample_rate)
    p.validate()
    x = wave.samples
    pad = p.window_length // 2
    n_frames = _n_frames(len(x), p)
    total = (n_frames - 1) * p.hop + p.window_length
    xp = np.zeros(total)
    xp[pad : pad + len(x)] = x[: max(0, total - pad)]
    idx = np.arange(p.window_length)[None, :] + p.hop * np.arange(n_frames)[:, None]
    frames = xp[idx] * hann(p.window_length)
    Z = np.fft.rfft(frames, n=p.fft_size, axis=1)
    return ComplexSpectrogram.from_complex(Z, p)


def istft(spec: ComplexSpectrogram, length: int | None = None) -> Waveform:
    p = spec.params
    p.validate()
    Z = spec.complex
    n_frames = Z.shape[0]
    w = hann(p.window_length)
    frames = np.fft.irfft(Z, n=p.fft_size, axis=1)[:, : p.window_length] * w
    total = (n_frames - 1) * p.hop + p.window_length
    y = np.zeros(total)
    norm = np.zeros(total)
    for m in range(n_frames):
        s = m * p.hop
        y[s : s + p.window_length] += frames[m]
        norm[s : s + p.window_length] += w * w
    nz = norm > 1e-10
    y[nz] /= norm[nz]
    y[~nz] = 0.0
    pad = p.window_length // 2
    out = y[pad:]
    if length is not None:
        out = out[:length] if len(out) >= length else np.concatenate([out, np.zeros(length - len(out))])
    return Waveform(out.copy(), p.sample_rate)


# --- features ------------------------------------------------------------

def magnitude(spec: ComplexSpectrogram) -> Spectrogram:
    return Spectrogram(np.hypot(spec.real, spec.imag), "linear_magnitude", spec.params)


def log_magnitude(spec: ComplexSpectrogram) -> Spectrogram:
    return Spectrogram(np.log(np.hypot(spec.real, spec.imag) + LOG_FLOOR), "log_magnitude", spec.params)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, params: StftParams) -> np.ndarray:
    """``(n_bins, n_mels)`` triangular filters spanning 0..Nyquist, each with unit area in Hz."""
    if n_mels < 1:
        raise ParameterError("n_mels must be >= 1")
    nyquist = params.sample_rate / 2.0
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(nyquist), n_mels + 2))
    freqs = np.arange(params.n_bins) * params.sample_rate / params.fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    tri = np.maximum(0.0, np.minimum(rising, falling))
    return (tri * (2.0 / (hi - lo))).T


def log_mel(spec: ComplexSpectrogram, n_mels: int = 80) -> Spectrogram:
    power = spec.real**2 + spec.imag**2
    mel = power @ mel_filterbank(n_mels, spec.params)
    return Spectrogram(np.log(mel + LOG_FLOOR), "log_mel", spec.params)


def features(spec: ComplexSpectrogram, kind: str, n_mels: int = 80) -> Spectrogram:
    if kind == "linear_magnitude":
        return magnitude(spec)
    if kind == "log_magnitude":
        return log_magnitude(spec)
    if kind == "log_mel":
        return log_mel(spec, n_mels)
    raise ParameterError(f"unknown feature kind {kind!r}")


def to_linear_magnitude(spec: Spectrogram) -> Spectrogram:
    """Undo ``log_magnitude``; values are used as-is (a flipped log value becomes a huge magnitude)."""
    if spec.kind == "linear_magnitude":
        return spec
    if spec.kind != "log_magnitude":
        raise ParameterError(f"cannot turn a {spec.kind} spectrogram into linear magnitude")
    return Spectrogram(np.maximum(np.exp(spec.values) - LOG_FLOOR, 0.0), "linear_magnitude", spec.params)


# --- byte scaling and images ---------------------------------------------

@dataclass(frozen=True)
class ByteScale:
    vmin: float
    vmax: float

    def apply(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.vmin) / (self.vmax - self.vmin) * 255.0

    def invert(self, scaled) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) / 255.0 * (self.vmax - self.vmin) + self.vmin


def scale_to_byte_range(spec: Spectrogram) -> tuple[Spectrogram, ByteScale]:
    vmin, vmax = float(spec.values.min()), float(spec.values.max())
    if not vmax > vmin:
        raise DegenerateRangeError("constant spectrogram has no byte range")
    rec = ByteScale(vmin, vmax)
    return Spectrogram(rec.apply(spec.values), spec.kind, spec.params), rec


def unscale_from_byte_range(spec: Spectrogram, rec: ByteScale) -> Spectrogram:
    return Spectrogram(rec.invert(spec.values), spec.kind, spec.params)


def spectrogram_image(values) -> np.ndarray:
    """8-bit image, ``F`` rows by ``T`` columns, highest frequency on the first row."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi > lo:
        img = np.round((v - lo) / (hi - lo) * 255.0)
    else:
        img = np.full(v.shape, 128.0)
    return img.T[::-1].astype(np.uint8)


def export_spectrogram_image(spec: Spectrogram, path) -> None:
    img = spectrogram_image(spec.values)
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM supported")
    pixels = parts[4]
    if len(pixels) != rows * cols:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(rows, cols)


# --- binary spectrogram files --------------------------------------------

_KIND_CODE = {"linear_magnitude": 0, "log_magnitude": 1, "log_mel": 2}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_HDR = struct.Struct("<6IB")


def spectrogram_to_bytes(spec: Spectrogram) -> bytes:
    T, F = spec.values.shape
    p = spec.params
    hdr = _HDR.pack(T, F, p.sample_rate, p.hop, p.window_length, p.fft_size, _KIND_CODE[spec.kind])
    return SPG_MAGIC + hdr + spec.values.astype("<f8").tobytes(order="C")


def spectrogram_from_bytes(buf: bytes) -> Spectrogram:
    if buf[:4] != SPG_MAGIC:
        raise FormatError(f"not a spectrogram file (magic {buf[:4]!r})")
    if len(buf) < 4 + _HDR.size:
        raise FormatError("truncated spectrogram header")
    T, F, sr, hop, win, nfft, code = _HDR.unpack_from(buf, 4)
    if code not in _CODE_KIND:
        raise FormatError(f"unknown spectrogram kind code {code}")
    off = 4 + _HDR.size
    if len(buf) != off + 8 * T * F:
        raise FormatError(f"spectrogram payload size mismatch for {T}x{F}")
    values = np.frombuffer(buf, dtype="<f8", offset=off).reshape(T, F).copy()
    return Spectrogram(values, _CODE_KIND[code], StftParams(win, hop, nfft, sr))


def complex_to_bytes(spec: ComplexSpectrogram) -> bytes:
    T, F = spec.real.shape
    p = spec.params
    hdr = _HDR.pack(T, F, p.sample_rate, p.hop, p.window_length, p.fft_size, 255)
    inter = np.empty((T, F, 2), dtype="<f8")
    inter[..., 0] = spec.real
    inter[..., 1] = spec.imag
    return STC_MAGIC + hdr + inter.tobytes(order="C")


def complex_from_bytes(buf: bytes) -> ComplexSpectrogram:
    if buf[:4] != STC_MAGIC:
        raise FormatError(f"not a complex spectrogram file (magic {buf[:4]!r})")
    if len(buf) < 4 + _HDR.size:
        raise FormatError("truncated complex spectrogram header")
    T, F, sr, hop, win, nfft, _ = _HDR.unpack_from(buf, 4)
    off = 4 + _HDR.size
    if len(buf) != off + 16 * T * F:
        raise FormatError(f"complex spectrogram payload size mismatch for {T}x{F}")
    inter = np.frombuffer(buf, dtype="<f8", offset=off).reshape(T, F, 2)
    return ComplexSpectrogram(inter[..., 0].copy(), inter[..., 1].copy(), StftParams(win, hop, nfft, sr))


def write_spectrogram(spec: Spectrogram, path) -> None:
    with open(path, "wb") as fh:
        fh.write(spectrogram_to_bytes(spec))


def read_spectrogram(path) -> Spectrogram:
    with open(path, "rb") as fh:
        return spectrogram_from_bytes(fh.read())


def write_complex(spec: ComplexSpectrogram, path) -> None:
    with open(path, "wb") as fh:
        fh.write(complex_to_bytes(spec))


def read_complex(path) -> ComplexSpectrogram:
    with open(path, "rb") as fh:
        return complex_from_bytes(fh.read())
