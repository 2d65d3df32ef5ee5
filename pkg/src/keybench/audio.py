"""WAV reading/writing and band-limited resampling.

Everything downstream operates on :class:`AudioClip`: mono float64 samples
plus a sample rate. Multi-channel files are averaged to mono on read and
integer PCM is scaled to [-1, 1).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003

DEFAULT_SAMPLE_RATE = 16_000


class AudioError(Exception):
    pass


class MalformedRiff(AudioError):
    pass


class UnsupportedEncoding(AudioError):
    pass


@dataclass(frozen=True)
class AudioClip:
    """Mono audio: float64 samples nominally in [-1, 1] and a sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def rms(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples ** 2)))

    def peak(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.max(np.abs(self.samples)))


def read_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte string (PCM-16, PCM-24 or float-32)."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedRiff("not a RIFF/WAVE stream")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_len,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + chunk_len]
        if chunk_id == b"fmt ":
            if chunk_len < 16:
                raise MalformedRiff("fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            if len(body) < chunk_len:
                raise MalformedRiff("data chunk length past end of file")
            payload = body
        pos += 8 + chunk_len + (chunk_len & 1)  # chunks are word-aligned

    if fmt is None:
        raise MalformedRiff("missing fmt chunk")
    if payload is None:
        raise MalformedRiff("missing data chunk")
    audio_format, n_channels, sample_rate, _, block_align, bits = fmt
    if n_channels < 1:
        raise MalformedRiff("zero channels")

    if audio_format == WAVE_FORMAT_PCM and bits == 16:
        samples = np.frombuffer(payload[:len(payload) // 2 * 2], dtype="<i2")
        samples = samples.astype(np.float64) / 2 ** 15
    elif audio_format == WAVE_FORMAT_PCM and bits == 24:
        raw = np.frombuffer(payload[:len(payload) // 3 * 3], dtype=np.uint8)
        raw = raw.reshape(-1, 3).astype(np.int64)
        value = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        value = np.where(value >= 1 << 23, value - (1 << 24), value)
        samples = value.astype(np.float64) / 2 ** 23
    elif audio_format == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(payload[:len(payload) // 4 * 4], dtype="<f4")
        samples = samples.astype(np.float64)
    else:
        raise UnsupportedEncoding(
            f"format tag {audio_format} with {bits} bits not supported"
        )

    if n_channels > 1:
        usable = len(samples) // n_channels * n_channels
        samples = samples[:usable].reshape(-1, n_channels).mean(axis=1)
    samples = np.nan_to_num(samples, nan=0.0, posinf=1.0, neginf=-1.0)
    return AudioClip(samples=samples, sample_rate=sample_rate)


def write_wav(clip: AudioClip, encoding: str = "float32") -> bytes:
    """Encode a clip as mono RIFF/WAVE. PCM encodings clamp then round."""
    x = clip.samples
    if encoding == "pcm16":
        fmt_tag, bits = WAVE_FORMAT_PCM, 16
        q = np.clip(np.rint(np.clip(x, -1.0, 1.0) * 2 ** 15), -(2 ** 15), 2 ** 15 - 1)
        payload = q.astype("<i2").tobytes()
    elif encoding == "pcm24":
        fmt_tag, bits = WAVE_FORMAT_PCM, 24
        q = np.clip(np.rint(np.clip(x, -1.0, 1.0) * 2 ** 23), -(2 ** 23), 2 ** 23 - 1)
        q = q.astype(np.int64)
        out = np.empty((len(q), 3), dtype=np.uint8)
        out[:, 0] = q & 0xFF
        out[:, 1] = (q >> 8) & 0xFF
        out[:, 2] = (q >> 16) & 0xFF
        payload = out.tobytes()
    elif encoding == "float32":
        fmt_tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = x.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    block_align = bits // 8
    byte_rate = clip.sample_rate * block_align
    fmt_chunk = struct.pack(
        "<HHIIHH", fmt_tag, 1, clip.sample_rate, byte_rate, block_align, bits
    )
    chunks = b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def load(path) -> AudioClip:
    with open(path, "rb") as f:
        return read_wav(f.read())


def save(clip: AudioClip, path, encoding: str = "float32") -> None:
    with open(path, "wb") as f:
        f.write(write_wav(clip, encoding))


def _resample_kernel(up: int, down: int) -> np.ndarray:
    from scipy import signal

    # Windowed-sinc low-pass at the narrower Nyquist, designed at the
    # upsampled rate. Kaiser beta 8 gives > 80 dB stopband rejection; 40
    # taps per polyphase branch keeps the transition band narrow enough
    # that content 12% past the band edge already sits in the stopband.
    half = max(32, 40 * max(up, down))
    cutoff = min(1.0 / up, 1.0 / down)
    return signal.firwin(2 * half + 1, cutoff, window=("kaiser", 8.0))


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited sample rate conversion (polyphase windowed sinc).

    Output length is ``round(len * target / source)``; a target equal to the
    source rate returns the clip unchanged.
    """
    from scipy import signal

    if target_rate <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    n_out = round(len(clip.samples) * target_rate / clip.sample_rate)
    if len(clip.samples) == 0:
        return AudioClip(samples=np.empty(0), sample_rate=target_rate)

    ratio = Fraction(target_rate, clip.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    y = signal.resample_poly(clip.samples, up, down, window=_resample_kernel(up, down))
    y = _fix_length(y, n_out)
    return AudioClip(samples=y, sample_rate=target_rate)


def resample_by_ratio(clip: AudioClip, ratio: float, max_denominator: int = 10_000) -> AudioClip:
    """Resample by an arbitrary positive factor, keeping the sample rate label.

    The factor is the output/input length ratio; frequencies scale by its
    inverse. Used by the pitch shifter, where the factor is irrational and is
    approximated by a rational within ``1/max_denominator**2``.
    """
    from scipy import signal

    if ratio <= 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    n_out = round(len(clip.samples) * ratio)
    if len(clip.samples) == 0 or ratio == 1.0:
        return clip
    frac = Fraction(ratio).limit_denominator(max_denominator)
    up, down = frac.numerator, frac.denominator
    if up == down:
        # The factor is indistinguishable from 1 at this precision.
        return AudioClip(samples=_fix_length(clip.samples.copy(), n_out),
                         sample_rate=clip.sample_rate)
    y = signal.resample_poly(clip.samples, up, down, window=_resample_kernel(up, down))
    y = _fix_length(y, n_out)
    return AudioClip(samples=y, sample_rate=clip.sample_rate)


def _fix_length(x: np.ndarray, n: int) -> np.ndarray:
    if len(x) > n:
        return x[:n]
    if len(x) < n:
        return np.concatenate([x, np.zeros(n - len(x))])
    return x


def sine(frequency: float, duration: float, sample_rate: int = DEFAULT_SAMPLE_RATE,
         amplitude: float = 0.5) -> AudioClip:
    """Test-signal helper: a pure tone."""
    t = np.arange(round(duration * sample_rate)) / sample_rate
    return AudioClip(samples=amplitude * np.sin(2 * math.pi * frequency * t),
                     sample_rate=sample_rate)


def dominant_frequency(clip: AudioClip, min_hz: float = 0.0) -> float:
    """Frequency of the largest spectral peak, refined by parabolic
    interpolation on the log magnitude of a Hann-windowed FFT."""
    x = clip.samples
    if len(x) < 16:
        return 0.0
    w = np.hanning(len(x))
    spectrum = np.abs(np.fft.rfft(x * w))
    freqs = np.fft.rfftfreq(len(x), 1.0 / clip.sample_rate)
    valid = freqs >= min_hz
    spectrum = np.where(valid, spectrum, 0.0)
    k = int(np.argmax(spectrum))
    if k == 0 or k == len(spectrum) - 1 or spectrum[k] == 0:
        return float(freqs[k])
    with np.errstate(divide="ignore"):
        a, b, c = np.log(spectrum[k - 1:k + 2])
    if not np.all(np.isfinite([a, b, c])):
        return float(freqs[k])
    denom = a - 2 * b + c
    delta = 0.0 if denom == 0 else 0.5 * (a - c) / denom
    bin_hz = clip.sample_rate / len(x)
    return float((k + delta) * bin_hz)
