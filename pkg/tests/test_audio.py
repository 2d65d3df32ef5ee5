from __future__ import annotations

import struct

import numpy as np
import pytest

from keybench.audio import (
    AudioClip,
    MalformedRiff,
    UnsupportedEncoding,
    dominant_frequency,
    read_wav,
    resample,
    resample_by_ratio,
    sine,
    write_wav,
)


def test_clip_validation():
    with pytest.raises(ValueError):
        AudioClip(np.zeros((2, 100)), 16000)
    with pytest.raises(ValueError):
        AudioClip(np.array([0.0, np.nan]), 16000)
    with pytest.raises(ValueError):
        AudioClip(np.zeros(10), 0)


def test_clip_helpers():
    clip = AudioClip(np.array([0.5, -0.5, 0.5, -0.5]), 4)
    assert clip.duration == 1.0
    assert clip.rms() == pytest.approx(0.5)
    assert clip.peak() == 0.5
    empty = AudioClip(np.zeros(0), 16000)
    assert empty.rms() == 0.0
    assert empty.peak() == 0.0


def test_float32_round_trip_is_exact():
    gen = np.random.default_rng(0)
    samples = gen.uniform(-1.0, 1.0, 1000).astype(np.float32).astype(np.float64)
    clip = AudioClip(samples, 22050)
    back = read_wav(write_wav(clip, encoding="float32"))
    assert back.sample_rate == 22050
    assert np.array_equal(back.samples, samples)


def test_pcm16_quantization_bound():
    gen = np.random.default_rng(1)
    samples = gen.uniform(-0.999, 0.999, 2000)
    clip = AudioClip(samples, 16000)
    back = read_wav(write_wav(clip, encoding="pcm16"))
    assert np.max(np.abs(back.samples - samples)) <= 1.0 / 32768 + 1e-12


def test_pcm24_quantization_bound():
    gen = np.random.default_rng(2)
    samples = gen.uniform(-0.999, 0.999, 2000)
    clip = AudioClip(samples, 16000)
    back = read_wav(write_wav(clip, encoding="pcm24"))
    assert np.max(np.abs(back.samples - samples)) <= 1.0 / 8388608 + 1e-15


def test_pcm16_known_codes():
    clip = AudioClip(np.array([0.0, 0.5, -1.0, 1.0, 1.5, -2.0]), 8000)
    data = write_wav(clip, encoding="pcm16")
    back = read_wav(data)
    # full-scale positive clamps to 32767; negative reaches -32768 exactly
    assert back.samples[0] == 0.0
    assert back.samples[1] == pytest.approx(0.5, abs=1 / 32768)
    assert back.samples[2] == -1.0
    assert back.samples[3] == pytest.approx(32767 / 32768)
    assert back.samples[4] == pytest.approx(32767 / 32768)  # clamped
    assert back.samples[5] == -1.0                          # clamped


def test_stereo_downmix_averages():
    # Hand-built stereo PCM16 file: L = +16384, R = -16384 in every frame.
    n = 100
    frames = struct.pack("<" + "hh" * n, *([16384, -16384] * n))
    header = (
        b"RIFF" + struct.pack("<I", 36 + len(frames)) + b"WAVE"
        + b"fmt " + struct.pack("<IHHIIHH", 16, 1, 2, 8000, 8000 * 4, 4, 16)
        + b"data" + struct.pack("<I", len(frames))
    )
    clip = read_wav(header + frames)
    assert clip.sample_rate == 8000
    assert len(clip.samples) == n
    assert np.all(clip.samples == 0.0)


def test_odd_chunk_is_word_aligned():
    # A 3-byte auxiliary chunk must be padded to 4 before the data chunk.
    payload = struct.pack("<h", 1234)
    data = (
        b"RIFF" + struct.pack("<I", 4 + 8 + 16 + 8 + 3 + 1 + 8 + len(payload)) + b"WAVE"
        + b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 8000, 16000, 2, 16)
        + b"junk" + struct.pack("<I", 3) + b"abc\x00"
        + b"data" + struct.pack("<I", len(payload)) + payload
    )
    clip = read_wav(data)
    assert clip.samples[0] == pytest.approx(1234 / 32768)


def test_malformed_riff():
    with pytest.raises(MalformedRiff):
        read_wav(b"OggS" + b"\x00" * 40)
    with pytest.raises(MalformedRiff):
        read_wav(b"RIFF\x04\x00\x00\x00WAVE")  # no fmt/data
    truncated = write_wav(sine(440, 0.1, 8000))[:-10]
    with pytest.raises(MalformedRiff):
        read_wav(truncated)


def test_unsupported_encoding():
    # fmt tag 7 = mu-law
    data = (
        b"RIFF" + struct.pack("<I", 4 + 8 + 16 + 8) + b"WAVE"
        + b"fmt " + struct.pack("<IHHIIHH", 16, 7, 1, 8000, 8000, 1, 8)
        + b"data" + struct.pack("<I", 0)
    )
    with pytest.raises(UnsupportedEncoding):
        read_wav(data)
    with pytest.raises(ValueError):
        write_wav(sine(440, 0.1, 8000), encoding="pcm12")


def test_resample_same_rate_is_identity():
    clip = sine(440, 0.5, 16000)
    out = resample(clip, 16000)
    assert out is clip


def test_resample_preserves_tone():
    clip = sine(440, 1.0, 16000, amplitude=0.5)
    down = resample(clip, 8000)
    assert down.sample_rate == 8000
    assert len(down.samples) == 8000
    assert dominant_frequency(down, min_hz=100) == pytest.approx(440, abs=0.5)


def test_resample_output_length_rounds():
    clip = AudioClip(np.zeros(44100), 44100)
    out = resample(clip, 16000)
    assert len(out.samples) == 16000
    odd = AudioClip(np.zeros(44101), 44100)
    out2 = resample(odd, 16000)
    assert len(out2.samples) == round(44101 * 16000 / 44100)


def test_resample_rejects_above_new_nyquist():
    # 9 kHz cannot survive a 44.1k -> 16k resample (Nyquist 8 kHz).
    tone = sine(9000, 1.0, 44100, amplitude=0.5)
    out = resample(tone, 16000)
    attenuation_db = 20 * np.log10(max(out.rms(), 1e-12) / tone.rms())
    assert attenuation_db < -40


def test_resample_passes_band_interior():
    # 7 kHz sits inside the 8 kHz band edge and must come through near
    # unity after 44.1k -> 16k.
    tone = sine(7000, 1.0, 44100, amplitude=0.5)
    out = resample(tone, 16000)
    interior = out.samples[2000:-2000]
    level_db = 20 * np.log10(np.sqrt(np.mean(interior ** 2)) / tone.rms())
    assert abs(level_db) < 1.0
    assert dominant_frequency(out, min_hz=1000) == pytest.approx(7000, abs=2.0)


def test_resample_round_trip_snr():
    gen = np.random.default_rng(5)
    # Band-limit the fixture well below 8 kHz so the round trip only loses
    # energy to filter ripple.
    t = np.arange(32000) / 16000
    samples = sum(
        0.1 * np.sin(2 * np.pi * f * t + gen.uniform(0, 6))
        for f in (220, 950, 2300, 5100)
    )
    clip = AudioClip(samples, 16000)
    back = resample(resample(clip, 44100), 16000)
    a = clip.samples[2000:-2000]
    b = back.samples[2000:-2000]
    snr_db = 10 * np.log10(np.sum(a ** 2) / np.sum((a - b) ** 2))
    assert snr_db > 40


def test_resample_by_ratio_length():
    clip = sine(440, 1.0, 16000)
    out = resample_by_ratio(clip, 1.5)
    assert len(out.samples) == 24000
    assert out.sample_rate == 16000
    # Frequencies scale by the inverse ratio when the rate label is kept.
    assert dominant_frequency(out, min_hz=100) == pytest.approx(440 / 1.5, abs=1.0)


def test_dominant_frequency_precision():
    clip = sine(1234.5, 2.0, 16000, amplitude=0.3)
    assert dominant_frequency(clip, min_hz=100) == pytest.approx(1234.5, abs=0.05)
