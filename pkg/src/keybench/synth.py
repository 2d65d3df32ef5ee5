"""Deterministic additive piano-like synthesis.

Renders a note sequence to audio using inharmonic partials with an
attack/decay envelope. Not meant to sound like a concert grand; meant to
give timbrally distinct, label-accurate fixtures at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, DEFAULT_SAMPLE_RATE
from .notes import NoteSequence

RELEASE_TAU_S = 0.04  # damper action after note-off
FADE_S = 0.01         # hard fade at the end of each note's tail


@dataclass(frozen=True)
class TimbrePreset:
    """Partial structure and envelope of one instrument voice.

    ``partial_amplitude_rolloff`` is the per-partial decay exponent (partial
    k has relative amplitude ``k**-rolloff``); ``inharmonicity_coefficient``
    stretches partial k to ``k * f0 * sqrt(1 + B * k**2)``.
    """

    partial_count: int
    partial_amplitude_rolloff: float
    inharmonicity_coefficient: float
    decay_time_s: float
    attack_time_s: float

    def __post_init__(self):
        if self.partial_count < 1:
            raise ValueError("partial_count must be >= 1")
        if self.inharmonicity_coefficient < 0:
            raise ValueError("inharmonicity must be >= 0")
        if not self.attack_time_s < self.decay_time_s:
            raise ValueError("attack_time must be shorter than decay_time")


DEFAULT_PRESETS: dict[str, TimbrePreset] = {
    "grand_warm": TimbrePreset(10, 1.4, 1e-4, 0.45, 0.004),
    "grand_bright": TimbrePreset(20, 0.7, 1e-4, 0.40, 0.002),
    "upright_soft": TimbrePreset(8, 1.8, 3e-4, 0.30, 0.006),
    "upright_hard": TimbrePreset(16, 0.9, 3e-4, 0.25, 0.002),
    "pure": TimbrePreset(6, 2.0, 0.0, 0.50, 0.003),
    "metallic": TimbrePreset(14, 0.8, 6e-4, 0.35, 0.002),
}


def midi_to_hz(pitch: int) -> float:
    return 440.0 * 2.0 ** ((pitch - 69) / 12.0)


def render(seq: NoteSequence, preset: TimbrePreset,
           sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioClip:
    """Render a sequence; deterministic, peak-normalized to 0.9.

    Each note rings from its onset until ``offset + decay_time`` at most,
    with a raised-cosine fade forcing exact silence at the tail end, so the
    clip is silent outside the labeled extent.
    """
    tail_s = min(preset.decay_time_s, 0.35)
    n_total = round(seq.duration * sample_rate)
    out = np.zeros(n_total)

    for note in seq.notes:
        f0 = midi_to_hz(note.pitch)
        k = np.arange(1, preset.partial_count + 1, dtype=np.float64)
        freqs = k * f0 * np.sqrt(1.0 + preset.inharmonicity_coefficient * k ** 2)
        keep = freqs < 0.95 * sample_rate / 2
        freqs = freqs[keep]
        if len(freqs) == 0:
            continue
        amps = (note.velocity / 127.0) * k[keep] ** (-preset.partial_amplitude_rolloff)

        start = round(note.onset * sample_rate)
        end = min(round((note.offset + tail_s) * sample_rate), n_total)
        if end <= start:
            continue
        t = np.arange(end - start) / sample_rate

        env = np.clip(t / preset.attack_time_s, 0.0, 1.0)
        env *= np.exp(-t / preset.decay_time_s)
        after_off = t - (note.offset - note.onset)
        env *= np.where(after_off > 0, np.exp(-np.maximum(after_off, 0) / RELEASE_TAU_S), 1.0)
        fade_n = min(round(FADE_S * sample_rate), len(t))
        if fade_n > 0:
            u = np.linspace(0.0, 1.0, fade_n)
            env[len(t) - fade_n:] *= 0.5 * (1.0 + np.cos(math.pi * u))

        tone = np.sin(2.0 * math.pi * np.outer(freqs, t))
        out[start:end] += env * (amps @ tone)

    peak = np.max(np.abs(out)) if n_total else 0.0
    if peak > 0:
        out *= 0.9 / peak
    return AudioClip(samples=out, sample_rate=sample_rate)


def spectral_centroid(clip: AudioClip) -> float:
    """Magnitude-weighted mean frequency; used to compare preset timbres."""
    if len(clip.samples) < 2:
        return 0.0
    mag = np.abs(np.fft.rfft(clip.samples))
    freqs = np.fft.rfftfreq(len(clip.samples), 1.0 / clip.sample_rate)
    total = mag.sum()
    if total == 0:
        return 0.0
    return float((freqs * mag).sum() / total)
