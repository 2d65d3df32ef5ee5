"""Symbolic note events and sequences.

These types are the common currency of the toolkit: MIDI files parse into
them, the synthesizer renders from them, and the evaluator compares them.
All instances are immutable after construction; functions here never mutate
their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_PITCH = 0
MAX_PITCH = 127
MIN_VELOCITY = 1
MAX_VELOCITY = 127

# Jittered onsets are clamped this far below the offset so the
# offset > onset invariant survives perturbation.
ONSET_CLAMP_S = 1e-3


@dataclass(frozen=True, order=True)
class NoteEvent:
    """A single pitched note: onset/offset in seconds, MIDI pitch and velocity."""

    pitch: int
    onset: float
    offset: float
    velocity: int


@dataclass(frozen=True)
class NoteSequence:
    """An ordered collection of notes plus the total duration in seconds.

    Notes are expected to be sorted by (onset, pitch) and the duration must
    cover the last offset; use :func:`validate` to check, or
    :meth:`from_notes` to build a sequence that satisfies both by
    construction.
    """

    notes: tuple[NoteEvent, ...] = field(default_factory=tuple)
    duration: float = 0.0

    @classmethod
    def from_notes(cls, notes, duration: float | None = None) -> "NoteSequence":
        ordered = tuple(sorted(notes, key=lambda n: (n.onset, n.pitch)))
        max_offset = max((n.offset for n in ordered), default=0.0)
        if duration is None:
            duration = max_offset
        return cls(notes=ordered, duration=max(duration, max_offset))

    def __len__(self) -> int:
        return len(self.notes)


def validate(seq: NoteSequence) -> list[str]:
    """Check every sequence invariant and return the violations found.

    Violations are returned as human-readable strings; an empty list means
    the sequence is well formed. The input is never modified.
    """
    violations: list[str] = []
    seen: set[tuple[int, float]] = set()
    prev_key = None
    max_offset = 0.0
    for i, note in enumerate(seq.notes):
        if not (MIN_PITCH <= note.pitch <= MAX_PITCH):
            violations.append(f"note {i}: pitch {note.pitch} outside [0, 127]")
        if not (MIN_VELOCITY <= note.velocity <= MAX_VELOCITY):
            violations.append(f"note {i}: velocity {note.velocity} outside [1, 127]")
        if note.onset < 0:
            violations.append(f"note {i}: negative onset {note.onset}")
        if note.offset <= note.onset:
            violations.append(
                f"note {i}: offset {note.offset} <= onset {note.onset}"
            )
        key = (note.pitch, note.onset)
        if key in seen:
            violations.append(f"note {i}: duplicate (pitch, onset) = {key}")
        seen.add(key)
        sort_key = (note.onset, note.pitch)
        if prev_key is not None and sort_key < prev_key:
            violations.append(f"note {i}: not sorted by (onset, pitch)")
        prev_key = sort_key
        max_offset = max(max_offset, note.offset)
    if seq.notes and seq.duration < max_offset:
        violations.append(
            f"duration {seq.duration} < max offset {max_offset}"
        )
    return violations


def window(seq: NoteSequence, start: float, length: float) -> NoteSequence:
    """Cut a [start, start+length) window out of a sequence.

    Notes whose onset falls inside the half-open interval are kept, re-based
    so the window begins at time zero, with offsets clipped to the window
    length. An onset exactly at the right boundary belongs to the next
    window, so hop-partitioning a piece never duplicates a note.
    """
    if length <= 0:
        raise ValueError(f"window length must be positive, got {length}")
    end = start + length
    kept = []
    for note in seq.notes:
        if start <= note.onset < end:
            onset = note.onset - start
            offset = min(note.offset - start, length)
            kept.append(NoteEvent(note.pitch, onset, offset, note.velocity))
    return NoteSequence(notes=tuple(kept), duration=length)


def perturb(
    seq: NoteSequence,
    drop_p: float = 0.0,
    spurious_rate: float = 0.0,
    onset_jitter_std: float = 0.0,
    seed: int = 0,
) -> NoteSequence:
    """Degrade a sequence in a statistically controlled way.

    Each note survives with probability ``1 - drop_p``; surviving onsets get
    Gaussian jitter (clamped to stay non-negative and before the offset);
    spurious notes with uniform random pitch and onset are added at
    ``spurious_rate`` notes per second. With all parameters zero the input
    comes back unchanged. The same seed always produces the same output,
    which makes this a transcription oracle with known precision/recall.
    """
    if not 0.0 <= drop_p <= 1.0:
        raise ValueError(f"drop_p must be in [0, 1], got {drop_p}")
    if spurious_rate < 0:
        raise ValueError(f"spurious_rate must be >= 0, got {spurious_rate}")
    if onset_jitter_std < 0:
        raise ValueError(f"onset_jitter_std must be >= 0, got {onset_jitter_std}")

    rng = np.random.default_rng(seed)
    n = len(seq.notes)
    keep = rng.random(n) >= drop_p
    jitter = rng.normal(0.0, onset_jitter_std, n) if n else np.empty(0)

    out = []
    for note, keep_it, dt in zip(seq.notes, keep, jitter):
        if not keep_it:
            continue
        onset = note.onset + float(dt)
        onset = max(onset, 0.0)
        onset = min(onset, note.offset - ONSET_CLAMP_S)
        onset = max(onset, 0.0)
        out.append(NoteEvent(note.pitch, onset, note.offset, note.velocity))

    duration = seq.duration
    n_spurious = int(rng.poisson(spurious_rate * duration)) if duration > 0 else 0
    for _ in range(n_spurious):
        pitch = int(rng.integers(MIN_PITCH, MAX_PITCH + 1))
        onset = float(rng.uniform(0.0, duration))
        length = float(rng.uniform(0.05, 0.5))
        offset = onset + length
        velocity = int(rng.integers(MIN_VELOCITY, MAX_VELOCITY + 1))
        out.append(NoteEvent(pitch, onset, offset, velocity))
        duration = max(duration, offset)

    return NoteSequence.from_notes(out, duration=max(duration, seq.duration))
