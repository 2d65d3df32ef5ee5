from __future__ import annotations

import numpy as np
import pytest

from keybench.notes import (
    NoteEvent,
    NoteSequence,
    perturb,
    validate,
    window,
)


def test_from_notes_sorts_and_sets_duration():
    seq = NoteSequence.from_notes([
        NoteEvent(64, 1.0, 1.5, 80),
        NoteEvent(60, 0.5, 2.5, 90),
        NoteEvent(60, 1.0, 1.2, 70),
    ])
    assert [n.pitch for n in seq.notes] == [60, 60, 64]
    assert seq.notes[0].onset == 0.5
    assert seq.duration == 2.5


def test_from_notes_keeps_longer_explicit_duration():
    seq = NoteSequence.from_notes([NoteEvent(60, 0.0, 1.0, 64)], duration=5.0)
    assert seq.duration == 5.0
    # an explicit duration can never undercut the last offset
    seq2 = NoteSequence.from_notes([NoteEvent(60, 0.0, 1.0, 64)], duration=0.2)
    assert seq2.duration == 1.0


def test_validate_clean_sequence():
    seq = NoteSequence.from_notes([
        NoteEvent(60, 0.0, 1.0, 64),
        NoteEvent(62, 0.5, 0.8, 100),
    ])
    assert validate(seq) == []


@pytest.mark.parametrize("note,fragment", [
    (NoteEvent(-1, 0.0, 1.0, 64), "pitch"),
    (NoteEvent(128, 0.0, 1.0, 64), "pitch"),
    (NoteEvent(60, 0.0, 1.0, 0), "velocity"),
    (NoteEvent(60, 0.0, 1.0, 128), "velocity"),
    (NoteEvent(60, -0.1, 1.0, 64), "onset"),
    (NoteEvent(60, 1.0, 1.0, 64), "offset"),
    (NoteEvent(60, 1.0, 0.5, 64), "offset"),
])
def test_validate_flags_bad_notes(note, fragment):
    seq = NoteSequence(notes=(note,), duration=10.0)
    problems = validate(seq)
    assert problems
    assert any(fragment in p for p in problems)


def test_validate_flags_duplicates_and_order():
    dup = NoteSequence(
        notes=(NoteEvent(60, 1.0, 2.0, 64), NoteEvent(60, 1.0, 1.5, 32)),
        duration=2.0,
    )
    assert any("duplicate" in p for p in validate(dup))

    unsorted = NoteSequence(
        notes=(NoteEvent(60, 2.0, 3.0, 64), NoteEvent(60, 1.0, 1.5, 64)),
        duration=3.0,
    )
    assert any("sorted" in p for p in validate(unsorted))


def test_validate_flags_short_duration():
    seq = NoteSequence(notes=(NoteEvent(60, 0.0, 2.0, 64),), duration=1.0)
    assert any("duration" in p for p in validate(seq))


def test_window_rebases_and_clips():
    seq = NoteSequence.from_notes([
        NoteEvent(60, 0.5, 1.5, 64),   # before the window
        NoteEvent(62, 2.0, 3.0, 64),   # starts at window start
        NoteEvent(64, 3.5, 6.0, 64),   # offset clipped
        NoteEvent(65, 4.0, 4.5, 64),   # starts at window end: excluded
    ], duration=10.0)
    win = window(seq, 2.0, 2.0)
    assert [n.pitch for n in win.notes] == [62, 64]
    assert win.notes[0].onset == 0.0
    assert win.notes[0].offset == 1.0
    assert win.notes[1].onset == 1.5
    assert win.notes[1].offset == 2.0  # clipped to window length
    assert win.duration == 2.0


def test_window_half_open_boundary():
    seq = NoteSequence.from_notes([NoteEvent(60, 2.0, 2.5, 64)], duration=10.0)
    assert len(window(seq, 2.0, 2.0)) == 1    # onset == start is inside
    assert len(window(seq, 0.0, 2.0)) == 0    # onset == end is outside


def test_perturb_identity_when_disabled():
    seq = NoteSequence.from_notes(
        [NoteEvent(60 + i, 0.2 * i, 0.2 * i + 0.1, 64) for i in range(20)]
    )
    assert perturb(seq, seed=5) == seq


def test_perturb_drop_everything():
    seq = NoteSequence.from_notes(
        [NoteEvent(60, 0.1 * i, 0.1 * i + 0.05, 64) for i in range(10)]
    )
    out = perturb(seq, drop_p=1.0, seed=0)
    assert len(out) == 0
    assert out.duration == seq.duration


def test_perturb_is_deterministic():
    seq = NoteSequence.from_notes(
        [NoteEvent(50 + i % 40, 0.05 * i, 0.05 * i + 0.2, 64) for i in range(200)]
    )
    a = perturb(seq, drop_p=0.3, spurious_rate=1.0, onset_jitter_std=0.01, seed=77)
    b = perturb(seq, drop_p=0.3, spurious_rate=1.0, onset_jitter_std=0.01, seed=77)
    assert a == b
    c = perturb(seq, drop_p=0.3, spurious_rate=1.0, onset_jitter_std=0.01, seed=78)
    assert a != c


def test_perturb_drop_rate_statistics():
    seq = NoteSequence.from_notes(
        [NoteEvent(21 + i % 88, 0.01 * i, 0.01 * i + 0.05, 64) for i in range(5000)]
    )
    out = perturb(seq, drop_p=0.25, seed=123)
    kept = len(out) / len(seq)
    assert abs(kept - 0.75) < 0.02


def test_perturb_subset_without_spurious_or_jitter():
    seq = NoteSequence.from_notes(
        [NoteEvent(40 + i % 50, 0.1 * i, 0.1 * i + 0.08, 90) for i in range(300)]
    )
    out = perturb(seq, drop_p=0.4, seed=9)
    original = set(seq.notes)
    assert all(n in original for n in out.notes)


def test_perturb_jitter_keeps_notes_valid():
    # Even absurd jitter cannot break the per-note invariants: onsets are
    # clamped to [0, offset - 1ms].
    seq = NoteSequence.from_notes(
        [NoteEvent(60, 0.02 * i, 0.02 * i + 0.03, 64) for i in range(500)]
    )
    out = perturb(seq, onset_jitter_std=0.5, seed=3)
    assert len(out) == len(seq)
    for note in out.notes:
        assert note.onset >= 0.0
        assert note.offset > note.onset
    ordered = sorted(out.notes, key=lambda n: (n.onset, n.pitch))
    assert list(out.notes) == ordered


def test_perturb_spurious_rate():
    seq = NoteSequence.from_notes([NoteEvent(60, 0.0, 100.0, 64)], duration=100.0)
    out = perturb(seq, spurious_rate=2.0, seed=42)
    # Poisson(200) extras plus the surviving original
    extras = len(out) - 1
    assert 150 < extras < 250
    assert validate(out) == []
