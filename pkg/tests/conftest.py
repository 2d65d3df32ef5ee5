from __future__ import annotations

import sys

import numpy as np
import pytest

from keybench import audio
from keybench.notes import NoteEvent, NoteSequence


def pytest_terminal_summary(terminalreporter):
    # Echo the acceptance gate verdicts where capture cannot hide them.
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def random_sequence(rng: np.random.Generator, n_notes: int,
                    duration: float = 10.0) -> NoteSequence:
    notes = []
    for _ in range(n_notes):
        onset = float(rng.uniform(0.0, duration - 0.2))
        length = float(rng.uniform(0.05, min(2.0, duration - onset)))
        notes.append(NoteEvent(
            pitch=int(rng.integers(21, 109)),
            onset=onset,
            offset=onset + length,
            velocity=int(rng.integers(1, 128)),
        ))
    return NoteSequence.from_notes(notes, duration=duration)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def noise_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("noise_bank")
    gen = np.random.default_rng(11)
    for i, length_s in enumerate((3.0, 10.0, 0.4)):
        samples = gen.normal(0.0, 0.05, int(16000 * length_s))
        audio.save(audio.AudioClip(samples, 16000), directory / f"noise{i}.wav")
    return directory


@pytest.fixture(scope="session")
def ir_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("ir_bank")
    gen = np.random.default_rng(12)
    short = np.zeros(800)
    short[0] = 1.0
    short[200] = 0.4
    short[500] = 0.15
    audio.save(audio.AudioClip(short, 16000), directory / "room_small.wav")
    tail = gen.normal(0.0, 0.1, 4000) * np.exp(-np.arange(4000) / 900.0)
    tail[0] = 1.0
    audio.save(audio.AudioClip(tail, 16000), directory / "room_large.wav")
    return directory
