"""Benchmark toolkit for piano transcription robustness experiments.

Submodules are imported lazily by callers; keeping this module lean makes
subprocess entry points (the reference transcribers) start fast.
"""

from .notes import NoteEvent, NoteSequence

__version__ = "0.1.0"

__all__ = ["NoteEvent", "NoteSequence", "__version__"]
