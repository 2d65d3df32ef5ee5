"""Corpus windowing, source sampling, and training-target construction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioClip
from .notes import NoteSequence, window as window_notes

DEFAULT_WINDOW_S = 10.0
DEFAULT_FPS = 100
DEFAULT_ONSET_SPREAD = 3


class DatasetError(Exception):
    pass


class WeightsDoNotSumToOne(DatasetError):
    def __init__(self, total: float) -> None:
        super().__init__(f"source weights sum to {total!r}, expected 1.0")
        self.total = total


@dataclass(frozen=True)
class SourceSpec:
    """One corpus: a name, where its audio and labels live, and a mixing weight."""

    name: str
    audio_root: str
    label_root: str
    weight: float

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("source name must be non-empty")
        if self.weight < 0.0:
            raise ValueError(f"weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class SourceSampler:
    """Seeded weighted draw over sources.

    The draw stream depends only on the seed and the (ordered) weights, so a
    run can be reproduced from its config alone.
    """

    sources: tuple[SourceSpec, ...]
    seed: int
    _rng: np.random.Generator = field(init=False, repr=False, compare=False)
    _cumulative: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.sources:
            raise DatasetError("no sources to sample from")
        total = float(sum(s.weight for s in self.sources))
        if abs(total - 1.0) > 1e-9:
            raise WeightsDoNotSumToOne(total)
        object.__setattr__(self, "_rng", np.random.default_rng(self.seed))
        cum = np.cumsum([s.weight for s in self.sources])
        cum[-1] = 1.0  # guard the top edge against rounding
        object.__setattr__(self, "_cumulative", cum)

    def draw(self) -> SourceSpec:
        u = self._rng.random()
        idx = int(np.searchsorted(self._cumulative, u, side="right"))
        idx = min(idx, len(self.sources) - 1)
        return self.sources[idx]

    def draw_many(self, count: int) -> list[SourceSpec]:
        return [self.draw() for _ in range(count)]


def sample_source(sources: tuple[SourceSpec, ...], seed: int) -> SourceSpec:
    return SourceSampler(sources, seed).draw()


@dataclass(frozen=True)
class ExampleWindow:
    """A fixed-length training example cut from a longer recording."""

    source: str
    file_id: str
    start_s: float
    length_s: float
    audio: AudioClip
    labels: NoteSequence
    padded: bool


def build_examples(
    audio: AudioClip,
    labels: NoteSequence,
    *,
    source: str = "",
    file_id: str = "",
    window_s: float = DEFAULT_WINDOW_S,
    hop_s: float | None = None,
) -> list[ExampleWindow]:
    """Cut a recording into fixed-length windows at a regular hop.

    Window starts are 0, hop, 2*hop, ... for every start strictly inside the
    audio. The last window is zero-padded to full length and flagged. Labels
    are re-based so each window's notes start at time zero, with offsets
    clipped to the window end.
    """
    if window_s <= 0.0:
        raise ValueError(f"window_s must be > 0, got {window_s}")
    if hop_s is None:
        hop_s = window_s
    if hop_s <= 0.0:
        raise ValueError(f"hop_s must be > 0, got {hop_s}")

    n_window = int(round(window_s * audio.sample_rate))
    examples: list[ExampleWindow] = []
    k = 0
    while k * hop_s < audio.duration:
        start_s = k * hop_s
        start_idx = int(round(start_s * audio.sample_rate))
        segment = audio.samples[start_idx : start_idx + n_window]
        padded = segment.size < n_window
        if padded:
            segment = np.concatenate(
                [segment, np.zeros(n_window - segment.size, dtype=np.float64)]
            )
        examples.append(
            ExampleWindow(
                source=source,
                file_id=file_id,
                start_s=start_s,
                length_s=window_s,
                audio=AudioClip(samples=segment, sample_rate=audio.sample_rate),
                labels=window_notes(labels, start_s, window_s),
                padded=padded,
            )
        )
        k += 1
    return examples


@dataclass(frozen=True)
class TargetTensors:
    """Frame-rate rolls a transcription model trains against."""

    onset_roll: np.ndarray
    frame_roll: np.ndarray
    velocity_roll: np.ndarray
    fps: int

    def __post_init__(self) -> None:
        for name in ("onset_roll", "frame_roll", "velocity_roll"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[1] != 128:
                raise ValueError(f"{name} must have shape (frames, 128)")
            if arr.dtype != np.float32:
                raise ValueError(f"{name} must be float32")

    @property
    def n_frames(self) -> int:
        return int(self.onset_roll.shape[0])


def make_targets(
    labels: NoteSequence,
    window_s: float,
    *,
    fps: int = DEFAULT_FPS,
    onset_spread: int = DEFAULT_ONSET_SPREAD,
) -> TargetTensors:
    """Rasterize note labels into onset, frame, and velocity rolls.

    Onsets become triangles: frame t gets max(0, 1 - |t/fps - onset| * fps/J)
    where J is the spread. The triangle peaks at 1 on the frame nearest the
    onset, covers at most 2J-1 frames, and its values always sum to exactly J
    regardless of where the onset falls between frames. Frame targets are 1
    over [onset, offset); velocity targets carry velocity/127 on the frames
    where that note's triangle dominates.
    """
    if window_s <= 0.0:
        raise ValueError(f"window_s must be > 0, got {window_s}")
    if fps <= 0:
        raise ValueError(f"fps must be > 0, got {fps}")
    if onset_spread < 1:
        raise ValueError(f"onset_spread must be >= 1, got {onset_spread}")

    n_frames = int(round(window_s * fps)) + 1
    onset_roll = np.zeros((n_frames, 128), dtype=np.float32)
    frame_roll = np.zeros((n_frames, 128), dtype=np.float32)
    velocity_roll = np.zeros((n_frames, 128), dtype=np.float32)

    times = np.arange(n_frames, dtype=np.float64) / fps
    for note in labels.notes:
        tri = 1.0 - np.abs(times - note.onset) * (fps / onset_spread)
        tri = np.maximum(tri, 0.0)
        col = onset_roll[:, note.pitch]
        np.maximum(col, tri.astype(np.float32), out=col)

        first = int(math.ceil(round(note.onset * fps, 9)))
        last = int(math.ceil(round(note.offset * fps, 9)))  # exclusive
        first = max(first, 0)
        last = min(last, n_frames)
        if last > first:
            frame_roll[first:last, note.pitch] = 1.0

        vel = np.float32(note.velocity / 127.0)
        vcol = velocity_roll[:, note.pitch]
        mask = tri > 0.0
        vcol[mask] = np.maximum(vcol[mask], vel)
    return TargetTensors(
        onset_roll=onset_roll,
        frame_roll=frame_roll,
        velocity_roll=velocity_roll,
        fps=fps,
    )


# --- manifest persistence -------------------------------------------------


@dataclass(frozen=True)
class ManifestRecord:
    source: str
    file_id: str
    start_s: float
    length_s: float
    padded: bool
    augment_seed: int | None = None

    def to_json(self) -> dict:
        out = {
            "source": self.source,
            "file_id": self.file_id,
            "start_s": self.start_s,
            "length_s": self.length_s,
            "padded": self.padded,
        }
        if self.augment_seed is not None:
            out["augment_seed"] = self.augment_seed
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestRecord":
        return cls(
            source=obj["source"],
            file_id=obj["file_id"],
            start_s=float(obj["start_s"]),
            length_s=float(obj["length_s"]),
            padded=bool(obj["padded"]),
            augment_seed=obj.get("augment_seed"),
        )


def write_manifest(records: list[ManifestRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[ManifestRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ManifestRecord.from_json(json.loads(line)))
    return records


def discover_pairs(
    audio_root: str | Path, label_root: str | Path
) -> list[tuple[str, Path, Path]]:
    """Match audio files to label files by stem.

    Returns (file_id, wav_path, mid_path) for every stem present on both
    sides, sorted by file_id. Stems present on only one side are skipped.
    """
    audio_root = Path(audio_root)
    label_root = Path(label_root)
    wavs = {p.stem: p for p in sorted(audio_root.glob("*.wav"))}
    mids = {p.stem: p for p in sorted(label_root.glob("*.mid"))}
    mids.update({p.stem: p for p in sorted(label_root.glob("*.midi"))})
    out = []
    for stem in sorted(wavs.keys() & mids.keys()):
        out.append((stem, wavs[stem], mids[stem]))
    return out
