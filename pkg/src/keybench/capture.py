"""Simulate how a recording rig timestamps note events.

Two timestamping strategies are modeled. "sample_clock" indexes events with
the same oscillator that drives the ADC, so label time and audio time cannot
drift apart. "wall_clock" indexes events with a separate clock running at a
slightly different rate (ppm error), which accumulates drift over the length
of a recording: at 100 ppm a ten minute take ends 60 ms out of register.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .notes import NoteSequence

STRATEGIES = ("sample_clock", "wall_clock")


class CaptureError(Exception):
    pass


class TooFewEvents(CaptureError):
    def __init__(self, count: int) -> None:
        super().__init__(f"need at least 2 events to fit drift, got {count}")
        self.count = count


@dataclass(frozen=True)
class ClockModel:
    """Capture rig clock: nominal rate, rate error, per-event jitter."""

    nominal_rate: float = 16000.0
    ppm_error: float = 0.0
    jitter_std_s: float = 0.0

    def __post_init__(self) -> None:
        if self.nominal_rate <= 0.0:
            raise ValueError(f"nominal_rate must be > 0, got {self.nominal_rate}")
        if abs(self.ppm_error) >= 10_000.0:
            raise ValueError(f"|ppm_error| must be < 10000, got {self.ppm_error}")
        if self.jitter_std_s < 0.0:
            raise ValueError(f"jitter_std_s must be >= 0, got {self.jitter_std_s}")

    @property
    def actual_rate(self) -> float:
        return self.nominal_rate * (1.0 + self.ppm_error / 1e6)


@dataclass(frozen=True)
class ScheduledEvent:
    kind: str  # "on" or "off"
    pitch: int
    ideal_time_s: float
    realized_sample_index: int

    def __post_init__(self) -> None:
        if self.kind not in ("on", "off"):
            raise ValueError(f"kind must be 'on' or 'off', got {self.kind!r}")
        if self.realized_sample_index < 0:
            raise ValueError("realized_sample_index must be >= 0")


def schedule(
    seq: NoteSequence,
    clock: ClockModel,
    strategy: str = "sample_clock",
    seed: int = 0,
) -> list[ScheduledEvent]:
    """Convert note times to sample indices under a timestamping strategy.

    Both strategies add the same seeded Gaussian jitter to the ideal time
    first. sample_clock then rounds against the nominal rate; wall_clock
    rounds against the erroneous actual rate, so its indices misreport the
    event position when interpreted at nominal rate.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")
    rng = np.random.default_rng(seed)
    raw: list[tuple[float, int, str]] = []
    for note in seq.notes:
        raw.append((note.onset, note.pitch, "on"))
        raw.append((note.offset, note.pitch, "off"))
    raw.sort(key=lambda item: (item[0], item[2] == "on", item[1]))

    rate = clock.nominal_rate if strategy == "sample_clock" else clock.actual_rate
    events: list[ScheduledEvent] = []
    for ideal_t, pitch, kind in raw:
        jitter = rng.normal(0.0, clock.jitter_std_s) if clock.jitter_std_s > 0 else 0.0
        idx = int(round((ideal_t + jitter) * rate))
        events.append(
            ScheduledEvent(
                kind=kind,
                pitch=pitch,
                ideal_time_s=ideal_t,
                realized_sample_index=max(idx, 0),
            )
        )
    return events


@dataclass(frozen=True)
class DriftReport:
    max_abs_error_s: float
    drift_slope: float  # seconds of error per second of program time
    n_events: int


def measure_drift(events: list[ScheduledEvent], nominal_rate: float) -> DriftReport:
    """Fit timestamp error against program time.

    Error per event is realized_index / nominal_rate - ideal_time: how far
    off the event appears when its index is read back at the nominal rate.
    The slope of the least-squares line through (ideal_time, error) is the
    drift rate; for a wall clock with ppm error p it comes out at p * 1e-6.
    """
    if len(events) < 2:
        raise TooFewEvents(len(events))
    if nominal_rate <= 0.0:
        raise ValueError(f"nominal_rate must be > 0, got {nominal_rate}")
    ideal = np.array([e.ideal_time_s for e in events], dtype=np.float64)
    realized = np.array(
        [e.realized_sample_index for e in events], dtype=np.float64
    ) / nominal_rate
    error = realized - ideal
    if np.ptp(ideal) == 0.0:
        slope = 0.0
    else:
        slope = float(np.polyfit(ideal, error, 1)[0])
    return DriftReport(
        max_abs_error_s=float(np.max(np.abs(error))),
        drift_slope=slope,
        n_events=len(events),
    )


def write_drift_csv(
    events: list[ScheduledEvent], nominal_rate: float, path: str | Path
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["kind", "pitch", "ideal_time_s", "realized_sample_index", "error_s"]
        )
        for e in events:
            err = e.realized_sample_index / nominal_rate - e.ideal_time_s
            writer.writerow(
                [e.kind, e.pitch, f"{e.ideal_time_s:.9f}", e.realized_sample_index, f"{err:.9f}"]
            )
