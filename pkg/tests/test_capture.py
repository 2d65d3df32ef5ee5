from __future__ import annotations

import csv

import numpy as np
import pytest

from keybench.capture import (
    ClockModel,
    ScheduledEvent,
    TooFewEvents,
    measure_drift,
    schedule,
    write_drift_csv,
)
from keybench.notes import NoteEvent, NoteSequence


def _long_take(n_notes=300, spacing=2.0, note_len=0.5):
    notes = tuple(
        NoteEvent(pitch=60 + i % 24, onset=i * spacing,
                  offset=i * spacing + note_len, velocity=80)
        for i in range(n_notes)
    )
    return NoteSequence(notes=notes, duration=n_notes * spacing + 1.0)


class TestClockModel:
    def test_actual_rate(self):
        clock = ClockModel(nominal_rate=16000.0, ppm_error=100.0)
        assert clock.actual_rate == pytest.approx(16001.6)

    def test_validation(self):
        with pytest.raises(ValueError):
            ClockModel(nominal_rate=0.0)
        with pytest.raises(ValueError):
            ClockModel(ppm_error=10_000.0)
        with pytest.raises(ValueError):
            ClockModel(jitter_std_s=-0.1)

    def test_event_validation(self):
        with pytest.raises(ValueError):
            ScheduledEvent(kind="hold", pitch=60, ideal_time_s=0.0,
                           realized_sample_index=0)
        with pytest.raises(ValueError):
            ScheduledEvent(kind="on", pitch=60, ideal_time_s=0.0,
                           realized_sample_index=-1)


class TestSchedule:
    def test_sample_clock_exact_to_half_sample(self):
        clock = ClockModel(nominal_rate=16000.0)
        events = schedule(_long_take(50), clock, "sample_clock")
        for e in events:
            err = e.realized_sample_index / 16000.0 - e.ideal_time_s
            assert abs(err) <= 0.5 / 16000.0 + 1e-12

    def test_two_events_per_note(self):
        events = schedule(_long_take(10), ClockModel(), "sample_clock")
        assert len(events) == 20
        assert sum(e.kind == "on" for e in events) == 10

    def test_off_sorts_before_on_at_equal_time(self):
        notes = (
            NoteEvent(pitch=60, onset=0.0, offset=1.0, velocity=64),
            NoteEvent(pitch=62, onset=1.0, offset=2.0, velocity=64),
        )
        seq = NoteSequence(notes=notes, duration=2.5)
        events = schedule(seq, ClockModel(), "sample_clock")
        at_one = [e for e in events if e.ideal_time_s == 1.0]
        assert [e.kind for e in at_one] == ["off", "on"]

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            schedule(_long_take(2), ClockModel(), "gps")

    def test_jitter_determinism(self):
        clock = ClockModel(jitter_std_s=0.002)
        a = schedule(_long_take(30), clock, "sample_clock", seed=5)
        b = schedule(_long_take(30), clock, "sample_clock", seed=5)
        c = schedule(_long_take(30), clock, "sample_clock", seed=6)
        assert a == b
        assert a != c

    def test_negative_index_clamped(self):
        notes = (NoteEvent(pitch=60, onset=0.0, offset=0.1, velocity=64),)
        seq = NoteSequence(notes=notes, duration=0.2)
        clock = ClockModel(jitter_std_s=0.5)
        for seed in range(20):
            for e in schedule(seq, clock, "sample_clock", seed=seed):
                assert e.realized_sample_index >= 0

    def test_wall_clock_indices_run_fast(self):
        clock = ClockModel(nominal_rate=16000.0, ppm_error=100.0)
        sc = schedule(_long_take(100), clock, "sample_clock")
        wc = schedule(_long_take(100), clock, "wall_clock")
        # Late events get a visibly larger index under the fast wall clock.
        assert wc[-1].realized_sample_index > sc[-1].realized_sample_index


class TestMeasureDrift:
    def test_wall_clock_100ppm_slope(self):
        clock = ClockModel(nominal_rate=16000.0, ppm_error=100.0)
        events = schedule(_long_take(300, spacing=2.0), clock, "wall_clock")
        report = measure_drift(events, clock.nominal_rate)
        assert report.drift_slope == pytest.approx(1.0e-4, abs=1e-6)
        # 100 ppm over a 600 s take puts the tail about 60 ms late.
        assert report.max_abs_error_s == pytest.approx(0.060, abs=0.002)

    def test_sample_clock_slope_negligible(self):
        clock = ClockModel(nominal_rate=16000.0, ppm_error=100.0)
        events = schedule(_long_take(300, spacing=2.0), clock, "sample_clock")
        report = measure_drift(events, clock.nominal_rate)
        assert abs(report.drift_slope) < 1e-7
        assert report.max_abs_error_s <= 0.5 / 16000.0 + 1e-12

    def test_negative_ppm_negative_slope(self):
        clock = ClockModel(nominal_rate=16000.0, ppm_error=-50.0)
        events = schedule(_long_take(200), clock, "wall_clock")
        report = measure_drift(events, clock.nominal_rate)
        assert report.drift_slope == pytest.approx(-5.0e-5, abs=1e-6)

    def test_too_few_events(self):
        with pytest.raises(TooFewEvents) as exc_info:
            measure_drift([], 16000.0)
        assert exc_info.value.count == 0

    def test_n_events_reported(self):
        events = schedule(_long_take(25), ClockModel(), "sample_clock")
        assert measure_drift(events, 16000.0).n_events == 50


class TestDriftCsv:
    def test_written_columns(self, tmp_path):
        clock = ClockModel(nominal_rate=16000.0, ppm_error=100.0)
        events = schedule(_long_take(5), clock, "wall_clock")
        path = tmp_path / "drift.csv"
        write_drift_csv(events, clock.nominal_rate, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["kind", "pitch", "ideal_time_s",
                           "realized_sample_index", "error_s"]
        assert len(rows) == 11
        err = float(rows[-1][4])
        ideal = float(rows[-1][2])
        assert err == pytest.approx(ideal * 1e-4, abs=1e-4)
