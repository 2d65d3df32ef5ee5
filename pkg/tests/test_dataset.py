from __future__ import annotations

import numpy as np
import pytest

from keybench.audio import AudioClip, save as save_wav
from keybench.dataset import (
    ManifestRecord,
    SourceSampler,
    SourceSpec,
    WeightsDoNotSumToOne,
    build_examples,
    discover_pairs,
    make_targets,
    read_manifest,
    write_manifest,
)
from keybench.midi import save as save_midi
from keybench.notes import NoteEvent, NoteSequence


def _sources(weights):
    return tuple(
        SourceSpec(name=f"s{i}", audio_root=f"/a{i}", label_root=f"/l{i}",
                   weight=w)
        for i, w in enumerate(weights)
    )


class TestSampler:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(WeightsDoNotSumToOne) as exc_info:
            SourceSampler(_sources([0.5, 0.4]), seed=0)
        assert exc_info.value.total == pytest.approx(0.9)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            _sources([1.5, -0.5])

    def test_draw_frequencies(self):
        weights = [0.25, 0.25] + [1.0 / 12] * 6
        sampler = SourceSampler(_sources(weights), seed=123)
        draws = sampler.draw_many(24000)
        counts = {s.name: 0 for s in sampler.sources}
        for s in draws:
            counts[s.name] += 1
        for spec, w in zip(sampler.sources, weights):
            assert abs(counts[spec.name] / 24000 - w) < 0.01, spec.name

    def test_determinism(self):
        a = SourceSampler(_sources([0.5, 0.5]), seed=7).draw_many(50)
        b = SourceSampler(_sources([0.5, 0.5]), seed=7).draw_many(50)
        assert [s.name for s in a] == [s.name for s in b]

    def test_zero_weight_source_never_drawn(self):
        sampler = SourceSampler(_sources([1.0, 0.0]), seed=3)
        assert all(s.name == "s0" for s in sampler.draw_many(500))


class TestBuildExamples:
    def _audio(self, seconds, rate=16000):
        gen = np.random.default_rng(0)
        return AudioClip(gen.normal(0.0, 0.1, int(seconds * rate)), rate)

    def _labels(self, onsets, duration):
        notes = tuple(
            NoteEvent(pitch=60 + i % 12, onset=t, offset=t + 0.5, velocity=80)
            for i, t in enumerate(sorted(onsets))
        )
        return NoteSequence(notes=notes, duration=duration)

    def test_exact_multiple_no_padding(self):
        examples = build_examples(self._audio(20.0), self._labels([], 20.0),
                                  window_s=10.0)
        assert len(examples) == 2
        assert not any(e.padded for e in examples)
        assert [e.start_s for e in examples] == [0.0, 10.0]

    def test_remainder_window_padded(self):
        examples = build_examples(self._audio(25.0), self._labels([], 25.0),
                                  window_s=10.0)
        assert len(examples) == 3
        assert [e.padded for e in examples] == [False, False, True]
        last = examples[2].audio
        assert len(last.samples) == 160000
        assert np.all(last.samples[80000:] == 0.0)

    def test_all_windows_have_full_length(self):
        for seconds in (7.0, 10.0, 13.3):
            for e in build_examples(self._audio(seconds),
                                    self._labels([], seconds), window_s=10.0):
                assert len(e.audio.samples) == 160000
                assert e.length_s == 10.0

    def test_labels_rebased_per_window(self):
        labels = self._labels([1.0, 12.5], 20.0)
        examples = build_examples(self._audio(20.0), labels, window_s=10.0)
        assert [n.onset for n in examples[0].labels.notes] == [1.0]
        assert [n.onset for n in examples[1].labels.notes] == pytest.approx([2.5])

    def test_boundary_note_goes_to_later_window(self):
        # Half-open windows: an onset exactly at 10.0 belongs to window 1.
        labels = self._labels([10.0], 20.0)
        examples = build_examples(self._audio(20.0), labels, window_s=10.0)
        assert len(examples[0].labels.notes) == 0
        assert [n.onset for n in examples[1].labels.notes] == [0.0]

    def test_offsets_clipped_to_window(self):
        labels = self._labels([9.8], 20.0)  # rings past the first cut
        examples = build_examples(self._audio(20.0), labels, window_s=10.0)
        note = examples[0].labels.notes[0]
        assert note.offset == pytest.approx(10.0)

    def test_hop_smaller_than_window_overlaps(self):
        examples = build_examples(self._audio(20.0), self._labels([], 20.0),
                                  window_s=10.0, hop_s=5.0)
        assert [e.start_s for e in examples] == [0.0, 5.0, 10.0, 15.0]

    def test_audio_partition_property(self):
        audio = self._audio(23.0)
        examples = build_examples(audio, self._labels([], 23.0), window_s=10.0)
        rebuilt = np.concatenate([e.audio.samples for e in examples])
        assert np.array_equal(rebuilt[: len(audio.samples)], audio.samples)
        assert np.all(rebuilt[len(audio.samples):] == 0.0)

    def test_invalid_window_rejected(self):
        with pytest.raises(ValueError):
            build_examples(self._audio(1.0), self._labels([], 1.0), window_s=0.0)
        with pytest.raises(ValueError):
            build_examples(self._audio(1.0), self._labels([], 1.0), hop_s=-1.0)


class TestMakeTargets:
    def _labels(self, entries, duration=2.0):
        notes = tuple(
            NoteEvent(pitch=p, onset=on, offset=off, velocity=v)
            for p, on, off, v in entries
        )
        return NoteSequence(notes=notes, duration=duration)

    def test_shapes_and_dtype(self):
        t = make_targets(self._labels([]), 2.0, fps=100)
        assert t.onset_roll.shape == (201, 128)
        assert t.frame_roll.shape == (201, 128)
        assert t.velocity_roll.shape == (201, 128)
        assert t.onset_roll.dtype == np.float32
        assert t.n_frames == 201

    def test_on_grid_triangle(self):
        t = make_targets(self._labels([(60, 1.0, 1.5, 127)]), 2.0,
                         fps=100, onset_spread=3)
        col = t.onset_roll[:, 60]
        expected = np.zeros(201, dtype=np.float32)
        expected[98:103] = [1 / 3, 2 / 3, 1.0, 2 / 3, 1 / 3]
        assert np.allclose(col, expected, atol=1e-6)

    def test_triangle_mass_is_spread_for_off_grid_onsets(self):
        for onset in (0.5004, 0.7071, 1.0, 1.23456):
            t = make_targets(self._labels([(64, onset, onset + 0.3, 90)]), 2.0,
                             fps=100, onset_spread=3)
            assert float(t.onset_roll[:, 64].sum()) == pytest.approx(3.0, abs=1e-5)

    def test_frame_roll_half_open(self):
        t = make_targets(self._labels([(60, 1.0, 1.5, 100)]), 2.0, fps=100)
        col = t.frame_roll[:, 60]
        assert np.all(col[100:150] == 1.0)
        assert col[150] == 0.0
        assert col[99] == 0.0

    def test_velocity_on_triangle_support(self):
        t = make_targets(self._labels([(60, 1.0, 1.5, 127)]), 2.0, fps=100)
        vcol = t.velocity_roll[:, 60]
        assert vcol[100] == pytest.approx(1.0)
        assert vcol[98] == pytest.approx(1.0)
        assert vcol[97] == 0.0

    def test_velocity_collision_takes_max(self):
        labels = self._labels([(60, 1.0, 1.2, 40), (60, 1.02, 1.4, 120)])
        t = make_targets(labels, 2.0, fps=100)
        assert t.velocity_roll[101, 60] == pytest.approx(120 / 127)

    def test_overlapping_triangles_take_max(self):
        labels = self._labels([(60, 1.0, 1.2, 80), (60, 1.01, 1.4, 80)])
        t = make_targets(labels, 2.0, fps=100)
        # Frame 100 is the peak of the first onset and 2/3 into the second.
        assert t.onset_roll[100, 60] == pytest.approx(1.0)

    def test_note_near_window_end_truncates(self):
        t = make_targets(self._labels([(72, 1.99, 2.5, 70)]), 2.0, fps=100)
        assert t.frame_roll[199, 72] == 1.0
        assert t.onset_roll[200, 72] > 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            make_targets(self._labels([]), 0.0)
        with pytest.raises(ValueError):
            make_targets(self._labels([]), 1.0, fps=0)
        with pytest.raises(ValueError):
            make_targets(self._labels([]), 1.0, onset_spread=0)


class TestManifest:
    def test_round_trip(self, tmp_path):
        records = [
            ManifestRecord("maestro", "f1", 0.0, 10.0, False),
            ManifestRecord("maps", "f2", 10.0, 10.0, True, augment_seed=99),
        ]
        path = tmp_path / "manifest.jsonl"
        write_manifest(records, path)
        assert read_manifest(path) == records

    def test_augment_seed_absent_when_none(self, tmp_path):
        path = tmp_path / "m.jsonl"
        write_manifest([ManifestRecord("s", "f", 0.0, 10.0, False)], path)
        assert "augment_seed" not in path.read_text()


class TestDiscoverPairs:
    def test_matches_by_stem(self, tmp_path):
        audio_root = tmp_path / "audio"
        label_root = tmp_path / "labels"
        audio_root.mkdir()
        label_root.mkdir()
        clip = AudioClip(np.zeros(100) + 0.1, 16000)
        seq = NoteSequence(
            notes=(NoteEvent(pitch=60, onset=0.0, offset=0.5, velocity=64),),
            duration=1.0,
        )
        for stem in ("b", "a", "only_audio"):
            save_wav(clip, audio_root / f"{stem}.wav")
        save_midi(seq, label_root / "a.mid")
        save_midi(seq, label_root / "b.midi")
        save_midi(seq, label_root / "only_labels.mid")

        pairs = discover_pairs(audio_root, label_root)
        assert [p[0] for p in pairs] == ["a", "b"]
        assert pairs[0][1].name == "a.wav"
        assert pairs[1][2].name == "b.midi"
