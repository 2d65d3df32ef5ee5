"""Command-line front end.

Exit codes: 0 success, 1 bad configuration or arguments, 2 dataset problems,
3 every file in an experiment failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATASET = 2
EXIT_ALL_FAILED = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 means "dataset problem" here, so
    # route usage errors to the config exit code instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="keybench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_aug = sub.add_parser("augment", help="degrade a wav through the augmentation chain")
    p_aug.add_argument("input_wav")
    p_aug.add_argument("output_wav")
    p_aug.add_argument("--seed", type=int, default=0)
    p_aug.add_argument(
        "--stages",
        help="comma-separated stages applied with probability 1 "
        "(default: all stages at probability 0.5)",
    )
    p_aug.add_argument("--noise-dir")
    p_aug.add_argument("--ir-dir")
    p_aug.add_argument("--snr-range", nargs=2, type=float, default=[17.5, 25.0],
                       metavar=("LOW", "HIGH"))
    p_aug.add_argument("--pitch-range", nargs=2, type=float, default=[-10.0, 10.0],
                       metavar=("LOW", "HIGH"))
    p_aug.add_argument("--eq-gain-range", nargs=2, type=float, default=[-10.0, 5.0],
                       metavar=("LOW", "HIGH"))
    p_aug.add_argument("--log", help="write the applied-stage log to this JSON file")
    p_aug.add_argument("--encoding", default="float32",
                       choices=("float32", "pcm16", "pcm24"))

    p_eval = sub.add_parser("eval", help="score an estimated MIDI against a reference")
    p_eval.add_argument("--ref", required=True)
    p_eval.add_argument("--est", required=True)
    p_eval.add_argument("--onset-tolerance", type=float, default=0.05)
    p_eval.add_argument("--json", action="store_true", dest="as_json")

    p_ds = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = p_ds.add_subparsers(dest="dataset_command", required=True,
                                 parser_class=_Parser)
    p_build = ds_sub.add_parser("build", help="window a corpus into training examples")
    p_build.add_argument("--audio-dir", required=True)
    p_build.add_argument("--midi-dir", required=True)
    p_build.add_argument("--source", default="corpus")
    p_build.add_argument("--manifest", required=True, help="output JSONL path")
    p_build.add_argument("--window", type=float, default=10.0)
    p_build.add_argument("--hop", type=float)

    p_synth = sub.add_parser("synth", help="synthesis utilities")
    sy_sub = p_synth.add_subparsers(dest="synth_command", required=True,
                                    parser_class=_Parser)
    p_render = sy_sub.add_parser("render", help="render a MIDI file to audio")
    p_render.add_argument("--notes", required=True, help="input MIDI path")
    p_render.add_argument("--out", required=True, help="output wav path")
    p_render.add_argument("--preset", default="grand_warm")
    p_render.add_argument("--rate", type=int, default=16000)
    p_render.add_argument("--encoding", default="float32",
                          choices=("float32", "pcm16", "pcm24"))

    p_cap = sub.add_parser("capture-sim",
                           help="simulate capture timestamping and report drift")
    p_cap.add_argument("--notes", required=True, help="input MIDI path")
    p_cap.add_argument("--strategy", default="wall_clock",
                       choices=("sample_clock", "wall_clock"))
    p_cap.add_argument("--rate", type=float, default=16000.0)
    p_cap.add_argument("--ppm", type=float, default=0.0)
    p_cap.add_argument("--jitter-std", type=float, default=0.0)
    p_cap.add_argument("--seed", type=int, default=0)
    p_cap.add_argument("--csv", help="write per-event drift rows to this file")

    p_exp = sub.add_parser("experiment", help="run and report experiments")
    ex_sub = p_exp.add_subparsers(dest="experiment_command", required=True,
                                  parser_class=_Parser)
    p_run = ex_sub.add_parser("run", help="run the experiment grid from a TOML config")
    p_run.add_argument("config", help="TOML config path")
    p_report = ex_sub.add_parser("report", help="re-render a result table from its CSV")
    p_report.add_argument("csv", help="table.csv produced by a run")

    return parser


def _cmd_augment(args) -> int:
    from .audio import load, save
    from .augment import STAGES, AugmentConfig, IrBank, NoiseBank, augment_chain

    if args.stages is not None:
        wanted = [s.strip() for s in args.stages.split(",") if s.strip()]
        unknown = set(wanted) - set(STAGES)
        if unknown:
            print(f"unknown stages: {sorted(unknown)}", file=sys.stderr)
            return EXIT_CONFIG
        probs = {s: (1.0 if s in wanted else 0.0) for s in STAGES}
    else:
        probs = {s: 0.5 for s in STAGES}
    config = AugmentConfig(
        stage_probability=probs,
        eq_gain_range_db=tuple(args.eq_gain_range),
        snr_range_db=tuple(args.snr_range),
        pitch_range_cents=tuple(args.pitch_range),
        noise_dir=args.noise_dir,
        ir_dir=args.ir_dir,
    )
    noise_bank = NoiseBank.from_dir(args.noise_dir) if args.noise_dir else None
    ir_bank = IrBank.from_dir(args.ir_dir) if args.ir_dir else None
    clip = load(args.input_wav)
    out, log = augment_chain(clip, config, args.seed,
                             noise_bank=noise_bank, ir_bank=ir_bank)
    save(out, args.output_wav, encoding=args.encoding)
    if args.log:
        Path(args.log).write_text(log.to_json(), encoding="utf-8")
    applied = [d.stage for d in log.stages if d.applied]
    print(f"applied: {', '.join(applied) if applied else 'nothing'}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .evaluation import evaluate
    from .midi import load

    metrics = evaluate(load(args.ref), load(args.est), args.onset_tolerance)
    if args.as_json:
        print(json.dumps({
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
            "n_ref": metrics.n_ref,
            "n_est": metrics.n_est,
            "n_match": metrics.n_match,
        }))
    else:
        print(f"precision {metrics.precision:.4f}  recall {metrics.recall:.4f}  "
              f"f1 {metrics.f1:.4f}  ({metrics.n_match}/{metrics.n_ref} ref, "
              f"{metrics.n_est} est)")
    return EXIT_OK


def _cmd_dataset_build(args) -> int:
    from .audio import load as load_wav
    from .dataset import ManifestRecord, build_examples, discover_pairs, write_manifest
    from .midi import load as load_midi

    pairs = discover_pairs(args.audio_dir, args.midi_dir)
    if not pairs:
        print(f"no paired files under {args.audio_dir} / {args.midi_dir}",
              file=sys.stderr)
        return EXIT_DATASET
    records = []
    for file_id, wav_path, mid_path in pairs:
        examples = build_examples(
            load_wav(wav_path), load_midi(mid_path),
            source=args.source, file_id=file_id,
            window_s=args.window, hop_s=args.hop,
        )
        for ex in examples:
            records.append(ManifestRecord(
                source=ex.source, file_id=ex.file_id,
                start_s=ex.start_s, length_s=ex.length_s, padded=ex.padded,
            ))
    write_manifest(records, args.manifest)
    print(f"{len(records)} examples from {len(pairs)} files -> {args.manifest}")
    return EXIT_OK


def _cmd_synth_render(args) -> int:
    from .audio import save
    from .midi import load
    from .synth import DEFAULT_PRESETS, render

    if args.preset not in DEFAULT_PRESETS:
        print(f"unknown preset {args.preset!r}; "
              f"available: {', '.join(sorted(DEFAULT_PRESETS))}", file=sys.stderr)
        return EXIT_CONFIG
    clip = render(load(args.notes), DEFAULT_PRESETS[args.preset], args.rate)
    save(clip, args.out, encoding=args.encoding)
    print(f"{clip.duration:.2f}s at {args.rate} Hz -> {args.out}")
    return EXIT_OK


def _cmd_capture_sim(args) -> int:
    from .capture import ClockModel, measure_drift, schedule, write_drift_csv
    from .midi import load

    clock = ClockModel(nominal_rate=args.rate, ppm_error=args.ppm,
                       jitter_std_s=args.jitter_std)
    events = schedule(load(args.notes), clock, args.strategy, args.seed)
    report = measure_drift(events, args.rate)
    if args.csv:
        write_drift_csv(events, args.rate, args.csv)
    print(f"{len(events)} events  max |error| {report.max_abs_error_s * 1000.0:.3f} ms  "
          f"drift slope {report.drift_slope:.3e}")
    return EXIT_OK


def _cmd_experiment_run(args) -> int:
    from .harness import (
        AllFilesFailed, DatasetMissing, InvalidConfig,
        load_config, run_experiment,
    )

    try:
        config = load_config(args.config)
        table = run_experiment(config)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetMissing as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except AllFilesFailed as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    out = Path(config.output_dir)
    n_cells = len(table.conditions) * len(table.datasets)
    print(f"{len(table.conditions)} conditions x {len(table.datasets)} datasets "
          f"({n_cells} cells) -> {out / 'table.md'}")
    return EXIT_OK


def _cmd_experiment_report(args) -> int:
    from .harness import emit_markdown, parse_table_csv

    text = Path(args.csv).read_text(encoding="utf-8")
    print(emit_markdown(parse_table_csv(text)), end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "augment":
        return _cmd_augment(args)
    if args.command == "eval":
        return _cmd_eval(args)
    if args.command == "dataset":
        return _cmd_dataset_build(args)
    if args.command == "synth":
        return _cmd_synth_render(args)
    if args.command == "capture-sim":
        return _cmd_capture_sim(args)
    if args.command == "experiment":
        if args.experiment_command == "run":
            return _cmd_experiment_run(args)
        return _cmd_experiment_report(args)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
