"""Reference transcribers for exercising the experiment harness.

These stand in for a real transcription model. The identity oracle copies
the ground-truth labels to its output, so every downstream score should be
perfect; the perturb oracle degrades the labels in a controlled, seeded way,
giving the harness a nontrivial but predictable system under test.

Run as `python -m keybench.oracle`. Imports stay minimal (stdlib plus the
note and SMF modules) because the harness spawns one process per file.
"""

from __future__ import annotations

import argparse
import hashlib
import sys

from .midi import load as load_midi, save as save_midi
from .notes import perturb


def _seed_from_path(path: str, salt: int) -> int:
    digest = hashlib.sha256(f"{salt}|{path}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="keybench-oracle",
        description="Reference transcriber: copies or perturbs ground-truth labels.",
    )
    parser.add_argument("--mode", choices=("identity", "perturb"), default="identity")
    parser.add_argument("--input-wav", required=True, help="audio input (unused by identity)")
    parser.add_argument("--ref-mid", required=True, help="ground-truth labels")
    parser.add_argument("--output-mid", required=True, help="where to write the transcription")
    parser.add_argument("--drop-p", type=float, default=0.1)
    parser.add_argument("--spurious-rate", type=float, default=0.5)
    parser.add_argument("--onset-jitter-std", type=float, default=0.01)
    parser.add_argument("--seed-salt", type=int, default=0)
    args = parser.parse_args(argv)

    seq = load_midi(args.ref_mid)
    if args.mode == "perturb":
        seq = perturb(
            seq,
            drop_p=args.drop_p,
            spurious_rate=args.spurious_rate,
            onset_jitter_std=args.onset_jitter_std,
            seed=_seed_from_path(args.input_wav, args.seed_salt),
        )
    save_midi(seq, args.output_mid)
    return 0


if __name__ == "__main__":
    sys.exit(main())
