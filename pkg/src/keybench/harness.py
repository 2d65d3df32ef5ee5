"""Run degradation and ablation experiments against an external transcriber.

An experiment is a grid of conditions x datasets x files. Each condition
names a set of augmentation stages; those stages are applied to every test
file with probability 1, the configured transcriber is run on the augmented
audio, and its output is scored against the clean reference labels. Note
that none of the stages move note times (pitch shift is length-preserving),
so the clean labels stay valid for the degraded audio.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
import shlex
import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .audio import AudioError, load as load_wav, resample, save as save_wav
from .augment import (
    STAGES,
    AugmentConfig,
    AugmentError,
    IrBank,
    NoiseBank,
    augment_chain,
)
from .dataset import discover_pairs
from .evaluation import Metrics, aggregate, evaluate
from .midi import MidiError, load as load_midi

DEFAULT_SAMPLE_RATE = 16_000
DEFAULT_ONSET_TOLERANCE_S = 0.05

MODES = ("degradation", "single", "ablation", "full")

# Stage groups as they appear in result tables. "eq" covers both EQ passes
# (one before and one after the acoustic stages); the others are single
# chain stages.
STAGE_GROUPS = {
    "background": ("noise",),
    "eq": ("eq1", "eq2"),
    "pitch_shift": ("pitch",),
    "reverb": ("reverb",),
}
GROUP_ORDER = ("background", "eq", "pitch_shift", "reverb")

_DEGRADATION_NAMES = {
    "background": "Background Noise",
    "eq": "EQ",
    "pitch_shift": "Pitch Shift",
    "reverb": "Reverb",
}
_SINGLE_NAMES = {
    "background": "Background",
    "pitch_shift": "Pitch Shift",
    "reverb": "Reverb",
    "eq": "EQ",
}
_DEGRADATION_ORDER = ("background", "eq", "pitch_shift", "reverb")
_SINGLE_ORDER = ("background", "pitch_shift", "reverb", "eq")


class HarnessError(Exception):
    pass


class InvalidConfig(HarnessError):
    pass


class InvalidMode(InvalidConfig):
    pass


class DatasetMissing(HarnessError):
    def __init__(self, name: str, detail: str) -> None:
        super().__init__(f"dataset {name!r}: {detail}")
        self.name = name


class AllFilesFailed(HarnessError):
    pass


class TranscriberFailed(HarnessError):
    pass


# --- configuration --------------------------------------------------------


_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")
_ALLOWED_PLACEHOLDERS = {"input_wav", "output_mid", "ref_mid"}


@dataclass(frozen=True)
class TranscriberCmd:
    """Shell-style command template for the system under test.

    The template must contain {input_wav} and {output_mid}; {ref_mid} is
    substituted too when present, which lets reference transcribers locate
    the ground truth they replay.
    """

    template: str
    timeout_s: float = 120.0

    def __post_init__(self) -> None:
        names = set(_PLACEHOLDER_RE.findall(self.template))
        unknown = names - _ALLOWED_PLACEHOLDERS
        if unknown:
            raise InvalidConfig(f"unknown placeholders in command: {sorted(unknown)}")
        for required in ("input_wav", "output_mid"):
            if required not in names:
                raise InvalidConfig(f"command template must contain {{{required}}}")
        if self.timeout_s <= 0:
            raise InvalidConfig(f"timeout_s must be > 0, got {self.timeout_s}")

    @property
    def wants_ref(self) -> bool:
        return "ref_mid" in _PLACEHOLDER_RE.findall(self.template)

    def build(self, input_wav, output_mid, ref_mid=None) -> list[str]:
        mapping = {"input_wav": str(input_wav), "output_mid": str(output_mid)}
        if self.wants_ref:
            if ref_mid is None:
                raise InvalidConfig("command wants {ref_mid} but none was provided")
            mapping["ref_mid"] = str(ref_mid)
        return [
            _PLACEHOLDER_RE.sub(lambda m: mapping[m.group(1)], token)
            for token in shlex.split(self.template)
        ]

    def run(self, input_wav, output_mid, ref_mid=None) -> None:
        args = self.build(input_wav, output_mid, ref_mid)
        try:
            proc = subprocess.run(
                args, capture_output=True, timeout=self.timeout_s, text=True
            )
        except subprocess.TimeoutExpired as exc:
            raise TranscriberFailed(
                f"timed out after {self.timeout_s}s: {args[0]}"
            ) from exc
        except OSError as exc:
            raise TranscriberFailed(f"could not launch {args[0]}: {exc}") from exc
        if proc.returncode != 0:
            tail = (proc.stderr or "").strip().splitlines()[-3:]
            raise TranscriberFailed(
                f"exit {proc.returncode}: {' | '.join(tail) if tail else 'no stderr'}"
            )
        if not Path(output_mid).is_file():
            raise TranscriberFailed(f"no output written to {output_mid}")


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    audio_dir: str
    midi_dir: str

    def __post_init__(self) -> None:
        if not self.name:
            raise InvalidConfig("dataset name must be non-empty")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    transcriber: TranscriberCmd
    datasets: tuple[DatasetSpec, ...]
    output_dir: str
    groups: tuple[str, ...] = GROUP_ORDER
    seed: int = 0
    onset_tolerance_s: float = DEFAULT_ONSET_TOLERANCE_S
    aggregation: str = "macro"
    sample_rate: int = DEFAULT_SAMPLE_RATE
    noise_dir: str | None = None
    ir_dir: str | None = None
    eq_gain_range_db: tuple[float, float] = (-10.0, 5.0)
    snr_range_db: tuple[float, float] = (17.5, 25.0)
    pitch_range_cents: tuple[float, float] = (-10.0, 10.0)
    workers: int = 1
    keep_audio: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InvalidMode(f"unknown mode {self.mode!r}, expected one of {MODES}")
        unknown = set(self.groups) - set(STAGE_GROUPS)
        if unknown:
            raise InvalidConfig(f"unknown stage groups: {sorted(unknown)}")
        if len(set(self.groups)) != len(self.groups):
            raise InvalidConfig("duplicate stage groups")
        if not self.datasets:
            raise InvalidConfig("at least one dataset is required")
        if len({d.name for d in self.datasets}) != len(self.datasets):
            raise InvalidConfig("duplicate dataset names")
        if self.aggregation not in ("macro", "micro"):
            raise InvalidConfig(f"aggregation must be macro or micro, got {self.aggregation!r}")
        if self.onset_tolerance_s <= 0:
            raise InvalidConfig("onset_tolerance_s must be > 0")
        if self.sample_rate <= 0:
            raise InvalidConfig("sample_rate must be > 0")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")

    def config_hash(self) -> str:
        """Hash of everything that affects the numbers (not where they go)."""
        payload = {
            "mode": self.mode,
            "groups": list(self.groups),
            "seed": self.seed,
            "onset_tolerance_s": self.onset_tolerance_s,
            "aggregation": self.aggregation,
            "sample_rate": self.sample_rate,
            "transcriber": self.transcriber.template,
            "datasets": [[d.name, d.audio_dir, d.midi_dir] for d in self.datasets],
            "noise_dir": self.noise_dir,
            "ir_dir": self.ir_dir,
            "eq_gain_range_db": list(self.eq_gain_range_db),
            "snr_range_db": list(self.snr_range_db),
            "pitch_range_cents": list(self.pitch_range_cents),
        }
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an experiment config from TOML.

    Dataset directories may be overridden per source with environment
    variables: KEYBENCH_DATASET_<NAME> (upper-cased) points at a root that
    contains audio/ and midi/ subdirectories.
    """
    if sys.version_info >= (3, 11):
        import tomllib as toml
    else:
        import tomli as toml
    try:
        with open(path, "rb") as fh:
            raw = toml.load(fh)
    except FileNotFoundError:
        raise InvalidConfig(f"config file not found: {path}")
    except toml.TOMLDecodeError as exc:
        raise InvalidConfig(f"malformed TOML in {path}: {exc}")

    try:
        exp = raw["experiment"]
        trans = raw["transcriber"]
        datasets_raw = raw["datasets"]
    except KeyError as exc:
        raise InvalidConfig(f"missing config section: {exc}")
    aug = raw.get("augment", {})

    datasets = []
    for entry in datasets_raw:
        try:
            name = entry["name"]
            audio_dir = entry["audio_dir"]
            midi_dir = entry["midi_dir"]
        except KeyError as exc:
            raise InvalidConfig(f"dataset entry missing key: {exc}")
        override = os.environ.get(f"KEYBENCH_DATASET_{name.upper()}")
        if override:
            audio_dir = str(Path(override) / "audio")
            midi_dir = str(Path(override) / "midi")
        datasets.append(DatasetSpec(name=name, audio_dir=audio_dir, midi_dir=midi_dir))

    def _pair(obj, default):
        if obj is None:
            return default
        if len(obj) != 2:
            raise InvalidConfig(f"expected a [low, high] pair, got {obj!r}")
        return (float(obj[0]), float(obj[1]))

    try:
        return ExperimentConfig(
            mode=exp.get("mode", "degradation"),
            transcriber=TranscriberCmd(
                template=trans["command"],
                timeout_s=float(trans.get("timeout_s", 120.0)),
            ),
            datasets=tuple(datasets),
            output_dir=exp.get("output_dir", "keybench_out"),
            groups=tuple(exp.get("groups", list(GROUP_ORDER))),
            seed=int(exp.get("seed", 0)),
            onset_tolerance_s=float(exp.get("onset_tolerance_s", DEFAULT_ONSET_TOLERANCE_S)),
            aggregation=exp.get("aggregation", "macro"),
            sample_rate=int(exp.get("sample_rate", DEFAULT_SAMPLE_RATE)),
            noise_dir=aug.get("noise_dir"),
            ir_dir=aug.get("ir_dir"),
            eq_gain_range_db=_pair(aug.get("eq_gain_range_db"), (-10.0, 5.0)),
            snr_range_db=_pair(aug.get("snr_range_db"), (17.5, 25.0)),
            pitch_range_cents=_pair(aug.get("pitch_range_cents"), (-10.0, 10.0)),
            workers=int(exp.get("workers", 1)),
            keep_audio=bool(exp.get("keep_audio", False)),
        )
    except KeyError as exc:
        raise InvalidConfig(f"missing config key: {exc}")


# --- conditions -----------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    """A named set of chain stages applied (with probability 1) at test time."""

    name: str
    stages: tuple[str, ...]

    def slug(self) -> str:
        return re.sub(r"[^a-z0-9]+", "_", self.name.lower()).strip("_")


def _stages_for(groups) -> tuple[str, ...]:
    wanted = set()
    for g in groups:
        wanted.update(STAGE_GROUPS[g])
    return tuple(s for s in STAGES if s in wanted)


def gen_conditions(config: ExperimentConfig) -> list[Condition]:
    """Expand the configured mode into the rows of its result table.

    degradation: a clean baseline plus one row per enabled group, each
    degrading the test audio with just that group. single: same shape but
    named as training recipes. ablation: the full chain plus one row per
    group with that group removed; needs every group enabled. full: the
    whole chain as a single condition.
    """
    enabled = [g for g in GROUP_ORDER if g in config.groups]
    if config.mode == "degradation":
        if not enabled:
            raise InvalidMode("degradation mode needs at least one stage group")
        rows = [Condition("No Augmentation", ())]
        for g in _DEGRADATION_ORDER:
            if g in enabled:
                rows.append(Condition(_DEGRADATION_NAMES[g], _stages_for([g])))
        return rows
    if config.mode == "single":
        if not enabled:
            raise InvalidMode("single mode needs at least one stage group")
        rows = [Condition("No Augmentation", ())]
        for g in _SINGLE_ORDER:
            if g in enabled:
                rows.append(Condition(_SINGLE_NAMES[g], _stages_for([g])))
        return rows
    if config.mode == "ablation":
        if set(enabled) != set(STAGE_GROUPS):
            raise InvalidMode("ablation mode needs every stage group enabled")
        rows = [Condition("Full Augmentation", _stages_for(GROUP_ORDER))]
        for g in _SINGLE_ORDER:
            kept = [h for h in GROUP_ORDER if h != g]
            rows.append(Condition(f"Skip {_SINGLE_NAMES[g]}", _stages_for(kept)))
        return rows
    # full
    if not enabled:
        raise InvalidMode("full mode needs at least one stage group")
    return [Condition("Full Augmentation", _stages_for(enabled))]


def file_seed(master_seed: int, condition: str, file_key: str) -> int:
    """Stable per-file seed; independent draws across conditions and files."""
    digest = hashlib.sha256(
        f"{master_seed}|{condition}|{file_key}".encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:8], "big")


# --- results --------------------------------------------------------------


@dataclass(frozen=True)
class CellResult:
    macro: Metrics
    micro: Metrics
    n_files: int
    n_failed: int


@dataclass(frozen=True)
class FileResult:
    condition: str
    dataset: str
    file_id: str
    seed: int
    status: str  # "ok" or "failed"
    error: str | None
    metrics: Metrics | None

    def to_json(self) -> dict:
        out = {
            "condition": self.condition,
            "dataset": self.dataset,
            "file_id": self.file_id,
            "seed": self.seed,
            "status": self.status,
        }
        if self.error is not None:
            out["error"] = self.error
        if self.metrics is not None:
            out.update(
                precision=self.metrics.precision,
                recall=self.metrics.recall,
                f1=self.metrics.f1,
                n_ref=self.metrics.n_ref,
                n_est=self.metrics.n_est,
                n_match=self.metrics.n_match,
            )
        return out


@dataclass(frozen=True)
class ResultTable:
    """All numbers from one run. Contains no timestamps or host details, so
    two runs of the same config produce equal tables."""

    conditions: tuple[str, ...]
    datasets: tuple[str, ...]
    cells: dict = field(default_factory=dict)  # (condition, dataset) -> CellResult
    metadata: dict = field(default_factory=dict)

    def cell(self, condition: str, dataset: str) -> CellResult:
        return self.cells[(condition, dataset)]

    def selected(self, condition: str, dataset: str) -> Metrics:
        agg = self.metadata.get("aggregation", "macro")
        cell = self.cell(condition, dataset)
        return cell.macro if agg == "macro" else cell.micro


def format_delta(delta: float) -> str:
    """Signed one-decimal delta. A delta that rounds to zero keeps the sign
    of the raw difference, with exact zero shown as negative-zero so a
    no-change row never reads as an improvement."""
    if round(delta, 1) == 0.0:
        return "-0.0" if delta <= 0 else "+0.0"
    return f"{delta:+.1f}"


def emit_markdown(table: ResultTable) -> str:
    lines = []
    agg = table.metadata.get("aggregation", "macro")
    tol_ms = 1000.0 * float(table.metadata.get("onset_tolerance_s", 0.05))
    lines.append(f"## Note onset F1 ({agg}, tolerance {tol_ms:g} ms)")
    lines.append("")
    header = ["Condition"] + list(table.datasets)
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "|".join([" --- "] * len(header)) + "|")
    baseline = table.conditions[0]
    for cond in table.conditions:
        row = [cond]
        for ds in table.datasets:
            f1 = table.selected(cond, ds).f1 * 100.0
            if cond == baseline:
                row.append(f"{f1:.1f}")
            else:
                base_f1 = table.selected(baseline, ds).f1 * 100.0
                row.append(f"{f1:.1f} ({format_delta(f1 - base_f1)})")
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")
    meta = table.metadata
    lines.append(
        f"seed {meta.get('seed')}, config {meta.get('config_hash')}, "
        f"version {meta.get('version')}"
    )
    return "\n".join(lines) + "\n"


def emit_csv(table: ResultTable) -> str:
    """Full-precision CSV, one row per (condition, dataset, aggregation).

    The first line is a JSON comment carrying the metadata; floats are
    written with repr so parse_table_csv reproduces the table exactly.
    """
    buf = io.StringIO()
    buf.write("# " + json.dumps(table.metadata, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "condition", "dataset", "aggregation", "precision", "recall", "f1",
            "n_ref", "n_est", "n_match", "n_files", "n_failed",
        ]
    )
    for cond in table.conditions:
        for ds in table.datasets:
            cell = table.cell(cond, ds)
            for agg_name, m in (("macro", cell.macro), ("micro", cell.micro)):
                writer.writerow(
                    [
                        cond, ds, agg_name,
                        repr(m.precision), repr(m.recall), repr(m.f1),
                        m.n_ref, m.n_est, m.n_match,
                        cell.n_files, cell.n_failed,
                    ]
                )
    return buf.getvalue()


def parse_table_csv(text: str) -> ResultTable:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# "):
        raise HarnessError("missing metadata comment line")
    metadata = json.loads(lines[0][2:])
    conditions: list[str] = []
    datasets: list[str] = []
    partial: dict = {}
    counts: dict = {}
    for line in lines[2:]:
        row = next(csv.reader(io.StringIO(line)))
        cond, ds, agg_name = row[0], row[1], row[2]
        metrics = Metrics(
            precision=float(row[3]),
            recall=float(row[4]),
            f1=float(row[5]),
            n_ref=int(row[6]),
            n_est=int(row[7]),
            n_match=int(row[8]),
        )
        if cond not in conditions:
            conditions.append(cond)
        if ds not in datasets:
            datasets.append(ds)
        partial.setdefault((cond, ds), {})[agg_name] = metrics
        counts[(cond, ds)] = (int(row[9]), int(row[10]))
    cells = {}
    for key, both in partial.items():
        if set(both) != {"macro", "micro"}:
            raise HarnessError(f"incomplete cell for {key}")
        n_files, n_failed = counts[key]
        cells[key] = CellResult(
            macro=both["macro"], micro=both["micro"],
            n_files=n_files, n_failed=n_failed,
        )
    return ResultTable(
        conditions=tuple(conditions),
        datasets=tuple(datasets),
        cells=cells,
        metadata=metadata,
    )


# --- training config emission --------------------------------------------


def training_config_toml(condition: Condition, config: ExperimentConfig) -> str:
    """Augmentation recipe a training run would use under this condition:
    the condition's stages at probability 0.5, everything else off."""
    lines = ["[augment]"]
    for stage in STAGES:
        p = 0.5 if stage in condition.stages else 0.0
        lines.append(f"{stage}_probability = {p}")
    lines.append(
        f"eq_gain_range_db = [{config.eq_gain_range_db[0]}, {config.eq_gain_range_db[1]}]"
    )
    lines.append(f"snr_range_db = [{config.snr_range_db[0]}, {config.snr_range_db[1]}]")
    lines.append(
        f"pitch_range_cents = [{config.pitch_range_cents[0]}, {config.pitch_range_cents[1]}]"
    )
    if config.noise_dir:
        lines.append(f'noise_dir = "{config.noise_dir}"')
    if config.ir_dir:
        lines.append(f'ir_dir = "{config.ir_dir}"')
    return "\n".join(lines) + "\n"


# --- the run --------------------------------------------------------------


def _resolve_datasets(config: ExperimentConfig):
    resolved = []
    for spec in config.datasets:
        audio_dir = Path(spec.audio_dir)
        midi_dir = Path(spec.midi_dir)
        if not audio_dir.is_dir():
            raise DatasetMissing(spec.name, f"audio dir not found: {audio_dir}")
        if not midi_dir.is_dir():
            raise DatasetMissing(spec.name, f"label dir not found: {midi_dir}")
        pairs = discover_pairs(audio_dir, midi_dir)
        if not pairs:
            raise DatasetMissing(spec.name, "no paired audio/label files")
        resolved.append((spec, pairs))
    return resolved


def _load_banks(config: ExperimentConfig, conditions: list[Condition]):
    needed = set()
    for cond in conditions:
        needed.update(cond.stages)
    noise_bank = ir_bank = None
    if "noise" in needed:
        if not config.noise_dir:
            raise InvalidConfig("a condition uses background noise but noise_dir is unset")
        noise_bank = NoiseBank.from_dir(config.noise_dir)
    if "reverb" in needed:
        if not config.ir_dir:
            raise InvalidConfig("a condition uses reverb but ir_dir is unset")
        ir_bank = IrBank.from_dir(config.ir_dir)
    return noise_bank, ir_bank


def _augment_config_for(condition: Condition, config: ExperimentConfig) -> AugmentConfig:
    probs = {stage: (1.0 if stage in condition.stages else 0.0) for stage in STAGES}
    return AugmentConfig(
        stage_probability=probs,
        eq_gain_range_db=config.eq_gain_range_db,
        snr_range_db=config.snr_range_db,
        pitch_range_cents=config.pitch_range_cents,
        noise_dir=config.noise_dir,
        ir_dir=config.ir_dir,
    )


def _process_file(
    config: ExperimentConfig,
    condition: Condition,
    dataset_name: str,
    file_id: str,
    wav_path: Path,
    mid_path: Path,
    aug_config: AugmentConfig,
    banks,
    audio_dir: Path,
    transcript_dir: Path,
    log_dir: Path,
) -> FileResult:
    noise_bank, ir_bank = banks
    seed = file_seed(config.seed, condition.name, f"{dataset_name}/{file_id}")
    try:
        clip = load_wav(wav_path)
        if clip.sample_rate != config.sample_rate:
            clip = resample(clip, config.sample_rate)
        ref = load_midi(mid_path)

        degraded, log = augment_chain(
            clip, aug_config, seed, noise_bank=noise_bank, ir_bank=ir_bank
        )
        (log_dir / f"{file_id}.json").write_text(log.to_json(), encoding="utf-8")

        degraded_wav = audio_dir / f"{file_id}.wav"
        save_wav(degraded, degraded_wav, encoding="float32")
        out_mid = transcript_dir / f"{file_id}.mid"
        try:
            config.transcriber.run(degraded_wav, out_mid, ref_mid=mid_path)
            est = load_midi(out_mid)
        finally:
            if not config.keep_audio:
                degraded_wav.unlink(missing_ok=True)

        metrics = evaluate(ref, est, config.onset_tolerance_s)
        return FileResult(
            condition=condition.name, dataset=dataset_name, file_id=file_id,
            seed=seed, status="ok", error=None, metrics=metrics,
        )
    except (HarnessError, MidiError, AudioError, AugmentError, OSError, ValueError) as exc:
        return FileResult(
            condition=condition.name, dataset=dataset_name, file_id=file_id,
            seed=seed, status="failed", error=f"{type(exc).__name__}: {exc}",
            metrics=None,
        )


def run_experiment(config: ExperimentConfig) -> ResultTable:
    """Execute the full grid and write artifacts under config.output_dir.

    Artifacts: per-file results (results/per_file.jsonl), augmentation logs
    (results/logs/...), transcriber outputs (transcripts/...), the result
    table (table.md, table.csv), and for training-recipe modes the per-
    condition training configs (train_configs/...). Per-file transcriber
    failures are recorded and skipped; the run only fails outright if every
    file fails.
    """
    out_root = Path(config.output_dir)
    results_dir = out_root / "results"
    results_dir.mkdir(parents=True, exist_ok=True)

    conditions = gen_conditions(config)
    resolved = _resolve_datasets(config)
    banks = _load_banks(config, conditions)

    if config.mode in ("single", "ablation"):
        train_dir = out_root / "train_configs"
        train_dir.mkdir(parents=True, exist_ok=True)
        for cond in conditions:
            (train_dir / f"{cond.slug()}.toml").write_text(
                training_config_toml(cond, config), encoding="utf-8"
            )

    file_results: list[FileResult] = []
    cells: dict = {}
    with tempfile.TemporaryDirectory(prefix="keybench_audio_") as tmp_audio:
        for condition in conditions:
            aug_config = _augment_config_for(condition, config)
            for spec, pairs in resolved:
                if config.keep_audio:
                    audio_dir = out_root / "audio" / condition.slug() / spec.name
                else:
                    audio_dir = Path(tmp_audio) / condition.slug() / spec.name
                transcript_dir = out_root / "transcripts" / condition.slug() / spec.name
                log_dir = results_dir / "logs" / condition.slug() / spec.name
                for d in (audio_dir, transcript_dir, log_dir):
                    d.mkdir(parents=True, exist_ok=True)

                if config.workers == 1:
                    batch = [
                        _process_file(
                            config, condition, spec.name, fid, wav, mid,
                            aug_config, banks, audio_dir, transcript_dir, log_dir,
                        )
                        for fid, wav, mid in pairs
                    ]
                else:
                    with ThreadPoolExecutor(max_workers=config.workers) as pool:
                        futures = [
                            pool.submit(
                                _process_file,
                                config, condition, spec.name, fid, wav, mid,
                                aug_config, banks, audio_dir, transcript_dir, log_dir,
                            )
                            for fid, wav, mid in pairs
                        ]
                        batch = [f.result() for f in futures]
                file_results.extend(batch)

                ok = [r.metrics for r in batch if r.status == "ok"]
                n_failed = sum(1 for r in batch if r.status == "failed")
                if ok:
                    cell = CellResult(
                        macro=aggregate(ok, "macro"),
                        micro=aggregate(ok, "micro"),
                        n_files=len(batch),
                        n_failed=n_failed,
                    )
                else:
                    zero = Metrics(0.0, 0.0, 0.0, 0, 0, 0)
                    cell = CellResult(
                        macro=zero, micro=zero,
                        n_files=len(batch), n_failed=n_failed,
                    )
                cells[(condition.name, spec.name)] = cell

    if all(r.status == "failed" for r in file_results):
        raise AllFilesFailed(
            f"every file failed; first error: {file_results[0].error}"
        )

    with open(results_dir / "per_file.jsonl", "w", encoding="utf-8") as fh:
        for r in file_results:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")

    table = ResultTable(
        conditions=tuple(c.name for c in conditions),
        datasets=tuple(spec.name for spec, _ in resolved),
        cells=cells,
        metadata={
            "mode": config.mode,
            "seed": config.seed,
            "aggregation": config.aggregation,
            "onset_tolerance_s": config.onset_tolerance_s,
            "config_hash": config.config_hash(),
            "version": __version__,
            "note": "conditions are applied to the evaluation inputs",
        },
    )
    (out_root / "table.md").write_text(emit_markdown(table), encoding="utf-8")
    (out_root / "table.csv").write_text(emit_csv(table), encoding="utf-8")
    return table
