"""The five-stage stochastic augmentation chain.

Stage order is fixed: 7-band EQ, additive background noise at a target SNR,
a small pitch shift, a second 7-band EQ, and convolution reverb. Each stage
fires independently with its configured probability (0.5 by default). All
randomness flows from one seeded generator in a documented draw order, and
the :class:`AppliedLog` captures enough to replay an augmentation bit for
bit.

Every stage preserves duration to within one sample, so note labels remain
valid without modification.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .audio import AudioClip, load as load_wav, resample, resample_by_ratio, _fix_length

STAGES = ("eq1", "noise", "pitch", "eq2", "reverb")

SILENCE_RMS = 1e-8


class AugmentError(Exception):
    pass


class BandAboveNyquist(AugmentError):
    pass


class SilentSignal(AugmentError):
    pass


class SilentNoise(AugmentError):
    pass


class SilentImpulseResponse(AugmentError):
    pass


class StageFailure(AugmentError):
    """Wraps a stage error with the identity of the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# Parametric EQ (RBJ cookbook biquads)

@dataclass(frozen=True)
class EqBand:
    kind: str  # low_shelf | peaking | high_shelf
    center_hz: float
    q: float


# Fixed 7-band layout covering the piano spectrum below an 8 kHz Nyquist:
# a low shelf, five peaking bands and a high shelf.
EQ_BANDS: tuple[EqBand, ...] = (
    EqBand("low_shelf", 80.0, 0.707),
    EqBand("peaking", 250.0, 0.9),
    EqBand("peaking", 500.0, 0.9),
    EqBand("peaking", 1000.0, 0.9),
    EqBand("peaking", 2000.0, 0.9),
    EqBand("peaking", 4000.0, 0.9),
    EqBand("high_shelf", 6000.0, 0.707),
)


def _biquad_sos(band: EqBand, gain_db: float, sample_rate: int) -> np.ndarray:
    """One second-order section [b0 b1 b2 1 a1 a2] from the RBJ cookbook."""
    a = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * math.pi * band.center_hz / sample_rate
    cw, sw = math.cos(w0), math.sin(w0)
    alpha = sw / (2.0 * band.q)
    sq = 2.0 * math.sqrt(a) * alpha

    if band.kind == "peaking":
        b0 = 1 + alpha * a
        b1 = -2 * cw
        b2 = 1 - alpha * a
        a0 = 1 + alpha / a
        a1 = -2 * cw
        a2 = 1 - alpha / a
    elif band.kind == "low_shelf":
        b0 = a * ((a + 1) - (a - 1) * cw + sq)
        b1 = 2 * a * ((a - 1) - (a + 1) * cw)
        b2 = a * ((a + 1) - (a - 1) * cw - sq)
        a0 = (a + 1) + (a - 1) * cw + sq
        a1 = -2 * ((a - 1) + (a + 1) * cw)
        a2 = (a + 1) + (a - 1) * cw - sq
    elif band.kind == "high_shelf":
        b0 = a * ((a + 1) + (a - 1) * cw + sq)
        b1 = -2 * a * ((a - 1) + (a + 1) * cw)
        b2 = a * ((a + 1) + (a - 1) * cw - sq)
        a0 = (a + 1) - (a - 1) * cw + sq
        a1 = 2 * ((a - 1) - (a + 1) * cw)
        a2 = (a + 1) - (a - 1) * cw - sq
    else:
        raise ValueError(f"unknown band kind {band.kind!r}")
    return np.array([b0 / a0, b1 / a0, b2 / a0, 1.0, a1 / a0, a2 / a0])


def design_eq(gains_db, sample_rate: int) -> np.ndarray:
    """SOS matrix for the 7-band EQ with the given per-band gains."""
    gains = np.asarray(gains_db, dtype=np.float64)
    if gains.shape != (len(EQ_BANDS),):
        raise ValueError(f"expected {len(EQ_BANDS)} gains, got shape {gains.shape}")
    for band in EQ_BANDS:
        if band.center_hz >= sample_rate / 2:
            raise BandAboveNyquist(
                f"{band.kind} at {band.center_hz} Hz is not below "
                f"Nyquist ({sample_rate / 2} Hz)"
            )
    return np.vstack([
        _biquad_sos(band, g, sample_rate) for band, g in zip(EQ_BANDS, gains)
    ])


def apply_eq(clip: AudioClip, gains_db) -> AudioClip:
    """Run the clip through the 7-band cascade; length is preserved."""
    from scipy import signal

    sos = design_eq(gains_db, clip.sample_rate)
    if len(clip.samples) == 0:
        return clip
    y = signal.sosfilt(sos, clip.samples)
    return AudioClip(samples=y, sample_rate=clip.sample_rate)


# ---------------------------------------------------------------------------
# Additive background noise at a target SNR

def _place_noise(noise: np.ndarray, n: int, offset_seed: int) -> np.ndarray:
    """Fit a noise buffer to n samples: seeded random offset when longer,
    wraparound looping when shorter."""
    if len(noise) == 0:
        raise SilentNoise("noise clip is empty")
    if len(noise) >= n:
        rng = np.random.default_rng(offset_seed)
        start = int(rng.integers(0, len(noise) - n + 1))
        return noise[start:start + n]
    reps = -(-n // len(noise))
    return np.tile(noise, reps)[:n]


def add_noise(signal: AudioClip, noise: AudioClip, snr_db: float,
              offset_seed: int = 0) -> AudioClip:
    """Mix noise into the signal so the resulting SNR is exact.

    The noise is scaled by ``(rms_signal / rms_noise) * 10^(-snr/20)``
    computed on the placed segment, which makes the recomputed ratio of
    signal RMS to added-noise RMS equal the request by construction.
    """
    if signal.sample_rate != noise.sample_rate:
        raise ValueError(
            f"sample rates differ: {signal.sample_rate} vs {noise.sample_rate}"
        )
    rms_signal = signal.rms()
    if rms_signal < SILENCE_RMS:
        raise SilentSignal(f"signal RMS {rms_signal} below {SILENCE_RMS}")
    segment = _place_noise(noise.samples, len(signal.samples), offset_seed)
    rms_noise = float(np.sqrt(np.mean(segment ** 2))) if len(segment) else 0.0
    if rms_noise < SILENCE_RMS:
        raise SilentNoise(f"noise segment RMS {rms_noise} below {SILENCE_RMS}")
    gain = (rms_signal / rms_noise) * 10.0 ** (-snr_db / 20.0)
    return AudioClip(samples=signal.samples + gain * segment,
                     sample_rate=signal.sample_rate)


# ---------------------------------------------------------------------------
# Pitch shift (phase vocoder time stretch + resampling)

PV_FFT_SIZE = 1024
PV_HOP = PV_FFT_SIZE // 4  # 4x overlap


def _time_stretch(x: np.ndarray, stretch: float) -> np.ndarray:
    """Phase-vocoder time stretch to round(len * stretch) samples."""
    n = len(x)
    n_out = round(n * stretch)
    if stretch == 1.0 or n == 0 or n_out == 0:
        return _fix_length(x.copy(), n_out)

    win = np.hanning(PV_FFT_SIZE)
    hop_a = PV_HOP / stretch
    n_frames = max(2, int(np.ceil(n_out / PV_HOP)) + 1)
    positions = np.round(np.arange(n_frames) * hop_a).astype(int)
    xp = np.pad(x, (0, max(0, positions[-1] + PV_FFT_SIZE - n)))

    omega = 2.0 * np.pi * np.arange(PV_FFT_SIZE // 2 + 1) / PV_FFT_SIZE
    out = np.zeros((n_frames - 1) * PV_HOP + PV_FFT_SIZE)
    norm = np.zeros_like(out)

    spec = np.fft.rfft(win * xp[positions[0]:positions[0] + PV_FFT_SIZE])
    phase = np.angle(spec)
    prev_angle = phase
    frame = np.fft.irfft(np.abs(spec) * np.exp(1j * phase))
    out[:PV_FFT_SIZE] += win * frame
    norm[:PV_FFT_SIZE] += win ** 2

    for k in range(1, n_frames):
        pos = positions[k]
        spec = np.fft.rfft(win * xp[pos:pos + PV_FFT_SIZE])
        angle = np.angle(spec)
        dt = pos - positions[k - 1]
        if dt > 0:
            dphi = angle - prev_angle - omega * dt
            dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
            inst_freq = omega + dphi / dt
        else:
            inst_freq = omega
        phase = phase + inst_freq * PV_HOP
        prev_angle = angle
        frame = np.fft.irfft(np.abs(spec) * np.exp(1j * phase))
        offset = k * PV_HOP
        out[offset:offset + PV_FFT_SIZE] += win * frame
        norm[offset:offset + PV_FFT_SIZE] += win ** 2

    out /= np.where(norm > 1e-8, norm, 1.0)
    return _fix_length(out, n_out)


def pitch_shift(clip: AudioClip, cents: float) -> AudioClip:
    """Scale all frequencies by 2^(cents/1200); duration is preserved.

    Zero cents is an exact identity. Implemented as a phase-vocoder time
    stretch by the frequency ratio followed by resampling back to the
    original length.
    """
    if abs(cents) > 100.0:
        raise ValueError(f"|cents| must be <= 100, got {cents}")
    if cents == 0.0 or len(clip.samples) == 0:
        return clip
    ratio = 2.0 ** (cents / 1200.0)
    stretched = _time_stretch(clip.samples, ratio)
    shifted = resample_by_ratio(
        AudioClip(samples=stretched, sample_rate=clip.sample_rate), 1.0 / ratio
    )
    return AudioClip(samples=_fix_length(shifted.samples, len(clip.samples)),
                     sample_rate=clip.sample_rate)


# ---------------------------------------------------------------------------
# Convolution reverb

def apply_reverb(clip: AudioClip, ir: AudioClip) -> AudioClip:
    """Convolve with an impulse response, truncate to the input length and
    rescale so the output peak matches the input peak."""
    from scipy import signal

    if ir.peak() <= 0.0:
        raise SilentImpulseResponse("impulse response has zero peak")
    if len(clip.samples) == 0:
        return clip
    ir_samples = ir.samples
    if ir.sample_rate != clip.sample_rate:
        ir_samples = resample(ir, clip.sample_rate).samples
        if not len(ir_samples) or not np.max(np.abs(ir_samples)) > 0:
            raise SilentImpulseResponse("impulse response vanished on resample")
    # method="auto" uses FFT for real room responses and falls back to
    # direct convolution for tiny kernels, where it is exact.
    wet = signal.convolve(clip.samples, ir_samples, mode="full", method="auto")
    wet = wet[:len(clip.samples)]
    in_peak = clip.peak()
    wet_peak = float(np.max(np.abs(wet))) if len(wet) else 0.0
    if in_peak > 0 and wet_peak > 0:
        wet = wet * (in_peak / wet_peak)
    return AudioClip(samples=wet, sample_rate=clip.sample_rate)


# ---------------------------------------------------------------------------
# Asset banks

@dataclass(frozen=True)
class NoiseBank:
    """Background noise clips, nominally 10-second segments."""

    clips: tuple[AudioClip, ...]
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.clips)

    @classmethod
    def from_dir(cls, directory) -> "NoiseBank":
        clips, labels = _load_bank_dir(directory)
        for label, clip in zip(labels, clips):
            if clip.rms() <= 0.0:
                raise SilentNoise(f"noise clip {label} is silent")
        return cls(clips=clips, labels=labels)


@dataclass(frozen=True)
class IrBank:
    """Room impulse responses for the reverb stage."""

    impulse_responses: tuple[AudioClip, ...]
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.impulse_responses)

    @classmethod
    def from_dir(cls, directory) -> "IrBank":
        clips, labels = _load_bank_dir(directory)
        for label, clip in zip(labels, clips):
            if clip.peak() <= 0.0:
                raise SilentImpulseResponse(f"impulse response {label} is silent")
        return cls(impulse_responses=clips, labels=labels)


def _load_bank_dir(directory):
    directory = Path(directory)
    paths = sorted(directory.glob("*.wav"))
    if not paths:
        raise AugmentError(f"no .wav files in {directory}")
    clips = tuple(load_wav(p) for p in paths)
    labels = tuple(p.name for p in paths)
    return clips, labels


# ---------------------------------------------------------------------------
# The chain

@dataclass(frozen=True)
class AugmentConfig:
    """Declarative parameters for the whole pipeline.

    Defaults: per-band EQ gain in [-10, +5] dB, SNR in [17.5, 25] dB, pitch
    shift in [-10, +10] cents, every stage at probability 0.5.
    """

    stage_probability: dict = field(
        default_factory=lambda: {stage: 0.5 for stage in STAGES}
    )
    eq_gain_range_db: tuple[float, float] = (-10.0, 5.0)
    snr_range_db: tuple[float, float] = (17.5, 25.0)
    pitch_range_cents: tuple[float, float] = (-10.0, 10.0)
    noise_dir: str | None = None
    ir_dir: str | None = None

    def __post_init__(self):
        probs = dict(self.stage_probability)
        for stage in STAGES:
            probs.setdefault(stage, 0.0)
        unknown = set(probs) - set(STAGES)
        if unknown:
            raise ValueError(f"unknown stages: {sorted(unknown)}")
        for stage, p in probs.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability for {stage} outside [0, 1]: {p}")
        object.__setattr__(self, "stage_probability", probs)

    def with_probabilities(self, **probs) -> "AugmentConfig":
        merged = dict(self.stage_probability)
        merged.update(probs)
        return AugmentConfig(
            stage_probability=merged,
            eq_gain_range_db=self.eq_gain_range_db,
            snr_range_db=self.snr_range_db,
            pitch_range_cents=self.pitch_range_cents,
            noise_dir=self.noise_dir,
            ir_dir=self.ir_dir,
        )


@dataclass(frozen=True)
class StageDraw:
    stage: str
    applied: bool
    params: dict


@dataclass(frozen=True)
class AppliedLog:
    """What the chain actually did: per-stage flags and drawn parameters.

    Replaying the log through :func:`apply_plan` with the same banks
    reproduces the augmented audio bit-exactly.
    """

    seed: int
    stages: tuple[StageDraw, ...]

    def stage(self, name: str) -> StageDraw:
        for draw in self.stages:
            if draw.stage == name:
                return draw
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "stages": [asdict(s) for s in self.stages]},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "AppliedLog":
        raw = json.loads(text)
        return cls(
            seed=raw["seed"],
            stages=tuple(
                StageDraw(s["stage"], s["applied"], s["params"])
                for s in raw["stages"]
            ),
        )


def _bank_index(u: float, size: int) -> int | None:
    if size <= 0:
        return None
    return min(int(u * size), size - 1)


def draw_plan(config: AugmentConfig, seed: int, n_noise: int = 0,
              n_ir: int = 0) -> AppliedLog:
    """Draw apply-flags and parameters for every stage from one generator.

    The draw order is fixed: for each stage (eq1, noise, pitch, eq2, reverb)
    the apply flag is drawn first, then that stage's parameters, which are
    drawn even when the stage will not fire. The number of draws therefore
    never depends on the probabilities, so logs stay comparable across
    config edits. Bank indexes are drawn as unit floats and mapped to
    ``[0, size)``, keeping the stream independent of bank sizes.
    """
    rng = np.random.default_rng(seed)
    draws = []
    for stage in STAGES:
        applied = bool(rng.random() < config.stage_probability[stage])
        if stage in ("eq1", "eq2"):
            low, high = config.eq_gain_range_db
            params = {"gains_db": [float(g) for g in rng.uniform(low, high, len(EQ_BANDS))]}
        elif stage == "noise":
            u = float(rng.random())
            low, high = config.snr_range_db
            params = {
                "clip_index": _bank_index(u, n_noise),
                "snr_db": float(rng.uniform(low, high)),
                "offset_seed": int(rng.integers(0, 2 ** 31 - 1)),
            }
        elif stage == "pitch":
            low, high = config.pitch_range_cents
            params = {"cents": float(rng.uniform(low, high))}
        else:  # reverb
            u = float(rng.random())
            params = {"ir_index": _bank_index(u, n_ir)}
        draws.append(StageDraw(stage=stage, applied=applied, params=params))
    return AppliedLog(seed=seed, stages=tuple(draws))


def apply_plan(clip: AudioClip, plan: AppliedLog,
               noise_bank: NoiseBank | None = None,
               ir_bank: IrBank | None = None) -> AudioClip:
    """Apply the stages a plan marks as applied, in pipeline order."""
    out = clip
    for draw in plan.stages:
        if not draw.applied:
            continue
        try:
            if draw.stage in ("eq1", "eq2"):
                out = apply_eq(out, draw.params["gains_db"])
            elif draw.stage == "noise":
                index = draw.params["clip_index"]
                if noise_bank is None or index is None:
                    raise SilentNoise("noise stage applied without a noise bank")
                noise = noise_bank.clips[index]
                if noise.sample_rate != out.sample_rate:
                    noise = resample(noise, out.sample_rate)
                out = add_noise(out, noise, draw.params["snr_db"],
                                draw.params["offset_seed"])
            elif draw.stage == "pitch":
                out = pitch_shift(out, draw.params["cents"])
            elif draw.stage == "reverb":
                index = draw.params["ir_index"]
                if ir_bank is None or index is None:
                    raise SilentImpulseResponse(
                        "reverb stage applied without an IR bank"
                    )
                out = apply_reverb(out, ir_bank.impulse_responses[index])
        except StageFailure:
            raise
        except Exception as exc:
            raise StageFailure(draw.stage, exc) from exc
    return out


def augment_chain(clip: AudioClip, config: AugmentConfig, seed: int,
                  noise_bank: NoiseBank | None = None,
                  ir_bank: IrBank | None = None) -> tuple[AudioClip, AppliedLog]:
    """Draw a plan from the seed and apply it. Pure in (samples, config, seed)."""
    for stage in ("noise", "reverb"):
        bank = noise_bank if stage == "noise" else ir_bank
        if config.stage_probability[stage] > 0 and (bank is None or len(bank) == 0):
            raise AugmentError(
                f"stage {stage!r} has probability > 0 but no bank is loaded"
            )
    plan = draw_plan(config, seed,
                     n_noise=len(noise_bank) if noise_bank else 0,
                     n_ir=len(ir_bank) if ir_bank else 0)
    out = apply_plan(clip, plan, noise_bank=noise_bank, ir_bank=ir_bank)
    return out, plan
