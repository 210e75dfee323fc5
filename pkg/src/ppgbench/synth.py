"""Seeded parametric generator of PPG-like segments with known labels.

Each beat is a two-Gaussian pulse (systolic peak plus dicrotic wave) laid
out on its own inter-beat interval, so a beat's shape stretches with its
interval. Rhythm classes differ in how intervals are drawn; respiration
modulates amplitude and adds baseline wander; blood pressure is encoded in
pulse amplitude, dicrotic shape and baseline offset.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ValidationError
from .taxonomy import (
    DEFAULT_SAMPLING_RATE_HZ,
    N_FOLDS,
    Dataset,
    Gender,
    PpgSegment,
    RhythmCode,
)

SYNTH_RHYTHMS = (RhythmCode.SR, RhythmCode.STACH, RhythmCode.SBRAD, RhythmCode.AF, RhythmCode.SARRH)

# interval coefficient of variation per rhythm
RHYTHM_CV = {
    RhythmCode.SR: 0.02,
    RhythmCode.STACH: 0.02,
    RhythmCode.SBRAD: 0.02,
    RhythmCode.SARRH: 0.08,
    RhythmCode.AF: 0.24,
}

SYSTOLIC_PEAK_PHASE = 0.2
# (systolic_amp, dicrotic_amp, systolic_width, dicrotic_width, dicrotic_delay)
DEFAULT_MORPHOLOGY = (1.0, 0.4, 0.07, 0.09, 0.3)
RESP_AM_DEPTH = 0.2
RESP_WANDER_AMP = 0.3
# beat amplitude follows the preceding filling interval: (prev / mean) ** exponent
FILLING_EXPONENT = 1.5
REFERENCE_PULSE_PRESSURE = 50.0
REFERENCE_DBP = 65.0


def _gauss(x, mu, width):
    return np.exp(-0.5 * ((x - mu) / width) ** 2)


def beat_template(phase, morphology=DEFAULT_MORPHOLOGY):
    """Pulse amplitude at ``phase`` in [0, 1) of one beat."""
    sys_amp, dic_amp, sys_w, dic_w, dic_delay = morphology
    if sys_w <= 0 or dic_w <= 0:
        raise ValidationError("pulse widths must be positive")
    if not 0 < dic_delay < 1:
        raise ValidationError("dicrotic_delay must lie in (0, 1)")
    phase = np.asarray(phase, dtype=np.float64)
    return sys_amp * _gauss(phase, SYSTOLIC_PEAK_PHASE, sys_w) + dic_amp * _gauss(
        phase, SYSTOLIC_PEAK_PHASE + dic_delay, dic_w
    )


@dataclass(frozen=True)
class SynthParams:
    rhythm: RhythmCode = RhythmCode.SR
    hr_bpm: float = 75.0
    rr_bpm: float = 16.0
    sbp_mmhg: float = 120.0
    dbp_mmhg: float = 70.0
    noise_std: float = 0.0
    duration_s: float = 30.0
    sampling_rate_hz: float = DEFAULT_SAMPLING_RATE_HZ
    seed: int = 0
    morphology: tuple = DEFAULT_MORPHOLOGY
    interval_cv: Optional[float] = None  # None: the rhythm's default

    def __post_init__(self):
        object.__setattr__(self, "rhythm", RhythmCode.parse(self.rhythm))
        validate_params(self)

    @property
    def cv(self) -> float:
        return RHYTHM_CV[self.rhythm] if self.interval_cv is None else self.interval_cv


def validate_params(p: SynthParams):
    if p.rhythm not in SYNTH_RHYTHMS:
        raise ValidationError(
            f"rhythm {p.rhythm.value} not supported by the generator "
            f"(choose from {[r.value for r in SYNTH_RHYTHMS]})"
        )
    for name in ("hr_bpm", "rr_bpm", "duration_s", "sampling_rate_hz"):
        value = getattr(p, name)
        if not (math.isfinite(value) and value > 0):
            raise ValidationError(f"{name} must be positive, got {value}")
    if not (math.isfinite(p.noise_std) and p.noise_std >= 0):
        raise ValidationError(f"noise_std must be >= 0, got {p.noise_std}")
    if not (math.isfinite(p.sbp_mmhg) and math.isfinite(p.dbp_mmhg) and p.sbp_mmhg > p.dbp_mmhg > 0):
        raise ValidationError(f"need sbp > dbp > 0, got {p.sbp_mmhg}/{p.dbp_mmhg}")
    if p.rhythm == RhythmCode.STACH and not p.hr_bpm > 100:
        raise ValidationError(f"STACH requires hr_bpm > 100, got {p.hr_bpm}")
    if p.rhythm == RhythmCode.SBRAD and not p.hr_bpm < 60:
        raise ValidationError(f"SBRAD requires hr_bpm < 60, got {p.hr_bpm}")
    if p.rhythm == RhythmCode.SR and not 60 <= p.hr_bpm <= 100:
        raise ValidationError(f"SR requires 60 <= hr_bpm <= 100, got {p.hr_bpm}")
    if p.interval_cv is not None and not 0 <= p.interval_cv < 1:
        raise ValidationError("interval_cv must lie in [0, 1)")


@dataclass(frozen=True)
class GroundTruth:
    hr_bpm: float
    rr_bpm: float
    sbp_mmhg: float
    dbp_mmhg: float
    rhythm: RhythmCode
    beat_onsets_s: np.ndarray = field(repr=False, compare=False, default=None)


def draw_intervals(rng, rhythm, mean_interval, cv, n):
    """``n`` inter-beat intervals rescaled to have exactly ``mean_interval`` mean."""
    if cv == 0:
        return np.full(n, mean_interval)
    if rhythm == RhythmCode.AF:
        shape = 1.0 / cv**2
        iv = rng.gamma(shape, mean_interval / shape, size=n)
    else:
        iv = rng.normal(mean_interval, cv * mean_interval, size=n)
    # keep intervals physiologically positive
    iv = np.maximum(iv, 0.25 * mean_interval)
    return iv * (mean_interval / iv.mean())


def _bp_morphology(morphology, sbp, dbp):
    sys_amp, dic_amp, sys_w, dic_w, dic_delay = morphology
    pulse_pressure = sbp - dbp
    sys_amp = sys_amp * (0.4 + 0.6 * pulse_pressure / REFERENCE_PULSE_PRESSURE)
    # a higher diastolic pressure moves the reflected wave earlier
    dic_delay = float(np.clip(dic_delay - 0.002 * (dbp - REFERENCE_DBP), 0.15, 0.45))
    return (sys_amp, dic_amp, sys_w, dic_w, dic_delay)


def generate_segment(params: SynthParams, segment_id="synth-0", subject_id="synth-subject-0",
                     fold=1, **metadata):
    """Render one segment; returns ``(PpgSegment, GroundTruth)``.

    Deterministic in ``params`` (including ``params.seed``).
    """
    validate_params(params)
    rng = np.random.default_rng(int(params.seed) % 2**64)
    fs = params.sampling_rate_hz
    n = int(round(params.duration_s * fs))
    if n < 2:
        raise ValidationError("duration too short for the sampling rate")
    t = np.arange(n) / fs
    mean_iv = 60.0 / params.hr_bpm

    n_beats = int(math.ceil(params.duration_s / mean_iv)) + 3
    intervals = draw_intervals(rng, params.rhythm, mean_iv, params.cv, n_beats)
    start = -rng.uniform(0, intervals[0])
    onsets = start + np.concatenate([[0.0], np.cumsum(intervals)])
    while onsets[-1] <= t[-1]:  # rare: extend with extra beats
        extra = draw_intervals(rng, params.rhythm, mean_iv, params.cv, n_beats)
        onsets = np.concatenate([onsets, onsets[-1] + np.cumsum(extra)])
        intervals = np.diff(onsets)
    intervals = np.diff(onsets)

    beat = np.searchsorted(onsets, t, side="right") - 1
    phase = (t - onsets[beat]) / intervals[beat]
    morph = _bp_morphology(params.morphology, params.sbp_mmhg, params.dbp_mmhg)
    filling = np.concatenate([[1.0], intervals[:-1] / mean_iv]) ** FILLING_EXPONENT
    pulse = beat_template(phase, morph) * np.clip(filling, 0.3, 2.0)[beat]

    resp_hz = params.rr_bpm / 60.0
    resp_phase = rng.uniform(0, 2 * np.pi)
    resp = np.sin(2 * np.pi * resp_hz * t + resp_phase)
    amplitude = morph[0]
    x = pulse * (1.0 + RESP_AM_DEPTH * resp)
    x += RESP_WANDER_AMP * amplitude * np.sin(2 * np.pi * resp_hz * t + resp_phase + np.pi / 3)
    x += params.dbp_mmhg / REFERENCE_DBP
    if params.noise_std > 0:
        x += rng.normal(0.0, params.noise_std * amplitude, size=n)

    in_window = onsets[(onsets >= 0) & (onsets < params.duration_s)]
    seg = PpgSegment(
        segment_id=segment_id,
        subject_id=subject_id,
        fold=fold,
        samples=x.astype(np.float32),
        sampling_rate_hz=float(fs),
        rhythm=params.rhythm,
        hr_bpm=float(params.hr_bpm),
        rr_bpm=float(params.rr_bpm),
        sbp_mmhg=float(params.sbp_mmhg),
        dbp_mmhg=float(params.dbp_mmhg),
        **metadata,
    )
    truth = GroundTruth(
        params.hr_bpm, params.rr_bpm, params.sbp_mmhg, params.dbp_mmhg, params.rhythm, in_window
    )
    return seg, truth


def hr_from_onsets(onsets) -> float:
    """Heart rate from the mean spacing of consecutive beat onsets."""
    onsets = np.asarray(onsets, dtype=np.float64)
    if onsets.size < 2:
        raise ValidationError("need at least two onsets")
    return 60.0 / float(np.mean(np.diff(onsets)))


def interval_cv(onsets) -> float:
    iv = np.diff(np.asarray(onsets, dtype=np.float64))
    return float(iv.std(ddof=1) / iv.mean())


# --- datasets --------------------------------------------------------------


@dataclass(frozen=True)
class Range:
    """Split-normal draw through (q1, median, q3), truncated to [low, high].

    ``open_low``/``open_high`` make the bounds strict.
    """

    median: float
    q1: float
    q3: float
    low: float
    high: float
    open_low: bool = False
    open_high: bool = False

    def __post_init__(self):
        if not (self.q1 <= self.median <= self.q3):
            raise ValidationError(f"need q1 <= median <= q3 in {self}")
        if not self.low <= self.high:
            raise ValidationError(f"need low <= high in {self}")

    def contains(self, v) -> bool:
        lo_ok = v > self.low if self.open_low else v >= self.low
        hi_ok = v < self.high if self.open_high else v <= self.high
        return lo_ok and hi_ok

    def sample(self, rng) -> float:
        z75 = 0.6744897501960817
        s_lo = (self.median - self.q1) / z75
        s_hi = (self.q3 - self.median) / z75
        if self.low == self.high:
            return float(self.low)
        for _ in range(10000):
            z = rng.standard_normal()
            v = self.median + z * (s_lo if z < 0 else s_hi)
            if self.contains(v):
                return float(v)
        # bounds far out in a tail: fall back to uniform over the bounds
        for _ in range(10000):
            v = rng.uniform(self.low, self.high)
            if self.contains(v):
                return float(v)
        raise ValidationError(f"cannot sample inside {self}")

    @classmethod
    def fixed(cls, value) -> "Range":
        return cls(value, value, value, value, value)

    @classmethod
    def from_json(cls, obj) -> "Range":
        if isinstance(obj, (int, float)):
            return cls.fixed(float(obj))
        if isinstance(obj, (list, tuple)) and len(obj) == 2:
            lo, hi = map(float, obj)
            mid = (lo + hi) / 2
            return cls(mid, (lo + mid) / 2, (mid + hi) / 2, lo, hi)
        if isinstance(obj, dict):
            known = set(cls.__dataclass_fields__)
            if set(obj) - known or {"median", "q1", "q3", "low", "high"} - set(obj):
                raise ValidationError(
                    f"range object {obj!r} needs keys median, q1, q3, low, high "
                    f"(optionally open_low, open_high)"
                )
            return cls(**obj)
        raise ValidationError(f"cannot interpret range {obj!r}")


# observed cohort distributions: HR 86.2 (75.0-98.7), RR 19.9 (15.7-24.8), SBP 121.3 (105.6-139.6)
_HR_MED, _HR_Q1, _HR_Q3 = 86.2, 75.0, 98.7
DEFAULT_HR = {
    RhythmCode.SR: Range(_HR_MED, _HR_Q1, _HR_Q3, 60.0, 100.0),
    RhythmCode.STACH: Range(_HR_MED, _HR_Q1, _HR_Q3, 100.0, 160.0, open_low=True),
    RhythmCode.SBRAD: Range(_HR_MED, _HR_Q1, _HR_Q3, 40.0, 60.0, open_high=True),
    RhythmCode.AF: Range(_HR_MED, _HR_Q1, _HR_Q3, 50.0, 150.0),
    RhythmCode.SARRH: Range(_HR_MED, _HR_Q1, _HR_Q3, 50.0, 110.0),
}
DEFAULT_RR = Range(19.9, 15.7, 24.8, 6.0, 40.0)
DEFAULT_SBP = Range(121.3, 105.6, 139.6, 70.0, 200.0)
DEFAULT_DBP = Range(62.0, 54.0, 71.0, 35.0, 110.0)
MIN_PULSE_PRESSURE = 15.0

# cohort demographics (mean, sd) and ethnicity shares
_AGE = (64.1, 17.0)
_WEIGHT = (82.2, 22.6)
_HEIGHT = (169.5, 10.5)
_FEMALE_SHARE = 0.439
_ETHNICITY_SHARES = (
    ("WHITE", 0.720),
    ("BLACK/AFRICAN AMERICAN", 0.092),
    ("HISPANIC OR LATINO", 0.041),
    ("ASIAN", 0.028),
    ("UNKNOWN/NOT SPECIFIED", 0.119),
)


@dataclass
class SynthSpec:
    """What :func:`generate_dataset` builds: per-rhythm counts plus parameter ranges."""

    counts: dict
    seed: int = 0
    duration_s: float = 30.0
    sampling_rate_hz: float = DEFAULT_SAMPLING_RATE_HZ
    noise_std: Range = field(default_factory=lambda: Range.fixed(0.1))
    segments_per_subject: int = 1
    hr_bpm: dict = field(default_factory=dict)  # rhythm -> Range overrides
    rr_bpm: Range = DEFAULT_RR
    sbp_mmhg: Range = DEFAULT_SBP
    dbp_mmhg: Range = DEFAULT_DBP
    demographics: bool = True

    def __post_init__(self):
        counts = {}
        for k, v in dict(self.counts).items():
            code = RhythmCode.parse(k)
            if code not in SYNTH_RHYTHMS:
                raise ValidationError(f"rhythm {code.value} not supported by the generator")
            if int(v) != v or v < 0:
                raise ValidationError(f"count for {code.value} must be a non-negative integer")
            counts[code] = int(v)
        self.counts = counts
        self.hr_bpm = {RhythmCode.parse(k): v for k, v in self.hr_bpm.items()}
        if self.segments_per_subject < 1:
            raise ValidationError("segments_per_subject must be >= 1")
        if not (self.duration_s > 0 and self.sampling_rate_hz > 0):
            raise ValidationError("duration and sampling rate must be positive")
        if self.noise_std.low < 0:
            raise ValidationError("noise_std range must be non-negative")
        for rhythm in self.counts:
            _check_hr_range(rhythm, self.hr_range(rhythm))
        for name in ("rr_bpm", "sbp_mmhg", "dbp_mmhg"):
            if getattr(self, name).low <= 0:
                raise ValidationError(f"{name} range must be positive")

    def hr_range(self, rhythm) -> Range:
        return self.hr_bpm.get(rhythm, DEFAULT_HR[rhythm])

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @classmethod
    def from_json(cls, obj) -> "SynthSpec":
        obj = dict(obj)
        if "counts" not in obj:
            raise ValidationError("synth spec needs a 'counts' object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown synth spec keys {sorted(unknown)}")
        for name in ("noise_std", "rr_bpm", "sbp_mmhg", "dbp_mmhg"):
            if name in obj:
                obj[name] = Range.from_json(obj[name])
        if "hr_bpm" in obj:
            obj["hr_bpm"] = {k: Range.from_json(v) for k, v in obj["hr_bpm"].items()}
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "SynthSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


def _check_hr_range(rhythm, rng_: Range):
    """Every value the range can produce must satisfy the rhythm's HR constraint."""
    lo, hi = rng_.low, rng_.high
    if lo <= 0:
        raise ValidationError(f"{rhythm.value}: hr_bpm range must be positive")
    if rhythm == RhythmCode.STACH and (lo < 100 or (lo == 100 and not rng_.open_low)):
        raise ValidationError(f"STACH requires hr_bpm > 100; range starts at {lo}")
    if rhythm == RhythmCode.SBRAD and (hi > 60 or (hi == 60 and not rng_.open_high)):
        raise ValidationError(f"SBRAD requires hr_bpm < 60; range ends at {hi}")
    if rhythm == RhythmCode.SR and (lo < 60 or hi > 100):
        raise ValidationError(f"SR requires 60 <= hr_bpm <= 100; range is [{lo}, {hi}]")


def _streams(master_seed, kind, index):
    ss = np.random.SeedSequence(int(master_seed) % 2**64, spawn_key=(kind, index))
    a, b = ss.generate_state(2, dtype=np.uint64)
    return np.random.default_rng(int(a)), int(b)


def _subject_metadata(rng):
    weight = float(np.clip(rng.normal(*_WEIGHT), 35.0, 250.0))
    height = float(np.clip(rng.normal(*_HEIGHT), 135.0, 210.0))
    age = float(np.clip(rng.normal(*_AGE), 18.0, 100.0))
    labels, shares = zip(*_ETHNICITY_SHARES)
    p = np.asarray(shares) / sum(shares)
    return {
        "age_years": round(age, 1),
        "weight_kg": round(weight, 1),
        "height_cm": round(height, 1),
        "gender": Gender.FEMALE if rng.random() < _FEMALE_SHARE else Gender.MALE,
        "ethnicity_raw": labels[int(rng.choice(len(labels), p=p))],
    }


def draw_params(spec: SynthSpec, rhythm, rng, signal_seed) -> SynthParams:
    hr = spec.hr_range(rhythm).sample(rng)
    rr = spec.rr_bpm.sample(rng)
    for _ in range(1000):
        sbp = spec.sbp_mmhg.sample(rng)
        dbp = spec.dbp_mmhg.sample(rng)
        if sbp - dbp >= MIN_PULSE_PRESSURE:
            break
    else:
        raise ValidationError("SBP/DBP ranges cannot produce a pulse pressure >= 15 mmHg")
    noise = spec.noise_std.sample(rng)
    return SynthParams(
        rhythm=rhythm, hr_bpm=hr, rr_bpm=rr, sbp_mmhg=sbp, dbp_mmhg=dbp, noise_std=noise,
        duration_s=spec.duration_s, sampling_rate_hz=spec.sampling_rate_hz, seed=signal_seed,
    )


def generate_dataset(spec: SynthSpec) -> Dataset:
    """Synthetic dataset with subjects assigned to folds 1..10 round-robin.

    Rhythm classes are generated in the order of ``spec.counts``; each
    subject holds ``segments_per_subject`` consecutive segments of one class.
    Segment ``i`` draws from its own seed stream, so any subset can be
    regenerated independently.
    """
    segments = []
    seg_index = 0
    subject_index = 0
    for rhythm, count in spec.counts.items():
        for first in range(0, count, spec.segments_per_subject):
            subj_rng, _ = _streams(spec.seed, 1, subject_index)
            subject_id = f"subj{subject_index:06d}"
            fold = subject_index % N_FOLDS + 1
            meta = _subject_metadata(subj_rng) if spec.demographics else {}
            for _ in range(min(spec.segments_per_subject, count - first)):
                rng, signal_seed = _streams(spec.seed, 0, seg_index)
                params = draw_params(spec, rhythm, rng, signal_seed)
                seg, _ = generate_segment(
                    params, segment_id=f"seg{seg_index:07d}", subject_id=subject_id,
                    fold=fold, **meta,
                )
                segments.append(seg)
                seg_index += 1
            subject_index += 1
    return Dataset(tuple(segments), provenance="synthetic")
