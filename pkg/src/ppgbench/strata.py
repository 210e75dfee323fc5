"""Clinical and demographic subgroup assignment and stratified evaluation."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional

import numpy as np

from .errors import ValidationError
from .metrics import EvalReport, evaluate
from .tasks import get_task
from .taxonomy import Gender

ETHNICITY_FIXTURE = "ethnicity_mapping.csv"
FIXTURE_VERSION = 1
DEFAULT_MIN_PER_CLASS = 10


class BpCategory(str, enum.Enum):
    HYPOTENSION = "Hypotension"
    NORMAL = "Normal"
    ELEVATED = "Elevated"
    STAGE1 = "Stage1"
    STAGE2 = "Stage2"


class HrCategory(str, enum.Enum):
    BRADYCARDIA = "Bradycardia"
    NORMAL = "Normal"
    TACHYCARDIA = "Tachycardia"


class BmiCategory(str, enum.Enum):
    UNDERWEIGHT = "Underweight"
    NORMAL = "Normal"
    OVERWEIGHT = "Overweight"
    OBESE = "Obese"


class EthnicityGroup(str, enum.Enum):
    WHITE = "White"
    BLACK = "Black"
    ASIAN = "Asian"
    HISPANIC = "Hispanic"
    OTHER = "Other"


def _finite(*values):
    return all(isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v)
               for v in values)


def bp_category(sbp, dbp) -> BpCategory:
    """Blood-pressure category; mixed readings take the higher category.

    Hypotension is checked first, so e.g. 150/55 is Hypotension.
    """
    if not _finite(sbp, dbp):
        raise ValidationError(f"blood pressure must be finite, got {sbp}/{dbp}")
    if not sbp > dbp:
        raise ValidationError(f"systolic {sbp} must exceed diastolic {dbp}")
    if sbp < 90 or dbp < 60:
        return BpCategory.HYPOTENSION
    if sbp >= 140 or dbp >= 90:
        return BpCategory.STAGE2
    if sbp >= 130 or dbp >= 80:
        return BpCategory.STAGE1
    if sbp >= 120:
        return BpCategory.ELEVATED
    return BpCategory.NORMAL


def hr_category(hr) -> HrCategory:
    if not _finite(hr) or hr <= 0:
        raise ValidationError(f"heart rate must be positive, got {hr}")
    if hr < 60:
        return HrCategory.BRADYCARDIA
    if hr > 100:
        return HrCategory.TACHYCARDIA
    return HrCategory.NORMAL


def bmi(weight_kg, height_cm) -> float:
    if not _finite(weight_kg, height_cm) or weight_kg <= 0 or height_cm <= 0:
        raise ValidationError(f"weight and height must be positive, got {weight_kg}, {height_cm}")
    return weight_kg / (height_cm / 100.0) ** 2


def bmi_category(value) -> BmiCategory:
    if not _finite(value) or value <= 0:
        raise ValidationError(f"BMI must be positive, got {value}")
    if value < 18.5:
        return BmiCategory.UNDERWEIGHT
    if value < 25:
        return BmiCategory.NORMAL
    if value < 30:
        return BmiCategory.OVERWEIGHT
    return BmiCategory.OBESE


def _normalize_label(raw: str) -> str:
    return " ".join(str(raw).upper().split())


@lru_cache(maxsize=None)
def ethnicity_table() -> dict:
    text = resources.files("ppgbench.data").joinpath(ETHNICITY_FIXTURE).read_text("utf-8")
    rows = [line for line in text.splitlines() if line and not line.startswith("#")]
    return {
        _normalize_label(r["raw_label"]): EthnicityGroup(r["group"])
        for r in csv.DictReader(rows)
    }


def map_ethnicity(raw) -> EthnicityGroup:
    """Aggregate group for a raw ethnicity label; unknown labels map to Other."""
    return ethnicity_table().get(_normalize_label(raw), EthnicityGroup.OTHER)


# --- stratified evaluation --------------------------------------------------


def _bp_of(seg):
    if seg.sbp_mmhg is None or seg.dbp_mmhg is None:
        return None
    return bp_category(seg.sbp_mmhg, seg.dbp_mmhg)


def _hr_of(seg):
    return None if seg.hr_bpm is None else hr_category(seg.hr_bpm)


def _bmi_of(seg):
    if seg.weight_kg is None or seg.height_cm is None:
        return None
    return bmi_category(bmi(seg.weight_kg, seg.height_cm))


def _ethnicity_of(seg):
    return None if seg.ethnicity_raw is None else map_ethnicity(seg.ethnicity_raw)


def _gender_of(seg):
    return seg.gender


STRATIFIERS = {
    "bp": (_bp_of, list(BpCategory)),
    "hr": (_hr_of, list(HrCategory)),
    "bmi": (_bmi_of, list(BmiCategory)),
    "ethnicity": (_ethnicity_of, list(EthnicityGroup)),
    "gender": (_gender_of, list(Gender)),
}


def assign_strata(segments, stratifier):
    """Category (or ``None`` when inputs are missing) for each segment."""
    try:
        fn, _ = STRATIFIERS[stratifier]
    except KeyError:
        raise ValidationError(
            f"unknown stratifier {stratifier!r}; choose from {sorted(STRATIFIERS)}"
        ) from None
    return [fn(s) for s in segments]


@dataclass
class StratumReport:
    stratifier: str
    category: str
    n_samples: int
    min_per_class: int
    report: Optional[EvalReport] = None

    def to_dict(self) -> dict:
        return {
            "stratifier": self.stratifier,
            "category": self.category,
            "n_samples": self.n_samples,
            "min_per_class": self.min_per_class,
            "report": None if self.report is None else self.report.to_dict(),
        }


def stratified_evaluate(task, predictions, targets, segments, stratifier,
                        min_per_class=DEFAULT_MIN_PER_CLASS) -> list:
    """One :class:`StratumReport` per category of ``stratifier``.

    Segments lacking the stratifier's inputs are dropped. A label is scored in
    a stratum only with at least ``min_per_class`` positives and negatives;
    otherwise it is flagged insufficient. Empty categories get ``report=None``.
    """
    task = get_task(task)
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.ndim == 1:
        predictions = predictions[:, None]
    if targets.ndim == 1:
        targets = targets[:, None]
    segments = list(segments)
    if not (len(segments) == predictions.shape[0] == targets.shape[0]):
        raise ValidationError(
            f"misaligned inputs: {len(segments)} segments, {predictions.shape[0]} predictions, "
            f"{targets.shape[0]} targets"
        )
    cats = assign_strata(segments, stratifier)
    categories = STRATIFIERS[stratifier][1]
    out = []
    for cat in categories:
        mask = np.array([c == cat for c in cats], dtype=bool)
        n = int(mask.sum())
        name = cat.value if isinstance(cat, enum.Enum) else str(cat)
        stratum = StratumReport(stratifier, name, n, min_per_class)
        if n and task.is_classification:
            stratum.report = evaluate(task, predictions[mask], targets[mask], min_per_class)
        elif n:
            stratum.report = evaluate(task, predictions[mask], targets[mask])
        out.append(stratum)
    return out
