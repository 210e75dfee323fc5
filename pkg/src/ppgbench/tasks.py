"""Benchmark tasks: rhythm-to-target mapping and regression target extraction.

The rhythm and external-dataset mapping tables ship as CSV fixtures in
``ppgbench/data`` and are the single source the lookups are built from.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional

import numpy as np

from .errors import ValidationError
from .taxonomy import Dataset, PpgSegment, RhythmCode

RHYTHM_FIXTURE = "rhythm_mapping.csv"
LIU_FIXTURE = "liu_mapping.csv"
FIXTURE_VERSION = 1


class TaskKind(str, enum.Enum):
    AF = "AF"
    SAA = "SAA"
    ARRH = "ARRH"
    REG_HR = "REG_HR"
    REG_RR = "REG_RR"
    REG_BP = "REG_BP"

    def __str__(self):
        return self.value


ARRH_LABELS = (
    "SR", "STACH", "AF", "SBRAD", "VPACE", "AVPACE", "AFLT",
    "APACE", "SARRH", "JR", "SVTACH", "MATACH", "VTACH",
)


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    output_names: tuple

    @property
    def output_dim(self) -> int:
        return len(self.output_names)

    @property
    def is_classification(self) -> bool:
        return self.kind in (TaskKind.AF, TaskKind.SAA, TaskKind.ARRH)

    @property
    def loss_kind(self) -> str:
        return "bce" if self.is_classification else "mse"

    @property
    def selection_metric(self) -> str:
        return "macro_auroc" if self.is_classification else "neg_mae"

    def __str__(self):
        return self.kind.value


_TASKS = {
    TaskKind.AF: TaskSpec(TaskKind.AF, ("AF", "AFLT")),
    TaskKind.SAA: TaskSpec(TaskKind.SAA, ("SINUS", "AF+AFLT")),
    TaskKind.ARRH: TaskSpec(TaskKind.ARRH, ARRH_LABELS),
    TaskKind.REG_HR: TaskSpec(TaskKind.REG_HR, ("HR",)),
    TaskKind.REG_RR: TaskSpec(TaskKind.REG_RR, ("RR",)),
    TaskKind.REG_BP: TaskSpec(TaskKind.REG_BP, ("SBP", "DBP")),
}

_REGRESSION_FIELDS = {
    TaskKind.REG_HR: ("hr_bpm",),
    TaskKind.REG_RR: ("rr_bpm",),
    TaskKind.REG_BP: ("sbp_mmhg", "dbp_mmhg"),
}

_FIXTURE_COLUMN = {TaskKind.AF: "af_map", TaskKind.SAA: "saa_map", TaskKind.ARRH: "arrh_map"}


def get_task(kind) -> TaskSpec:
    if isinstance(kind, TaskSpec):
        return kind
    try:
        return _TASKS[TaskKind(str(kind).upper())]
    except ValueError:
        raise ValidationError(
            f"unknown task {kind!r}; choose from {[k.value for k in TaskKind]}"
        ) from None


class Excluded:
    """The segment is dropped from the task."""

    def __repr__(self):
        return "Excluded"

    def __eq__(self, other):
        return isinstance(other, Excluded)

    def __hash__(self):
        return hash("Excluded")


class ZeroVector:
    """The segment is kept with an all-zero target."""

    def __repr__(self):
        return "ZeroVector"

    def __eq__(self, other):
        return isinstance(other, ZeroVector)

    def __hash__(self):
        return hash("ZeroVector")


@dataclass(frozen=True)
class Target:
    indices: frozenset

    def __post_init__(self):
        if not self.indices:
            raise ValidationError("Target needs at least one index")


EXCLUDED = Excluded()
ZERO = ZeroVector()


def _read_fixture(name):
    text = resources.files("ppgbench.data").joinpath(name).read_text(encoding="utf-8")
    rows = [line for line in text.splitlines() if line and not line.startswith("#")]
    return list(csv.DictReader(rows))


def _outcome(cell: str, task: TaskSpec):
    cell = cell.strip()
    if cell.lower() == "exclude":
        return EXCLUDED
    if cell == "OTHER":
        return ZERO
    if cell not in task.output_names:
        raise ValidationError(f"fixture cell {cell!r} is not an output of task {task}")
    return Target(frozenset({task.output_names.index(cell)}))


@lru_cache(maxsize=None)
def rhythm_table() -> dict:
    """``{(RhythmCode, TaskKind): outcome}`` built from the shipped fixture."""
    table = {}
    for row in _read_fixture(RHYTHM_FIXTURE):
        code = RhythmCode.parse(row["code"])
        for kind, column in _FIXTURE_COLUMN.items():
            table[code, kind] = _outcome(row[column], _TASKS[kind])
    missing = set(RhythmCode) - {c for c, _ in table}
    if missing:
        raise ValidationError(f"rhythm fixture lacks codes {sorted(m.value for m in missing)}")
    return table


@lru_cache(maxsize=None)
def external_table() -> dict:
    table = {}
    for row in _read_fixture(LIU_FIXTURE):
        code = int(row["liu_code"])
        for kind, column in _FIXTURE_COLUMN.items():
            table[code, kind] = _outcome(row[column], _TASKS[kind])
    return table


def _classification_task(task) -> TaskSpec:
    task = get_task(task)
    if not task.is_classification:
        raise ValidationError(f"task {task} is not a classification task")
    return task


def map_rhythm(code, task):
    task = _classification_task(task)
    return rhythm_table()[RhythmCode.parse(code), task.kind]


def map_external(liu_code, task):
    task = _classification_task(task)
    try:
        code = int(liu_code)
    except (TypeError, ValueError):
        raise ValidationError(f"external rhythm code {liu_code!r} is not an integer") from None
    if not 0 <= code <= 5 or code != liu_code:
        raise ValidationError(f"external rhythm code {liu_code!r} outside 0..5")
    return external_table()[code, task.kind]


def outcome_vector(outcome, task) -> Optional[np.ndarray]:
    """Dense 0/1 target for a mapping outcome, ``None`` when excluded."""
    task = get_task(task)
    if isinstance(outcome, Excluded):
        return None
    vec = np.zeros(task.output_dim)
    if isinstance(outcome, Target):
        vec[sorted(outcome.indices)] = 1.0
    return vec


def encode_targets(segment: PpgSegment, task, external=False) -> Optional[np.ndarray]:
    """Target vector for ``segment`` or ``None`` when the task cannot use it.

    With ``external=True`` classification targets come from ``liu_code``.
    """
    task = get_task(task)
    if task.is_classification:
        if external:
            if segment.liu_code is None:
                return None
            return outcome_vector(map_external(segment.liu_code, task), task)
        if segment.rhythm is None:
            return None
        return outcome_vector(map_rhythm(segment.rhythm, task), task)
    values = [getattr(segment, f) for f in _REGRESSION_FIELDS[task.kind]]
    if any(v is None for v in values):
        return None
    return np.asarray(values, dtype=np.float64)


def build_task_dataset(dataset: Dataset, task, external=False) -> list:
    """``[(segment, target)]`` for every segment with a defined target, in input order."""
    task = get_task(task)
    pairs = []
    for seg in dataset:
        target = encode_targets(seg, task, external=external)
        if target is not None:
            pairs.append((seg, target))
    return pairs
