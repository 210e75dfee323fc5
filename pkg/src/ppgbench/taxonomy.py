"""Rhythm taxonomy, segment/dataset data model and the on-disk dataset format.

A dataset directory holds ``manifest.jsonl`` (one JSON record per segment),
``signals.bin`` (concatenated little-endian float32 samples addressed by
``offset``/``length`` in sample counts) and a small ``dataset.json`` header
carrying the provenance tag.
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import DatasetFormatError, ValidationError

DEFAULT_SAMPLING_RATE_HZ = 125.0
SEGMENT_SECONDS = 30.0
N_FOLDS = 10
TRAIN_FOLDS = tuple(range(1, 8))
VALIDATION_FOLDS = (8,)
TEST_FOLDS = (9, 10)

MANIFEST_NAME = "manifest.jsonl"
SIGNALS_NAME = "signals.bin"
HEADER_NAME = "dataset.json"
FORMAT_VERSION = 1

_BLOB_DTYPE = np.dtype("<f4")


class RhythmCode(str, enum.Enum):
    """The 26 rhythm annotations of the source dataset, in table order."""

    SR = "SR"
    STACH = "STACH"
    AF = "AF"
    SBRAD = "SBRAD"
    VPACE = "VPACE"
    AVPACE = "AVPACE"
    AFLT = "AFLT"
    APACE = "APACE"
    SARRH = "SARRH"
    JR = "JR"
    SVTACH = "SVTACH"
    MATACH = "MATACH"
    VTACH = "VTACH"
    WAPACE = "WAPACE"
    JTACH = "JTACH"
    OTHER = "OTHER"
    PATACH = "PATACH"
    VFIB = "VFIB"
    ASYS = "ASYS"
    IDIOV = "IDIOV"
    AVB1 = "1AVB"
    LBBB = "LBBB"
    RBBB = "RBBB"
    AVB2M1 = "2AVBM1"
    AVB3 = "3AVB"
    AVB2M2 = "2AVBM2"

    @classmethod
    def parse(cls, value) -> "RhythmCode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValidationError(f"unknown rhythm code {value!r}") from None

    def __str__(self):
        return self.value


class Gender(str, enum.Enum):
    FEMALE = "female"
    MALE = "male"

    @classmethod
    def parse(cls, value) -> "Gender":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        aliases = {"f": "female", "m": "male"}
        try:
            return cls(aliases.get(v, v))
        except ValueError:
            raise ValidationError(f"unknown gender {value!r}") from None

    def __str__(self):
        return self.value


_OPTIONAL_REALS = (
    "hr_bpm",
    "rr_bpm",
    "sbp_mmhg",
    "dbp_mmhg",
    "age_years",
    "weight_kg",
    "height_cm",
)


@dataclass(frozen=True, eq=False)
class PpgSegment:
    """One PPG waveform plus its labels and metadata.

    Absent labels are ``None``; they are never encoded as sentinel numbers.
    ``liu_code`` is only populated for external-validation sets.
    """

    segment_id: str
    subject_id: str
    fold: int
    samples: np.ndarray
    sampling_rate_hz: float = DEFAULT_SAMPLING_RATE_HZ
    rhythm: Optional[RhythmCode] = None
    hr_bpm: Optional[float] = None
    rr_bpm: Optional[float] = None
    sbp_mmhg: Optional[float] = None
    dbp_mmhg: Optional[float] = None
    age_years: Optional[float] = None
    weight_kg: Optional[float] = None
    height_cm: Optional[float] = None
    gender: Optional[Gender] = None
    ethnicity_raw: Optional[str] = None
    liu_code: Optional[int] = None

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise ValidationError(f"{self.segment_id}: samples must be one-dimensional")
        if samples.dtype.kind != "f":
            samples = samples.astype(np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.size < 2:
            raise ValidationError(f"{self.segment_id}: segment needs at least 2 samples")
        if not np.all(np.isfinite(samples)):
            raise ValidationError(f"{self.segment_id}: non-finite sample value")
        if not isinstance(self.fold, (int, np.integer)) or isinstance(self.fold, bool):
            raise ValidationError(f"{self.segment_id}: fold must be an integer")
        if not 1 <= int(self.fold) <= N_FOLDS:
            raise ValidationError(f"{self.segment_id}: fold {self.fold} outside 1..{N_FOLDS}")
        object.__setattr__(self, "fold", int(self.fold))
        if not (math.isfinite(self.sampling_rate_hz) and self.sampling_rate_hz > 0):
            raise ValidationError(f"{self.segment_id}: sampling rate must be positive")
        if self.rhythm is not None:
            object.__setattr__(self, "rhythm", RhythmCode.parse(self.rhythm))
        if self.gender is not None:
            object.__setattr__(self, "gender", Gender.parse(self.gender))
        for name in _OPTIONAL_REALS:
            value = getattr(self, name)
            if value is not None:
                value = float(value)
                if not math.isfinite(value):
                    raise ValidationError(f"{self.segment_id}: {name} is not finite")
                object.__setattr__(self, name, value)
        if self.liu_code is not None:
            object.__setattr__(self, "liu_code", int(self.liu_code))

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sampling_rate_hz

    def with_samples(self, samples, sampling_rate_hz=None) -> "PpgSegment":
        """Copy of this segment with the waveform replaced; metadata untouched."""
        rate = self.sampling_rate_hz if sampling_rate_hz is None else sampling_rate_hz
        return replace(self, samples=samples, sampling_rate_hz=rate)

    def metadata(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "samples":
                continue
            value = getattr(self, f.name)
            if isinstance(value, enum.Enum):
                value = value.value
            out[f.name] = value
        return out

    def __eq__(self, other):
        if not isinstance(other, PpgSegment):
            return NotImplemented
        return (
            self.metadata() == other.metadata()
            and self.samples.dtype == other.samples.dtype
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered, immutable collection of segments.

    Segment ids are unique and every subject lives in exactly one fold.
    """

    segments: tuple = ()
    provenance: str = "imported"

    def __post_init__(self):
        segments = tuple(self.segments)
        object.__setattr__(self, "segments", segments)
        seen = set()
        subject_fold = {}
        for seg in segments:
            if seg.segment_id in seen:
                raise ValidationError(f"duplicate segment_id {seg.segment_id!r}")
            seen.add(seg.segment_id)
            fold = subject_fold.setdefault(seg.subject_id, seg.fold)
            if fold != seg.fold:
                raise ValidationError(
                    f"subject {seg.subject_id!r} appears in folds {fold} and {seg.fold}"
                )

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, idx):
        return self.segments[idx]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.provenance == other.provenance and self.segments == other.segments

    __hash__ = None

    @property
    def segment_ids(self) -> list:
        return [s.segment_id for s in self.segments]

    def subset(self, predicate) -> "Dataset":
        return Dataset(tuple(s for s in self.segments if predicate(s)), self.provenance)

    def map(self, fn) -> "Dataset":
        return Dataset(tuple(fn(s) for s in self.segments), self.provenance)


def split_folds(dataset: Dataset):
    """Partition into (train, validation, test) = folds 1-7, fold 8, folds 9-10."""
    train = dataset.subset(lambda s: s.fold in TRAIN_FOLDS)
    validation = dataset.subset(lambda s: s.fold in VALIDATION_FOLDS)
    test = dataset.subset(lambda s: s.fold in TEST_FOLDS)
    return train, validation, test


# --- file format -----------------------------------------------------------

_RECORD_KEYS = (
    "segment_id",
    "subject_id",
    "fold",
    "offset",
    "length",
    "sampling_rate_hz",
    "rhythm",
    *_OPTIONAL_REALS,
    "gender",
    "ethnicity_raw",
    "liu_code",
)
_REQUIRED_KEYS = ("segment_id", "subject_id", "fold", "offset", "length", "sampling_rate_hz")


def _resolve_paths(path) -> tuple[Path, Path, Path]:
    path = Path(path)
    if path.is_dir():
        root = path
        manifest = root / MANIFEST_NAME
    else:
        root = path.parent
        manifest = path
    return manifest, root / SIGNALS_NAME, root / HEADER_NAME


def _record(seg: PpgSegment, offset: int) -> dict:
    meta = seg.metadata()
    rec = {
        "segment_id": seg.segment_id,
        "subject_id": seg.subject_id,
        "fold": seg.fold,
        "offset": offset,
        "length": int(seg.samples.size),
        "sampling_rate_hz": float(seg.sampling_rate_hz),
    }
    for key in _RECORD_KEYS[6:]:
        if meta[key] is not None:
            rec[key] = meta[key]
    return rec


def write_dataset(dataset: Dataset, directory) -> Path:
    """Write ``dataset`` as manifest + blob under ``directory``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_path = directory / MANIFEST_NAME
    offset = 0
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as mf, open(
        directory / SIGNALS_NAME, "wb"
    ) as bf:
        for seg in dataset.segments:
            mf.write(json.dumps(_record(seg, offset), allow_nan=False) + "\n")
            bf.write(np.ascontiguousarray(seg.samples, dtype=_BLOB_DTYPE).tobytes())
            offset += seg.samples.size
    header = {
        "format_version": FORMAT_VERSION,
        "provenance": dataset.provenance,
        "n_segments": len(dataset),
        "n_samples": offset,
    }
    (directory / HEADER_NAME).write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _parse_record(line_no: int, text: str, blob: np.ndarray) -> PpgSegment:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"invalid JSON ({exc.msg})", line_no) from None
    if not isinstance(rec, dict):
        raise DatasetFormatError("record is not a JSON object", line_no)
    missing = [k for k in _REQUIRED_KEYS if k not in rec]
    if missing:
        raise DatasetFormatError(f"missing keys {missing}", line_no)
    unknown = sorted(set(rec) - set(_RECORD_KEYS))
    if unknown:
        raise DatasetFormatError(f"unknown keys {unknown}", line_no)
    offset, length = rec.pop("offset"), rec.pop("length")
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (offset, length)):
        raise DatasetFormatError("offset and length must be integers", line_no)
    if offset < 0 or length < 0 or offset + length > blob.size:
        raise DatasetFormatError(
            f"samples [{offset}, {offset + length}) out of blob bounds (size {blob.size})",
            line_no,
        )
    samples = blob[offset : offset + length].astype(np.float32)
    if not np.all(np.isfinite(samples)):
        raise DatasetFormatError(f"non-finite sample in segment {rec['segment_id']!r}", line_no)
    try:
        return PpgSegment(samples=samples, **rec)
    except (ValidationError, TypeError) as exc:
        raise DatasetFormatError(str(exc), line_no) from None


def load_dataset(manifest_path) -> Dataset:
    """Load and validate a dataset from a manifest path or its directory."""
    manifest, signals, header_path = _resolve_paths(manifest_path)
    if not manifest.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest}")
    if not signals.is_file():
        raise FileNotFoundError(f"signal blob not found: {signals}")
    size = os.path.getsize(signals)
    if size % _BLOB_DTYPE.itemsize:
        raise DatasetFormatError(f"{signals} size {size} is not a multiple of 4 bytes")
    blob = np.fromfile(signals, dtype=_BLOB_DTYPE)
    provenance = "imported"
    if header_path.is_file():
        provenance = json.loads(header_path.read_text()).get("provenance", provenance)

    segments = []
    ids = {}
    subject_fold = {}
    with open(manifest, encoding="utf-8") as fh:
        for line_no, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            seg = _parse_record(line_no, text, blob)
            if seg.segment_id in ids:
                raise DatasetFormatError(
                    f"duplicate segment_id {seg.segment_id!r} (first on line {ids[seg.segment_id]})",
                    line_no,
                )
            ids[seg.segment_id] = line_no
            fold = subject_fold.setdefault(seg.subject_id, seg.fold)
            if fold != seg.fold:
                raise DatasetFormatError(
                    f"subject {seg.subject_id!r} assigned to folds {fold} and {seg.fold}", line_no
                )
            segments.append(seg)
    return Dataset(tuple(segments), provenance)


def concat(datasets: Iterable[Dataset], provenance: Optional[str] = None) -> Dataset:
    datasets = list(datasets)
    segs = tuple(s for d in datasets for s in d.segments)
    if provenance is None:
        provenance = datasets[0].provenance if datasets else "imported"
    return Dataset(segs, provenance)
