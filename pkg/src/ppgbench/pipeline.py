"""Library-level implementations of the command-line workflows.

Every ``run_*`` function takes a :class:`RunConfig`, writes its artifacts
under ``config.out_dir`` and returns a dict describing what it wrote.
Artifacts are byte-deterministic for identical inputs; the only
time-dependent file is the ``run_meta.json`` sidecar.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import logging
import platform
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import report as _report
from .dsp import clean, resample_segment
from .errors import ValidationError
from .metrics import evaluate, median_baseline
from .neural.checkpoint import load_checkpoint, save_checkpoint
from .neural.train import TrainConfig, predict, train
from .strata import DEFAULT_MIN_PER_CLASS, STRATIFIERS, stratified_evaluate
from .synth import SynthSpec, generate_dataset
from .tasks import TaskKind, build_task_dataset, get_task
from .taxonomy import (
    DEFAULT_SAMPLING_RATE_HZ, TEST_FOLDS, TRAIN_FOLDS, VALIDATION_FOLDS, Dataset, load_dataset,
    split_folds, write_dataset,
)

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.ppgb"
HISTORY_NAME = "history.json"
RUN_META_NAME = "run_meta.json"
SPLITS = {"train": TRAIN_FOLDS, "validation": VALIDATION_FOLDS, "test": TEST_FOLDS,
          "all": tuple(range(1, 11))}
TRAIN_OVERRIDE_KEYS = tuple(f.name for f in dataclasses.fields(TrainConfig) if f.name != "seed")


@dataclass
class RunConfig:
    """Fully resolved settings of one command invocation."""

    out_dir: str
    task: Optional[str] = None
    dataset: Optional[str] = None
    checkpoint: Optional[str] = None
    synth_spec: Optional[str] = None
    external: Optional[str] = None
    train: dict = field(default_factory=dict)
    clean: bool = True
    resample: bool = False
    resample_hz: Optional[float] = None
    stratifier: Optional[str] = None
    min_per_class: Optional[int] = None
    split: str = "test"
    seed: int = 0
    plots: bool = True
    inputs: list = field(default_factory=list)

    def __post_init__(self):
        if self.task is not None:
            self.task = str(get_task(self.task))
        unknown = set(self.train) - set(TRAIN_OVERRIDE_KEYS)
        if unknown:
            raise ValidationError(f"unknown training settings: {sorted(unknown)}")
        if self.stratifier is not None and self.stratifier not in STRATIFIERS:
            raise ValidationError(
                f"unknown stratifier {self.stratifier!r}; choose from {sorted(STRATIFIERS)}"
            )
        if self.split not in SPLITS:
            raise ValidationError(f"unknown split {self.split!r}; choose from {sorted(SPLITS)}")
        if self.min_per_class is not None and self.min_per_class < 1:
            raise ValidationError("min_per_class must be >= 1")
        for name in ("dataset", "checkpoint", "synth_spec", "external"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise FileNotFoundError(f"{name} path does not exist: {path}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.train)


def _require(config, *names):
    missing = [n for n in names if getattr(config, n) is None]
    if missing:
        raise ValidationError(f"missing required setting(s): {', '.join(missing)}")


def _out(config) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_meta(out: Path, command: str, config: RunConfig):
    meta = {
        "command": command,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "python": platform.python_version(),
        "tool_version": __version__,
        "run_config": config.to_dict(),
    }
    _report.write_json(out / RUN_META_NAME, meta)


def _preprocess(dataset: Dataset, do_clean: bool, resample_hz=None) -> Dataset:
    if resample_hz is not None:
        dataset = dataset.map(lambda s: resample_segment(s, resample_hz))
    if do_clean:
        dataset = dataset.map(clean)
    return dataset


def _xy(pairs):
    return [p[0].samples for p in pairs], np.stack([p[1] for p in pairs])


def _stack(rows):
    """Equal-length rows become one matrix; mixed lengths stay a list."""
    if len({r.size for r in rows}) == 1:
        return np.stack(rows).astype(np.float64)
    return [np.asarray(r, dtype=np.float64) for r in rows]


# --- synth / preprocess ------------------------------------------------------


def run_synth(config: RunConfig) -> dict:
    _require(config, "synth_spec")
    spec = SynthSpec.load(config.synth_spec)
    dataset = generate_dataset(spec)
    out = _out(config)
    manifest = write_dataset(dataset, out)
    counts = Counter(str(s.rhythm) for s in dataset)
    _write_run_meta(out, "synth", config)
    return {"manifest": manifest, "counts": dict(sorted(counts.items()))}


def run_preprocess(config: RunConfig) -> dict:
    _require(config, "dataset")
    dataset = _preprocess(load_dataset(config.dataset), config.clean, config.resample_hz)
    out = _out(config)
    manifest = write_dataset(dataset, out)
    _write_run_meta(out, "preprocess", config)
    return {"manifest": manifest, "n_segments": len(dataset)}


# --- train ---------------------------------------------------------------------


def run_train(config: RunConfig) -> dict:
    _require(config, "dataset", "task")
    task = get_task(config.task)
    dataset = _preprocess(load_dataset(config.dataset), config.clean)
    tr, va, _ = (build_task_dataset(part, task) for part in split_folds(dataset))
    if not tr or not va:
        raise ValidationError(
            f"empty task dataset: {len(tr)} training and {len(va)} validation segments "
            f"carry {task} targets"
        )
    rates = {s.sampling_rate_hz for s, _ in tr}
    if len(rates) != 1:
        raise ValidationError(f"training segments mix sampling rates {sorted(rates)}")
    lengths = {s.samples.size for s, _ in tr + va}
    if len(lengths) != 1:
        raise ValidationError(f"training needs equal-length segments, found {sorted(lengths)}")
    X_tr, Y_tr = _xy(tr)
    X_va, Y_va = _xy(va)
    tcfg = config.train_config()
    model, history = train(tcfg, task, (np.stack(X_tr), Y_tr), (np.stack(X_va), Y_va))
    metadata = {
        "task": str(task),
        "clean": config.clean,
        "sampling_rate_hz": rates.pop(),
        "n_train": len(tr),
        "n_validation": len(va),
        "tool_version": __version__,
    }
    if not task.is_classification:
        metadata["baseline_medians"] = [median_baseline(Y_tr[:, j]) for j in range(Y_tr.shape[1])]
    out = _out(config)
    ckpt = save_checkpoint(out / CHECKPOINT_NAME, model, tcfg.to_dict(), history.to_dict(),
                           metadata)
    hist_doc = history.to_dict()
    hist_doc["provenance"] = _report.provenance(config.to_dict())
    hist_path = _report.write_json(out / HISTORY_NAME, hist_doc)
    _write_run_meta(out, "train", config)
    return {"checkpoint": ckpt, "history": hist_path, "selected_epoch": history.selected_epoch}


# --- evaluation ----------------------------------------------------------------


def _load_model(config):
    _require(config, "checkpoint")
    model, header = load_checkpoint(config.checkpoint)
    meta = header.get("metadata") or {}
    task_name = config.task or meta.get("task")
    if task_name is None:
        raise ValidationError("task not given and not recorded in the checkpoint")
    task = get_task(task_name)
    if model.output_dim != task.output_dim:
        raise ValidationError(
            f"checkpoint has {model.output_dim} outputs but task {task} needs {task.output_dim}"
        )
    return model, meta, task


def _score_pairs(model, task, pairs):
    X, Y = _xy(pairs)
    return predict(model, _stack(X), task), Y


def _baseline_report(task, meta, Y):
    medians = meta.get("baseline_medians")
    if task.is_classification or medians is None:
        return None
    return evaluate(task, np.tile(np.asarray(medians, dtype=float), (len(Y), 1)), Y)


def _write_strata(out, stem, task, scores, Y, segments, stratifier, min_per_class, run_config):
    reports = stratified_evaluate(task, scores, Y, segments, stratifier, min_per_class)
    doc = {
        "stratifier": stratifier,
        "task": str(task),
        "strata": [r.to_dict() for r in reports],
        "provenance": _report.provenance(run_config),
    }
    json_path = _report.write_json(out / f"{stem}.json", doc)
    csv_path = out / f"{stem}.csv"
    csv_path.write_text(_report.strata_csv(reports))
    return {"json": json_path, "csv": csv_path, "reports": reports}


def _eval_pairs(config: RunConfig):
    model, meta, task = _load_model(config)
    _require(config, "dataset")
    dataset = load_dataset(config.dataset)
    folds = SPLITS[config.split]
    dataset = dataset.subset(lambda s: s.fold in folds)
    dataset = _preprocess(dataset, bool(meta.get("clean", config.clean)))
    pairs = build_task_dataset(dataset, task)
    if not pairs:
        raise ValidationError(
            f"no {config.split} segments carry {task} labels; nothing to evaluate"
        )
    return model, meta, task, pairs


def run_eval(config: RunConfig) -> dict:
    model, meta, task, pairs = _eval_pairs(config)
    scores, Y = _score_pairs(model, task, pairs)
    report = evaluate(task, scores, Y, min_per_class=config.min_per_class or 1)
    baseline = _baseline_report(task, meta, Y)
    out = _out(config)
    written = _report.write_eval_outputs(out, report, scores, Y, task, config.to_dict(),
                                         baseline=baseline, plots=config.plots)
    if config.stratifier:
        written["strata"] = _write_strata(
            out, f"strata_{config.stratifier}", task, scores, Y, [p[0] for p in pairs],
            config.stratifier, config.min_per_class or DEFAULT_MIN_PER_CLASS, config.to_dict(),
        )
    _write_run_meta(out, "eval", config)
    written["report"] = report
    written["baseline"] = baseline
    return written


def run_strata(config: RunConfig) -> dict:
    _require(config, "stratifier")
    model, meta, task, pairs = _eval_pairs(config)
    scores, Y = _score_pairs(model, task, pairs)
    out = _out(config)
    written = _write_strata(
        out, f"strata_{config.stratifier}", task, scores, Y, [p[0] for p in pairs],
        config.stratifier, config.min_per_class or DEFAULT_MIN_PER_CLASS, config.to_dict(),
    )
    _write_run_meta(out, "strata", config)
    return written


def run_external(config: RunConfig) -> dict:
    """Score a model on an external dataset labelled with ``liu_code``."""
    _require(config, "external")
    model, meta, task = _load_model(config)
    if not task.is_classification:
        raise ValidationError(f"external validation needs a classification task, got {task}")
    dataset = load_dataset(config.external)
    target_hz = meta.get("sampling_rate_hz", DEFAULT_SAMPLING_RATE_HZ) if config.resample else None
    dataset = _preprocess(dataset, bool(meta.get("clean", config.clean)), target_hz)
    pairs = build_task_dataset(dataset, task, external=True)
    if not pairs:
        raise ValidationError(
            f"external dataset is empty after exclusion: no segment has a target for task {task}"
        )
    scores, Y = _score_pairs(model, task, pairs)
    report = evaluate(task, scores, Y, min_per_class=config.min_per_class or 1)
    out = _out(config)
    written = _report.write_eval_outputs(out, report, scores, Y, task, config.to_dict(),
                                         stem="external", plots=config.plots)
    _write_run_meta(out, "external", config)
    written["report"] = report
    written["n_segments"] = len(pairs)
    return written


def run_report(config: RunConfig) -> dict:
    """Collect ``eval.json``/``external.json`` files into a markdown summary."""
    if not config.inputs:
        raise ValidationError("report needs at least one input directory or report file")
    docs = {}
    for item in config.inputs:
        path = Path(item)
        files = sorted(path.glob("*.json")) if path.is_dir() else [path]
        if not path.exists():
            raise FileNotFoundError(f"report input does not exist: {item}")
        for f in files:
            if f.name in (RUN_META_NAME, HISTORY_NAME) or f.name.startswith("strata_"):
                continue
            doc = json.loads(f.read_text())
            if "task" not in doc or "report_version" not in doc:
                continue
            docs[f"{path.name}/{f.stem}" if path.is_dir() else f.stem] = doc
    if not docs:
        raise ValidationError("no evaluation reports found in the given inputs")
    out = _out(config)
    md = out / "summary.md"
    md.write_text(_report.summary_markdown(docs))
    _write_run_meta(out, "report", config)
    return {"summary": md, "n_reports": len(docs)}


COMMANDS = {
    "synth": run_synth,
    "preprocess": run_preprocess,
    "train": run_train,
    "eval": run_eval,
    "strata": run_strata,
    "external": run_external,
    "report": run_report,
}

__all__ = ["RunConfig", "COMMANDS", "TaskKind"] + [f.__name__ for f in COMMANDS.values()]
