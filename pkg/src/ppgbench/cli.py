"""``ppgbench`` command-line entry point.

Settings resolve as: built-in defaults < ``--config`` JSON file < flags.
``PPGBENCH_OUT_DIR`` only supplies the default output directory.

Exit codes: 0 success, 2 invalid input, 3 runtime failure (including a
training run aborted on non-finite values). Failures print one JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .errors import DatasetFormatError, NonFiniteError, TrainingAborted, ValidationError
from .pipeline import COMMANDS, TRAIN_OVERRIDE_KEYS, RunConfig
from .strata import STRATIFIERS
from .tasks import TaskKind

OUT_DIR_ENV = "PPGBENCH_OUT_DIR"
DEFAULT_OUT_DIR = "ppgbench-out"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_TRAIN_FLAGS = {
    "learning_rate": float,
    "epochs": int,
    "effective_batch": int,
    "micro_batch": int,
    "weight_decay": float,
    "epsilon": float,
}


def _common(p, *, task=False, dataset=False, checkpoint=False):
    p.add_argument("--config", help="JSON file with settings; flags take precedence")
    p.add_argument("--out-dir", dest="out_dir", help=f"output directory (default ${OUT_DIR_ENV} "
                   f"or ./{DEFAULT_OUT_DIR})")
    if task:
        p.add_argument("--task", choices=[t.value for t in TaskKind])
    if dataset:
        p.add_argument("--dataset", help="dataset directory or manifest.jsonl")
    if checkpoint:
        p.add_argument("--checkpoint", help="model checkpoint written by 'train'")


def _eval_flags(p):
    p.add_argument("--split", choices=["train", "validation", "test", "all"])
    p.add_argument("--min-per-class", dest="min_per_class", type=int)
    p.add_argument("--no-plots", dest="plots", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppgbench", argument_default=argparse.SUPPRESS,
                                     description="PPG benchmark: data, training and evaluation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", default=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a JSON spec",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--spec", dest="synth_spec", help="synthetic dataset spec (JSON)")

    p = sub.add_parser("preprocess", help="band-pass clean (and optionally resample) a dataset",
                       argument_default=argparse.SUPPRESS)
    _common(p, dataset=True)
    p.add_argument("--no-clean", dest="clean", action="store_false")
    p.add_argument("--resample-hz", dest="resample_hz", type=float)

    p = sub.add_parser("train", help="train LeNet1D on folds 1-7, select on fold 8",
                       argument_default=argparse.SUPPRESS)
    _common(p, task=True, dataset=True)
    p.add_argument("--no-clean", dest="clean", action="store_false")
    p.add_argument("--seed", type=int)
    for name, typ in _TRAIN_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split",
                       argument_default=argparse.SUPPRESS)
    _common(p, task=True, dataset=True, checkpoint=True)
    p.add_argument("--stratifier", choices=sorted(STRATIFIERS))
    _eval_flags(p)

    p = sub.add_parser("strata", help="per-subgroup evaluation of a checkpoint",
                       argument_default=argparse.SUPPRESS)
    _common(p, task=True, dataset=True, checkpoint=True)
    p.add_argument("--stratifier", choices=sorted(STRATIFIERS))
    _eval_flags(p)

    p = sub.add_parser("external", help="evaluate on an external dataset labelled by liu_code",
                       argument_default=argparse.SUPPRESS)
    _common(p, task=True, checkpoint=True)
    p.add_argument("--external", help="external dataset directory or manifest.jsonl")
    p.add_argument("--resample", action="store_true",
                   help="resample to the checkpoint's training rate before inference")
    p.add_argument("--min-per-class", dest="min_per_class", type=int)
    p.add_argument("--no-plots", dest="plots", action="store_false")

    p = sub.add_parser("report", help="summarise evaluation reports as markdown",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("inputs", nargs="*", help="evaluation output directories or report files")
    return parser


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file does not exist: {path}")
        try:
            values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(values, dict):
            raise ValidationError(f"config file {path} must hold a JSON object")
    train = dict(values.pop("train", {}) or {})
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    for key in TRAIN_OVERRIDE_KEYS:
        if key in flags:
            train[key] = flags.pop(key)
    values.update(flags)
    values["train"] = train
    if values.get("out_dir") is None:
        values["out_dir"] = environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(values) - known
    if unknown:
        raise ValidationError(f"unknown settings: {sorted(unknown)}")
    return RunConfig(**values)


_SKIP = object()


def _plain(value):
    """JSON-ready copy of a result value; in-memory report objects are dropped."""
    if isinstance(value, Path):
        return str(value)
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if isinstance(value, dict):
        items = ((str(k), _plain(v)) for k, v in value.items())
        return {k: v for k, v in items if v is not _SKIP}
    if isinstance(value, (list, tuple)):
        items = [_plain(v) for v in value]
        return [v for v in items if v is not _SKIP]
    return _SKIP


def _summary(command, result) -> dict:
    out = {"command": command, "status": "ok"}
    out.update(_plain(result))
    return out


def _fail(exc, code) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, DatasetFormatError) and exc.line is not None:
        payload["line"] = exc.line
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
        result = COMMANDS[args.command](config)
    except (ValidationError, DatasetFormatError, FileNotFoundError) as exc:
        return _fail(exc, EXIT_VALIDATION)
    except (TrainingAborted, NonFiniteError, RuntimeError, OSError, FloatingPointError) as exc:
        return _fail(exc, EXIT_RUNTIME)
    if args.command == "synth":
        for rhythm, n in result["counts"].items():
            print(f"{rhythm}\t{n}")
    print(json.dumps(_summary(args.command, result), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
