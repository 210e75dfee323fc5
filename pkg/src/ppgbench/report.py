"""Report serialisation (JSON, CSV) and dependency-free SVG plots."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .metrics import REPORT_VERSION, EvalReport, bland_altman, roc_curve
from . import strata as _strata
from . import tasks as _tasks

CLASSIFICATION_COLUMNS = (
    "label", "n_pos", "n_neg", "auroc", "sens_at_spec80", "spec_at_sens80",
    "threshold_spec80", "threshold_sens80", "sufficient",
)
REGRESSION_COLUMNS = ("model", "label", "n", "mae", "bias", "loa_low", "loa_high")


def provenance(run_config: Optional[dict] = None) -> dict:
    return {
        "tool": "ppgbench",
        "tool_version": __version__,
        "report_version": REPORT_VERSION,
        "fixtures": {
            "rhythm_mapping": _tasks.FIXTURE_VERSION,
            "liu_mapping": _tasks.FIXTURE_VERSION,
            "ethnicity_mapping": _strata.FIXTURE_VERSION,
        },
        "run_config": run_config or {},
    }


def _clean_json(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean_json(obj.item())
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, no NaN."""
    return json.dumps(_clean_json(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def _cell(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_csv(report: EvalReport, baseline: Optional[EvalReport] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"# ppgbench report v{REPORT_VERSION}", report.task])
    if report.per_label:
        w.writerow(CLASSIFICATION_COLUMNS)
        for m in report.per_label:
            w.writerow([_cell(getattr(m, c)) for c in CLASSIFICATION_COLUMNS])
        w.writerow(["macro", "", "", _cell(report.macro_auroc)])
    if report.regression:
        w.writerow(REGRESSION_COLUMNS)
        rows = [("model", report)] + ([("baseline", baseline)] if baseline else [])
        for name, rep in rows:
            for r in rep.regression:
                w.writerow([name] + [_cell(getattr(r, c)) for c in REGRESSION_COLUMNS[1:]])
    return buf.getvalue()


# --- SVG -------------------------------------------------------------------

_W, _H, _M = 420, 360, 50


def _svg_doc(title, body):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">\n'
        f'<title>{escape(title)}</title>\n'
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>\n'
        f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>\n'
        + body
        + "</svg>\n"
    )


def _scale(v, lo, hi, out_lo, out_hi):
    if hi == lo:
        return (out_lo + out_hi) / 2
    return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)


def _axes(xlabel, ylabel, xr, yr):
    x0, x1, y0, y1 = _M, _W - 20, _H - _M, 35
    parts = [
        f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{_H - 12}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
        f'<text x="14" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})">{escape(ylabel)}</text>',
        f'<text x="{x0}" y="{y0 + 14}" font-size="9" text-anchor="middle">{xr[0]:.3g}</text>',
        f'<text x="{x1}" y="{y0 + 14}" font-size="9" text-anchor="middle">{xr[1]:.3g}</text>',
        f'<text x="{x0 - 4}" y="{y0}" font-size="9" text-anchor="end">{yr[0]:.3g}</text>',
        f'<text x="{x0 - 4}" y="{y1 + 4}" font-size="9" text-anchor="end">{yr[1]:.3g}</text>',
    ]
    return "\n".join(parts) + "\n", (x0, x1, y0, y1)


def roc_svg(scores, labels, title) -> str:
    fpr, tpr, _ = roc_curve(scores, labels)
    axes, (x0, x1, y0, y1) = _axes("1 - specificity", "sensitivity", (0, 1), (0, 1))
    pts = " ".join(
        f"{_scale(f, 0, 1, x0, x1):.2f},{_scale(t, 0, 1, y0, y1):.2f}" for f, t in zip(fpr, tpr)
    )
    body = axes + (
        f'<line class="chance" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="gray" '
        f'stroke-dasharray="4 3"/>\n'
        f'<polyline class="roc" points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>\n'
    )
    return _svg_doc(title, body)


def bland_altman_svg(pred, ref, title, unit="") -> str:
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    ba = bland_altman(pred, ref)
    mean = (pred + ref) / 2
    diff = pred - ref
    xr = (float(mean.min()), float(mean.max()))
    lo = min(float(diff.min()), ba.loa_low)
    hi = max(float(diff.max()), ba.loa_high)
    pad = 0.05 * (hi - lo or 1.0)
    yr = (lo - pad, hi + pad)
    suffix = f" [{unit}]" if unit else ""
    axes, (x0, x1, y0, y1) = _axes(f"mean of prediction and reference{suffix}",
                                   f"prediction - reference{suffix}", xr, yr)
    dots = "\n".join(
        f'<circle cx="{_scale(m, *xr, x0, x1):.2f}" cy="{_scale(d, *yr, y0, y1):.2f}" r="1.6" '
        f'fill="#1f77b4" fill-opacity="0.5"/>'
        for m, d in zip(mean, diff)
    )
    lines = []
    for cls, val, color in (("bias", ba.bias, "black"), ("loa-low", ba.loa_low, "#d62728"),
                            ("loa-high", ba.loa_high, "#d62728")):
        y = _scale(val, *yr, y0, y1)
        lines.append(
            f'<line class="{cls}" x1="{x0}" y1="{y:.2f}" x2="{x1}" y2="{y:.2f}" stroke="{color}" '
            f'stroke-dasharray="5 3"/>\n'
            f'<text x="{x1}" y="{y - 3:.2f}" font-size="9" text-anchor="end">{cls} {val:.3g}</text>'
        )
    return _svg_doc(title, axes + dots + "\n" + "\n".join(lines) + "\n")


def _safe(name):
    return "".join(c if c.isalnum() else "_" for c in name)


def write_eval_outputs(out_dir, report: EvalReport, scores, targets, task, run_config=None,
                       baseline: Optional[EvalReport] = None, stem="eval", plots=True) -> dict:
    """Write ``<stem>.json``, ``<stem>.csv`` and per-label SVG plots; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    task = _tasks.get_task(task)
    doc = report.to_dict()
    doc["provenance"] = provenance(run_config)
    if baseline is not None:
        doc["baseline"] = {"name": "median_baseline",
                           "regression": baseline.to_dict()["regression"]}
    written = {"json": write_json(out_dir / f"{stem}.json", doc)}
    csv_path = out_dir / f"{stem}.csv"
    csv_path.write_text(report_csv(report, baseline))
    written["csv"] = csv_path
    if not plots:
        return written
    scores = np.asarray(scores, dtype=float).reshape(len(scores), -1)
    targets = np.asarray(targets, dtype=float).reshape(len(targets), -1)
    svgs = []
    if task.is_classification:
        for j, m in enumerate(report.per_label):
            if m.auroc is None:
                continue
            path = out_dir / f"{stem}_roc_{_safe(m.label)}.svg"
            path.write_text(roc_svg(scores[:, j], targets[:, j],
                                    f"{task} {m.label}: AUROC {m.auroc:.3f}"))
            svgs.append(path)
    else:
        units = {"HR": "bpm", "RR": "breaths/min", "SBP": "mmHg", "DBP": "mmHg"}
        for j, r in enumerate(report.regression):
            if r.n < 2:
                continue
            path = out_dir / f"{stem}_bland_altman_{_safe(r.label)}.svg"
            path.write_text(bland_altman_svg(scores[:, j], targets[:, j],
                                             f"{r.label}: bias {r.bias:.2f}",
                                             units.get(r.label, "")))
            svgs.append(path)
    written["svg"] = svgs
    return written


def strata_csv(stratum_reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stratifier", "category", "n_samples", "label", "n_pos", "n_neg", "auroc",
                "sens_at_spec80", "spec_at_sens80", "mae", "bias"])
    for s in stratum_reports:
        if s.report is None:
            w.writerow([s.stratifier, s.category, s.n_samples] + ["-"] * 8)
            continue
        for m in s.report.per_label:
            w.writerow([s.stratifier, s.category, s.n_samples, m.label, m.n_pos, m.n_neg,
                        _cell(m.auroc), _cell(m.sens_at_spec80), _cell(m.spec_at_sens80),
                        "-", "-"])
        for r in s.report.regression:
            w.writerow([s.stratifier, s.category, s.n_samples, r.label, "-", "-", "-", "-", "-",
                        _cell(r.mae), _cell(r.bias)])
    return buf.getvalue()


def summary_markdown(reports: dict) -> str:
    """Markdown table over ``{name: report json dict}``."""
    lines = ["| run | task | label | AUROC | sens@spec0.8 | MAE | bias | LoA |",
             "|---|---|---|---|---|---|---|---|"]

    def f(v):
        return "-" if v is None else f"{v:.3f}"

    for name, doc in sorted(reports.items()):
        for m in doc.get("per_label", []):
            lines.append(f"| {name} | {doc['task']} | {m['label']} | {f(m['auroc'])} | "
                         f"{f(m['sens_at_spec80'])} | | | |")
        if doc.get("per_label"):
            lines.append(f"| {name} | {doc['task']} | macro | {f(doc.get('macro_auroc'))} | | | | |")
        rows = [("", doc.get("regression", []))]
        if doc.get("baseline"):
            rows.append((" (baseline)", doc["baseline"]["regression"]))
        for tag, regs in rows:
            for r in regs:
                loa = "-" if r["loa_low"] is None else f"[{r['loa_low']:.2f}, {r['loa_high']:.2f}]"
                lines.append(f"| {name}{tag} | {doc['task']} | {r['label']} | | | {f(r['mae'])} | "
                             f"{f(r['bias'])} | {loa} |")
    return "\n".join(lines) + "\n"
