import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ppgbench.taxonomy import Dataset, PpgSegment  # noqa: E402


def make_segment(i=0, fold=1, n=64, subject=None, seed=None, **kw):
    rng = np.random.default_rng(i if seed is None else seed)
    return PpgSegment(
        segment_id=f"seg-{i}",
        subject_id=subject or f"subj-{i}",
        fold=fold,
        samples=rng.standard_normal(n).astype(np.float32),
        **kw,
    )


@pytest.fixture
def segment_factory():
    return make_segment


@pytest.fixture
def tiny_dataset():
    segs = [
        make_segment(0, fold=1, rhythm="SR", hr_bpm=72.0, gender="f", weight_kg=70, height_cm=170),
        make_segment(1, fold=8, rhythm="AF", sbp_mmhg=120.0, dbp_mmhg=80.0,
                     ethnicity_raw="WHITE - RUSSIAN"),
        make_segment(2, fold=9, rhythm="1AVB", liu_code=5, age_years=61.5),
    ]
    return Dataset(tuple(segs), "synthetic")


# --- acceptance summary ------------------------------------------------------
# Tests marked ``criterion(n, title)`` get one PASS/FAIL line in the terminal
# summary; details come from ``record_property("detail", ...)``.

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number:>2} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
