import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from timecapsule.config import RunConfig  # noqa: E402
from timecapsule.data import SeriesFrame, synthetic_sinusoids  # noqa: E402

SMALL = {
    "model.v": 3, "model.t_x": 32, "model.t_y": 8, "model.t_c": 4, "model.l": 2,
    "model.v_c": 2, "model.d": 8, "model.heads": 2, "model.dtype": "float64",
    "train.batch_size": 16, "train.epochs": 2, "train.max_batches_per_epoch": 3,
    "data.ratios": [6, 2, 2], "data.season": 48,
}


def small_config(**overrides):
    flat = dict(SMALL)
    flat.update({k.replace("__", "."): v for k, v in overrides.items()})
    return RunConfig().with_overrides(flat)


def synthetic_frame(n=400, seed=0):
    noisy, _ = synthetic_sinusoids(n, 0.1, seed)
    return SeriesFrame(noisy, ["s0", "s1", "s2"])


@pytest.fixture
def frame():
    return synthetic_frame()


# acceptance reporting: one PASS/FAIL/SKIP line per criterion in the terminal summary
_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    import re

    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m or not (report.when == "call" or report.skipped):
        return
    detail = dict(report.user_properties).get("detail", "")
    if report.skipped:
        outcome = "SKIP"
        if isinstance(report.longrepr, tuple):
            detail = report.longrepr[2].removeprefix("Skipped: ")
    else:
        outcome = "PASS" if report.passed else "FAIL"
    _ACCEPTANCE[int(m.group(1))] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        outcome, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {outcome}  {detail}")
