from pathlib import Path

import numpy as np
import pytest

from trimest.trial import Direction, from_arrays

SYNTHETIC = Path(__file__).resolve().parents[1] / "src" / "trimest" / "datasets" / "synthetic_pain_trial.csv"


def make(arm1, arm0, direction=Direction.WORSE_IS_LOW, reasons1=None, reasons0=None):
    """Dataset from two lists; None entries are missing (coded mnar unless reasons given)."""
    y = [np.nan if v is None else v for v in list(arm1) + list(arm0)]
    arm = [1] * len(arm1) + [0] * len(arm0)
    reasons = None
    if reasons1 is not None or reasons0 is not None:
        reasons = list(reasons1 or [0 if v is not None else 2 for v in arm1]) + list(
            reasons0 or [0 if v is not None else 2 for v in arm0]
        )
    return from_arrays(y, arm, reasons, direction)


@pytest.fixture
def synthetic_path():
    return SYNTHETIC


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
