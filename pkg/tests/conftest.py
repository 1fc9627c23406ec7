import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pknn import LabeledDataset  # noqa: E402

# criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}

FIXTURE4_POINTS = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.5), (3.0, 3.0)])
FIXTURE4_LABELS = np.array([0, 0, 1, 1])


@pytest.fixture
def fixture4():
    """Four points, classes A=0 and B=1."""
    return LabeledDataset(FIXTURE4_POINTS, FIXTURE4_LABELS, 2, ("A", "B"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda s: (int(s.split()[0].rstrip("abcdefgh")), s)):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
