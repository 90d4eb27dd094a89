import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hyperext.dyadic import CellSet  # noqa: E402

# acceptance lines collected during the run, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_set(rng, N, p=0.3):
    mask = rng.random((1 << N, 1 << N)) < p
    if not mask.any():
        mask[0, 0] = True
    return CellSet.from_mask(mask, N)
