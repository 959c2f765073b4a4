import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stax.core import EvaluatedPolicy, Genome  # noqa: E402


def make_policy(pid, bd=(0.0, 0.0), reward=0.0, params=None, learned=None, novelty=float("nan"),
                surprise=0.0, dim=4):
    params = np.zeros(dim) if params is None else np.asarray(params, dtype=np.float64)
    return EvaluatedPolicy(Genome(params, pid), None, np.asarray(bd, dtype=np.float64), reward=reward,
                           reward_area=0 if reward > 0 else -1,
                           learned_bd=None if learned is None else np.asarray(learned, dtype=np.float64),
                           novelty=novelty, surprise=surprise)


@pytest.fixture
def policy_factory():
    return make_policy


# PASS/FAIL lines collected by the acceptance suite, printed at the end of the session.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
