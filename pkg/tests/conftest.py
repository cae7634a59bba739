import numpy as np
import pytest

from osmoflow.profile import QuantileProfile
from osmoflow.state import RadialState

ACCEPTANCE = {}


def record_criterion(k: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[k] = (ok, detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")


def random_state(rng, M: int, n: int, r_range=(0.3, 2.0)) -> RadialState:
    """Random admissible state: 0 < q_1 < ... < q_M < r."""
    r = float(rng.uniform(*r_range))
    gaps = rng.uniform(0.2, 1.0, M + 1)
    q = r * np.cumsum(gaps)[:-1] / gaps.sum()
    return RadialState(r, QuantileProfile(q, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
