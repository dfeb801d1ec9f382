import numpy as np
import pytest

from absplace.solver import PlacementProblem

# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def record(criterion, passed, detail):
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_problem(rng, M, G, rmin=20.0, cap=(5.0, 60.0), bh=(20.0, 120.0), density=0.8):
    """Random instance that is feasible when every grid point is used."""
    while True:
        C = rng.uniform(*cap, (M, G)) * (rng.uniform(size=(M, G)) < density)
        cbh = rng.uniform(*bh, G)
        if C.sum(axis=1).min() >= rmin and cbh.sum() >= M * rmin:
            from absplace.lp import feasible_allocation
            if feasible_allocation(C, cbh, rmin) is not None:
                return PlacementProblem(C, cbh, rmin)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
