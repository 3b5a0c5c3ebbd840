"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line; the lines are repeated in
the terminal summary. Run this file directly to get just the thirteen lines.
Tolerances and sample sizes live in :mod:`xsense.acceptance`.
"""
import sys

import pytest

from conftest import ACCEPTANCE_LINES
from xsense.acceptance import CRITERIA, run_criterion
from xsense.rng import DEFAULT_SEED

pytestmark = pytest.mark.acceptance


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"criterion{n:02d}")
def test_criterion(number):
    check = run_criterion(number, seed=DEFAULT_SEED)
    line = check.line()
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    assert check.passed, check.details
    assert check.within_budget, f"took {check.seconds:.0f}s, budget {check.budget}s"


if __name__ == "__main__":
    failed = 0
    for number in sorted(CRITERIA):
        check = run_criterion(number, seed=DEFAULT_SEED)
        print(check.line(), flush=True)
        failed += not check.ok
    sys.exit(1 if failed else 0)
