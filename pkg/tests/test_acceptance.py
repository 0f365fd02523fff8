"""Acceptance gate: every headline claim of the package, one test per
criterion, each printing a single summary line.  Run with `pytest -s
tests/test_acceptance.py` to see the lines as they complete.
"""

import pytest

from bohmlab.validation import CRITERIA, run_criterion


@pytest.mark.parametrize("cid", [name for name, _, _ in CRITERIA])
def test_acceptance_criterion(cid):
    result = run_criterion(cid)
    status = "PASS" if result["passed"] else "FAIL"
    print(f"[{status}] {cid}: measured={result['measured']:.6g} "
          f"target={result['target']:.6g} tol={result['tolerance']:.6g} "
          f"({result['seconds']:.2f}s)")
    assert result["passed"], (
        f"{cid}: measured {result['measured']} vs target {result['target']} "
        f"+- {result['tolerance']} (detail: {result.get('detail')})")
