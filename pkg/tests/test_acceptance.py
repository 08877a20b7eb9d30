"""The ten acceptance criteria at full size and their stated tolerances.

Each test prints one ``[PASS]``/``[FAIL]`` line (visible with ``pytest -s``
or in the captured output of a failure).  Ensembles are shared between
criteria through one suite context, so run the module as a whole.
"""
import pytest

from stochquant.acceptance import CRITERIA, DEFAULT_SEED, SuiteContext


@pytest.fixture(scope="module")
def ctx():
    return SuiteContext(seed=DEFAULT_SEED, scale=1.0)


@pytest.mark.acceptance
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{c.number:02d}" for c in CRITERIA])
def test_criterion(criterion, ctx, capsys):
    result = criterion(ctx)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.within_budget, f"runtime {result.runtime:.1f}s exceeds {result.budget:.0f}s"
    assert result.passed, result.to_dict()
