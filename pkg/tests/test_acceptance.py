"""Exit criteria battery: every criterion at its stated tolerance and runtime budget."""
import pytest

from umforest.experiments import CRITERIA, DEFAULT_SEED

# filled as criteria run; conftest prints it in the terminal summary
RESULTS = []


@pytest.mark.acceptance
@pytest.mark.parametrize("name", sorted(CRITERIA))
def test_criterion(name):
    rep = CRITERIA[name](seed=DEFAULT_SEED)
    ok = rep.passed and rep.within_budget
    line = f"{'PASS' if ok else 'FAIL'} {name}: {rep.summary_line()}"
    RESULTS.append(line)
    print(line)
    failed = [f"{r.statistic}: {r.estimate} vs {r.oracle} (z={r.z})" for r in rep.rows if not r.passed]
    assert rep.passed, "\n".join(failed)
    assert rep.within_budget, f"{rep.elapsed_s:.1f}s exceeds budget {rep.budget_s:g}s"
