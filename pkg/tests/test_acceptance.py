"""The twelve acceptance criteria at full scale, one test and one printed line each."""
import pytest

from branchsim import acceptance

SEED = 20240611

# wall-clock budgets in seconds
BUDGET = {1: 1, 2: 5, 3: 30, 4: 300, 5: 300, 6: 600, 7: 120, 8: 60, 9: 30, 10: 300, 11: 1200, 12: 1}


@pytest.mark.parametrize("number", range(1, 13))
def test_acceptance_criterion(number, capsys):
    fn = acceptance.CHECKS[number - 1]
    res = acceptance.run_check(fn, seed=SEED, scale=1.0)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.status == "PASS", res.detail
    assert res.elapsed < BUDGET[number]


if __name__ == "__main__":
    acceptance.run_acceptance(seed=SEED, echo=print)
