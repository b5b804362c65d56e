import math

import pytest

from cmdpcut.checks import SUITES, CheckResult, format_table, run_checks, run_suite
from cmdpcut.errors import InvalidParameterError


@pytest.mark.parametrize("name", ["value-visitation-identity", "entropy-bounds", "leverage-trace",
                                  "npg-linear-convergence", "softmax-lipschitz"])
def test_fast_suites_pass(name):
    result = run_suite(name, seed=3)
    assert result.passed, result
    assert result.cases > 0


def test_suites_are_reproducible():
    assert run_suite("softmax-lipschitz", seed=1) == run_suite("softmax-lipschitz", seed=1)


def test_unknown_suite():
    with pytest.raises(InvalidParameterError, match="no-such-suite"):
        run_checks(["entropy-bounds", "no-such-suite"])


def test_table_layout():
    table = format_table([CheckResult("dual-range", 12, -0.5, True),
                          CheckResult("softmax-lipschitz", 1000, 2.5e-3, False)])
    header, first, second = table.splitlines()
    assert header.split() == ["suite", "cases", "worst", "excess", "result"]
    assert first.split() == ["dual-range", "12", "-5.0000e-01", "pass"]
    assert second.endswith("FAIL")
    assert len({len(line.rstrip("FAILpas")) for line in (first, second)}) == 1


def test_registry_covers_the_documented_suites():
    assert {"danskin-gradient", "optimality-gap-bound", "smoothness-inequalities",
            "regularized-dual-inequalities", "npg-linear-convergence", "dual-multiplier-bound"} <= set(SUITES)


@pytest.mark.slow
def test_every_suite_passes():
    results = run_checks(seed=0)
    assert len(results) == len(SUITES)
    failing = [result for result in results if not result.passed]
    assert not failing, format_table(failing)
    assert all(math.isfinite(result.worst_excess) for result in results)
