import numpy as np
import pytest

from drip.data import ingest_csv, synth_credit_like, write_csv
from drip.numerics import RandomSource

# One line per acceptance criterion, echoed at the end of the pytest run so
# the pass/fail verdicts stay visible even with output capture on.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture()
def rng():
    return RandomSource(0)


@pytest.fixture(scope="session")
def credit_csv(tmp_path_factory):
    """The pinned credit-like table used across evaluation tests."""
    path = tmp_path_factory.mktemp("credit") / "credit.csv"
    names, kinds, rows = synth_credit_like(RandomSource(11), 1000)
    write_csv(path, names, rows)
    return path, list(zip(names, kinds))


@pytest.fixture(scope="session")
def credit_case2(credit_csv):
    """Private = credit outcome, public = age (the 'protect the score' framing)."""
    path, schema = credit_csv
    return ingest_csv(path, schema, private="credit_risk", public="age", seed=0)


@pytest.fixture(scope="session")
def credit_case1(credit_csv):
    """Private = age, public = credit outcome (the 'protect age' framing)."""
    path, schema = credit_csv
    return ingest_csv(path, schema, private="age", public="credit_risk", seed=0)


def fd_check(f, x, grad, rel_tol=1e-4, eps=1e-5, rng=None, trials=3):
    """Central finite differences along random directions vs ⟨grad, d⟩."""
    gen = np.random.default_rng(0) if rng is None else rng.gen
    x = np.asarray(x, dtype=float)
    worst = 0.0
    for _ in range(trials):
        d = gen.standard_normal(x.shape)
        d /= max(np.linalg.norm(d), 1e-12)
        num = (f(x + eps * d) - f(x - eps * d)) / (2 * eps)
        ana = float(np.sum(np.asarray(grad) * d))
        rel = abs(num - ana) / max(1.0, abs(ana))
        worst = max(worst, rel)
    assert worst <= rel_tol, f"finite-difference mismatch: {worst:.3e} > {rel_tol}"
    return worst
