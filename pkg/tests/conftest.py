import numpy as np
import pytest

from procaudit import synthgen

ACCEPTANCE_RESULTS = []


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_ledger():
    cfg = synthgen.GeneratorConfig(n=600, label_noise=0.0, seed=7)
    return cfg, synthgen.generate(cfg)
