import numpy as np
import pytest

from tokendyn import _core


@pytest.fixture(params=_core.available_backends())
def backend(request):
    return _core.get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the lines are printed in the summary."""

    def report(label, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return report


def _criterion_key(line):
    label = line.split()[1].rstrip(":")
    digits = "".join(ch for ch in label if ch.isdigit())
    return int(digits), label[len(digits):]


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=_criterion_key):
            terminalreporter.write_line(line)
