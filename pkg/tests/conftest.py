import numpy as np
import pytest

from elephant_cl import kernels
from elephant_cl.activations import ActivationSpec
from elephant_cl.models import InitSpec, build_model

_acceptance_lines = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(criterion, passed, detail)``."""

    def _report(criterion, passed, detail):
        _acceptance_lines.append((criterion, bool(passed), detail))
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(_acceptance_lines, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    monkeypatch.setattr(kernels, "BACKEND", request.param)
    return request.param


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


def small_model(kind="elephant", n=3, m=7, o=1, a=0.7, d=4.0, sigma_bias=0.5, seed=0, head="linear"):
    return build_model(n, m, o, ActivationSpec(kind, a, d), InitSpec(sigma_bias, seed), head=head)
