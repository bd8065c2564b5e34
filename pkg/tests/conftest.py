import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ris_chest.config import SystemConfig

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


class DenseOp:
    """Dense matrix with the operator interface used by GAMP and the baselines."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=complex)
        self.shape = self.a.shape
        self.frobenius_norm_sq = float(np.sum(np.abs(self.a) ** 2))

    def forward(self, x):
        return self.a @ x

    def adjoint(self, z):
        return self.a.conj().T @ z


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny():
    """Small system: 2x2 RIS, 2x1 UE, 4 sub-bands, 3 pilots."""
    return SystemConfig(rx_h=2, rx_v=2, tx_h=2, tx_v=1, n_k=4, n_p=3, n_cl=1, n_sp=2, rho=0.5)


@pytest.fixture
def small():
    return SystemConfig(rx_h=4, rx_v=4, tx_h=2, tx_v=2, n_k=8, n_p=8, n_cl=2, n_sp=3)


_AC_LINES: list = []


@pytest.fixture
def ac_report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def emit(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        _AC_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _AC_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _AC_LINES:
            terminalreporter.write_line(line)
