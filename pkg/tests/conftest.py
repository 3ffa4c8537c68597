import math

import numpy as np
import pytest

from stochnse.basis import COSINE, TorusSpec, build_basis, eval_eigenfunction

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def analytic_field(basis, coeffs, n):
    """Velocity and its gradient from closed-form cos/sin sums (no FFTs)."""
    L = basis.torus.L
    kappa = basis.torus.wavenumber
    x = -L / 2 + L * np.arange(n) / n
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    c = math.sqrt(2.0) / L
    U = np.zeros((2, n, n))
    dU = np.zeros((2, 2, n, n))  # dU[i, j] = d_j U_i
    for k, a in enumerate(coeffs):
        if a == 0:
            continue
        n1, n2 = basis.wavevectors[k]
        phase = kappa * (n1 * x1 + n2 * x2)
        if basis.parity[k] == COSINE:
            p, dp = np.cos(phase), -np.sin(phase)
        else:
            p, dp = np.sin(phase), np.cos(phase)
        e = basis.orientation[k][:, None, None]
        U += a * c * e * p
        for j, nj in enumerate((n1, n2)):
            dU[:, j] += a * c * e * dp * kappa * nj
    return U, dU


def brute_force_nonlinear(basis, coeffs, n=32):
    """``(U.grad U, Phi_k)`` by rectangle-rule quadrature of the convective form."""
    U, dU = analytic_field(basis, coeffs, n)
    conv = np.einsum("jxy,ijxy->ixy", U, dU)
    h = basis.torus.L / n
    return np.array([(conv * eval_eigenfunction(basis, k, n)).sum() * h * h
                     for k in range(len(basis))])


@pytest.fixture(scope="session")
def torus():
    return TorusSpec()


@pytest.fixture(scope="session")
def small_basis(torus):
    return build_basis(torus, 24)


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)
