import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from fracsteer.evolution import NeutralMap, SteeringProblem  # noqa: E402
from fracsteer.spectral import GridSpec, SpectralState, make_dirichlet_laplacian  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ACCEPTANCE = {}


def small_problem(nu=0.5, P=4, M=32, N=2, F=None, x0=(1.0, 0.5), xd=(0.0, 0.2), T=1.0,
                  quadrature="exact", B=None):
    op = make_dirichlet_laplacian(P)
    if B is None:
        B = np.zeros((P, N))
        B[np.arange(N), np.arange(N)] = op.eigenvalues[:N]
    h = NeutralMap.zero(P) if F is None else NeutralMap.from_kernel(F, op)
    return SteeringProblem(
        nu, op, B, h, SpectralState.from_list(x0, P), SpectralState.from_list(xd, P),
        GridSpec(T, M), quadrature=quadrature,
    )


@pytest.fixture
def make_problem():
    return small_problem


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
