import numpy as np
import pytest
from conftest import small_problem
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from fracsteer.evolution import ControlSignal, mild_solve
from fracsteer.exceptions import ProjectionError, ValidationError
from fracsteer.optimal_control import (
    AffineModel,
    CostWeights,
    cost,
    project_feasible,
    solve_min_energy,
)
from fracsteer.steering import assemble_steering_matrix, min_norm_inverse, target_defect

X0 = (1.0, 0.5, 0.2, 0.1)
XD = (0.0, 0.2, 0.0, 0.1)


def _neutral(M=16, c=0.02):
    rng = np.random.default_rng(4)
    F = c * rng.standard_normal((4, 4)) / np.arange(1, 5)[:, None]
    return small_problem(P=4, N=4, M=M, F=F, x0=X0, xd=XD)


def test_cost_weights_validate():
    with pytest.raises(ValidationError):
        CostWeights(-1.0, 1.0)
    with pytest.raises(ValidationError):
        CostWeights(0.0, 0.0)
    with pytest.raises(ValidationError):
        CostWeights(np.inf, 1.0)


def test_cost_pieces(make_problem):
    prob = make_problem(M=8)
    u = ControlSignal(np.ones((8, 2)), prob.grid)
    traj = mild_solve(prob, u)
    # energy of a unit control on both channels over [0, 1]
    assert cost(traj, u, CostWeights(0.0, 1.0), prob.xd) == pytest.approx(1.0)
    dev = np.sum((traj.states - prob.xd.coeffs) ** 2, axis=1)
    track = 0.5 * trapezoid(dev, prob.grid.nodes)
    assert cost(traj, u, CostWeights(1.0, 1.0), prob.xd) == pytest.approx(1.0 + track, rel=1e-13)
    with pytest.raises(ValidationError):
        cost(mild_solve(make_problem(M=4)), u, CostWeights(), prob.xd)


def test_affine_model_reproduces_the_solver():
    prob = _neutral()
    model = AffineModel(prob)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(16 * 4)
    X = mild_solve(prob, ControlSignal.from_vector(v, prob.grid, 4)).states
    np.testing.assert_allclose(model.states(v), X, atol=1e-12)
    np.testing.assert_allclose(model.final(v), X[-1], atol=1e-12)


def test_linear_min_energy_is_the_pseudo_inverse(make_problem):
    prob = make_problem(nu=0.5, M=32)
    u, J, rep = solve_min_energy(prob)
    ref, _ = min_norm_inverse(assemble_steering_matrix(prob), target_defect(prob, mild_solve(prob)))
    np.testing.assert_allclose(u.values, ref.values, rtol=1e-8, atol=1e-12 * np.abs(ref.values).max())
    assert J == pytest.approx(0.5 * ref.l2_norm() ** 2, rel=1e-8)
    assert rep["kkt_residual"] <= 1e-8 * (1 + J)
    assert rep["endpoint_error"] <= 1e-10


@given(st.integers(0, 2**16))
def test_tracking_optimum_beats_feasible_alternatives(seed):
    prob = _neutral()
    w = CostWeights(1.0, 1.0)
    u, J, rep = solve_min_energy(prob, w)
    assert rep["endpoint_error"] <= 1e-8
    rng = np.random.default_rng(seed)
    trial = project_feasible(prob, ControlSignal(rng.standard_normal((16, 4)), prob.grid))
    assert J <= cost(mild_solve(prob, trial), trial, w, prob.xd) * (1 + 1e-12)


def test_penalty_path_matches_null_space():
    prob = _neutral()
    for w in (CostWeights(0.0, 1.0), CostWeights(2.0, 0.5)):
        _, J_ns, _ = solve_min_energy(prob, w)
        u, J_pen, rep = solve_min_energy(prob, w, method="penalty")
        assert J_pen == pytest.approx(J_ns, rel=1e-4)
        assert [s["rho"] for s in rep["stages"]] == [f * w.w_energy for f in (1e2, 1e4, 1e6)]
        assert rep["endpoint_error"] <= 1e-6 * prob.xd.norm()


def test_finite_difference_gradients():
    prob = small_problem(nu=0.5, P=2, N=2, M=4, x0=(1.0, 0.5), xd=(0.0, 0.2))
    w = CostWeights(1.0, 1.0)
    _, J_ns, _ = solve_min_energy(prob, w)
    _, J_fd, rep = solve_min_energy(prob, w, method="penalty", gradient="fd", max_iter=500)
    assert J_fd == pytest.approx(J_ns, rel=1e-4)


def test_projection_reaches_the_target():
    prob = _neutral()
    rng = np.random.default_rng(1)
    u = project_feasible(prob, ControlSignal(rng.standard_normal((16, 4)), prob.grid))
    assert np.linalg.norm(mild_solve(prob, u).states[-1] - prob.xd.coeffs) <= 1e-6 * prob.xd.norm()


def test_projection_fails_on_uncontrolled_mode(make_problem):
    prob = make_problem(M=8, xd=(0.0, 0.2, 1.0))
    with pytest.raises(ProjectionError) as info:
        project_feasible(prob, ControlSignal.zeros(prob.grid, 2))
    assert info.value.defect > 0.1


def test_existence_warning():
    F = np.zeros((4, 4))
    F[3, 3] = 0.3  # H |A^-1/2| = 4 pi 0.3 / pi = 1.2
    prob = small_problem(P=4, N=4, M=8, F=F, x0=X0, xd=XD)
    with pytest.warns(RuntimeWarning, match="existence"):
        solve_min_energy(prob)


@pytest.mark.parametrize("kw", [{"method": "newton"}, {"gradient": "adjoint"}])
def test_solver_arguments(kw, make_problem):
    with pytest.raises(ValidationError):
        solve_min_energy(make_problem(M=8), **kw)
