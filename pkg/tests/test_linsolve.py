import math

import numpy as np
import pytest

from fracdiff.fracops import TimeGrid
from fracdiff.linsolve import (
    LinearProblem,
    ModalPropagator,
    apply_S,
    convolve_K,
    solve_linear,
    solve_linear_l1,
)
from fracdiff.mlf import ml_neg_vec
from fracdiff.spectral import EllipticOperator, eigendecompose, project, synthesize


def neumann_basis(n_modes=8, n_grid=401, c0=0.0):
    return eigendecompose(
        EllipticOperator(math.pi, p=1.0, c=0.0, sigma=(0.0, 0.0), c0=c0),
        n_modes,
        n_grid,
    )


def test_propagator_validation():
    b = neumann_basis(4, 101)
    with pytest.raises(ValueError):
        ModalPropagator(b, 1.5)
    with pytest.raises(ValueError):
        ModalPropagator(b, 0.5, shift=-1.0)  # lambda_1 = 0 goes negative


@pytest.mark.parametrize("alpha", [0.3, 0.6, 0.9])
def test_weight_sum_invariant(alpha):
    b = eigendecompose(
        EllipticOperator(1.0, sigma=(1.0, 1.0)), 12, 201
    )  # Robin: all lambdas > 0
    prop = ModalPropagator(b, alpha)
    assert prop.weight_sum_check(TimeGrid.uniform(2.0, 128)) < 1e-10
    # lambda_1 = 0 path (Neumann)
    prop0 = ModalPropagator(neumann_basis(6, 101), alpha)
    assert prop0.weight_sum_check(TimeGrid.uniform(1.0, 64)) < 1e-10


def test_apply_s_identity_and_decay():
    b = neumann_basis(6, 201, c0=1.0)
    prop = ModalPropagator(b, 0.5)
    c = np.arange(1.0, 7.0)
    np.testing.assert_allclose(apply_S(prop, 0.0, c), c)
    out = apply_S(prop, 2.0, c)
    want = ml_neg_vec(0.5, b.lambdas * 2.0**0.5) * c
    np.testing.assert_allclose(out, want, rtol=1e-12)
    with pytest.raises(ValueError):
        apply_S(prop, -1.0, c)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_homogeneous_solution_exact(alpha):
    """Q = 0, F = 0: the march reproduces the modal Mittag-Leffler decay."""
    b = neumann_basis(8, 201)
    a = synthesize(b, np.array([1.0, -0.5, 0.25, 0.0, 0.1, 0.0, 0.0, -0.05]))
    prob = LinearProblem(b, alpha, a)
    grid = TimeGrid.uniform(1.0, 128)
    traj = solve_linear(prob, grid)
    a_modal = project(b, a)
    want = ml_neg_vec(alpha, np.outer(grid.nodes**alpha, b.lambdas)) * a_modal
    assert np.max(np.abs(traj.modal - want)) < 1e-10


def test_reaction_shift_closed_form_exact():
    """Constant reaction q absorbed by shift = -q makes the march exact:
    u(t) = E_{alpha,1}(-(lambda_1 - q) t^alpha) phi_1."""
    alpha, q = 0.6, -0.7
    b = neumann_basis(4, 201)
    a = b.modes[:, 1].copy()  # phi_2, lambda approx 1
    prob = LinearProblem(b, alpha, a, reaction=q, shift=-q)
    grid = TimeGrid.uniform(2.0, 64)
    traj = solve_linear(prob, grid)
    want = ml_neg_vec(alpha, (b.lambdas[1] - q) * grid.nodes**alpha)
    np.testing.assert_allclose(traj.modal[:, 1], want, atol=1e-12)
    other = np.delete(traj.modal, 1, axis=1)
    assert np.max(np.abs(other)) < 1e-12


def test_reaction_without_shift_converges():
    """Same problem, shift = 0: left-endpoint reconstruction converges."""
    alpha, q = 0.6, -0.7
    b = neumann_basis(4, 201)
    a = b.modes[:, 1].copy()
    grid = TimeGrid.uniform(2.0, 256)

    def err(N):
        g = TimeGrid.uniform(2.0, N)
        prob = LinearProblem(b, alpha, a, reaction=q)
        traj = solve_linear(prob, g)
        want = ml_neg_vec(alpha, (b.lambdas[1] - q) * g.nodes**alpha)
        return np.max(np.abs(traj.modal[:, 1] - want))

    e1, e2 = err(64), err(128)
    assert e2 < e1 / 1.3
    assert err(256) < 5e-3


def test_flat_mode_forcing_power_law():
    """lambda = 0, F = 1: u = t^alpha / Gamma(1+alpha), exact by moments."""
    alpha = 0.4
    b = neumann_basis(4, 201)
    prob = LinearProblem(b, alpha, np.zeros_like(b.grid), forcing=1.0)
    grid = TimeGrid.uniform(1.5, 64)
    traj = solve_linear(prob, grid)
    flat = traj.modal[:, 0] * b.modes[0, 0]  # field value (mode is constant)
    want = grid.nodes**alpha / math.gamma(1.0 + alpha)
    np.testing.assert_allclose(flat, want, atol=1e-12)


def test_duhamel_consistency():
    """Q = 0: solve_linear equals apply_S(a) + convolve_K(F) node by node."""
    alpha = 0.5
    b = neumann_basis(6, 201)
    a = synthesize(b, np.array([0.3, -0.2, 0.5, 0.0, 0.1, 0.0]))

    def F(x, t):
        return (1.0 + t) * np.cos(x) + 0.5 * t * t

    prob = LinearProblem(b, alpha, a, forcing=F)
    grid = TimeGrid.uniform(1.0, 96)
    traj = solve_linear(prob, grid)
    prop = prob.propagator
    G = np.array([project(b, F(b.grid, t) * np.ones_like(b.grid)) for t in grid.nodes])
    conv = convolve_K(prop, grid, G)
    a_modal = project(b, a)
    duhamel = np.array([apply_S(prop, t, a_modal) for t in grid.nodes]) + conv
    assert np.max(np.abs(traj.modal - duhamel)) < 1e-10


def test_manufactured_solution_refinement():
    """u* = (1 + t^alpha) phi_1 with its exact forcing: first-order decay."""
    alpha = 0.8
    b = eigendecompose(EllipticOperator(math.pi, sigma=(1.0, 1.0)), 4, 401)
    lam1 = b.lambdas[0]
    phi1 = b.modes[:, 0]
    ga = math.gamma(1.0 + alpha)

    def F(x, t):
        return (ga + lam1 * (1.0 + t**alpha)) * np.interp(x, b.grid, phi1)

    errs = []
    for N in (64, 128, 256):
        grid = TimeGrid.uniform(1.0, N)
        prob = LinearProblem(b, alpha, phi1.copy(), forcing=F)
        traj = solve_linear(prob, grid)
        want = np.outer(1.0 + grid.nodes**alpha, project(b, phi1))
        errs.append(np.max(np.abs(traj.modal - want)))
    assert 1.4 < errs[0] / errs[1] < 4.6
    assert 1.4 < errs[1] / errs[2] < 4.6


def test_linear_reconstruction_more_accurate():
    alpha = 0.7
    b = neumann_basis(4, 201, c0=1.0)
    a = b.modes[:, 1].copy()

    def F(x, t):
        return math.sin(t) * np.ones_like(x)

    grid = TimeGrid.uniform(1.0, 32)
    fine = TimeGrid.uniform(1.0, 4096)
    prob = LinearProblem(b, alpha, a, forcing=F)
    ref = solve_linear(prob, fine).modal[-1]
    e_const = np.abs(solve_linear(prob, grid).modal[-1] - ref).max()
    traj_lin = solve_linear(prob, grid, reconstruction="linear")
    e_lin = np.abs(traj_lin.modal[-1] - ref).max()
    assert e_lin < 0.2 * e_const
    assert traj_lin.diagnostics["max_inner_iterations"] >= 1


def test_stability_in_initial_value():
    alpha = 0.5
    b = neumann_basis(6, 201)
    rng = np.random.default_rng(3)
    a1 = synthesize(b, rng.normal(size=6))
    a2 = a1 + synthesize(b, 0.01 * rng.normal(size=6))
    grid = TimeGrid.uniform(3.0, 64)
    kw = dict(reaction=-0.4, forcing=lambda x, t: np.sin(x) + t)
    u1 = solve_linear(LinearProblem(b, alpha, a1, **kw), grid)
    u2 = solve_linear(LinearProblem(b, alpha, a2, **kw), grid)
    gap = np.max(np.abs(u1.fields() - u2.fields()))
    assert gap <= 5.0 * np.max(np.abs(a1 - a2))


def test_nonnegativity_band_limited():
    """Nonnegative band-limited data with the reaction absorbed in the
    shift keeps the discrete solution nonnegative to rounding."""
    alpha = 0.6
    b = neumann_basis(6, 201)
    a = 1.0 + 0.5 * np.cos(b.grid)

    def F(x, t):
        return 0.2 * (1.0 + np.cos(x))

    prob = LinearProblem(b, alpha, a, reaction=-0.5, forcing=F, shift=0.5)
    traj = solve_linear(prob, TimeGrid.uniform(4.0, 128))
    assert traj.fields().min() > -1e-12


def test_steady_state_is_fixed_point():
    """a = A0^{-1} F with static F: the discrete solution never moves."""
    alpha = 0.45
    b = eigendecompose(EllipticOperator(math.pi, sigma=(1.0, 1.0)), 6, 201)
    f_modal = np.array([1.0, -0.3, 0.2, 0.0, 0.05, 0.0])
    F_field = synthesize(b, f_modal)
    a = synthesize(b, f_modal / b.lambdas)

    def F(x, t):
        return np.interp(x, b.grid, F_field)

    prob = LinearProblem(b, alpha, a, forcing=F)
    traj = solve_linear(prob, TimeGrid.uniform(5.0, 64))
    drift = np.max(np.abs(traj.modal - traj.modal[0][None, :]))
    assert drift < 1e-10


def test_graded_grid_matches_closed_form():
    """Nonuniform path (row weights): shift-exact problem stays exact."""
    alpha, q = 0.5, -1.0
    b = neumann_basis(4, 201)
    a = b.modes[:, 2].copy()
    prob = LinearProblem(b, alpha, a, reaction=q, shift=-q)
    grid = TimeGrid.graded(1.0, 48, 2.0)
    traj = solve_linear(prob, grid)
    want = ml_neg_vec(alpha, (b.lambdas[2] - q) * grid.nodes**alpha)
    np.testing.assert_allclose(traj.modal[:, 2], want, atol=1e-12)


def test_l1_cross_validation():
    """Implicit L1 and the modal Volterra march agree and converge together."""
    alpha = 0.75
    b = neumann_basis(8, 129, c0=1.0)
    a = 1.0 + 0.4 * np.cos(b.grid) - 0.2 * np.cos(2 * b.grid)

    def gap(N):
        grid = TimeGrid.uniform(1.0, N)
        prob = LinearProblem(
            b, alpha, a, reaction=lambda x, t: -0.5 - 0.1 * x, forcing=0.3
        )
        u_modal = solve_linear(prob, grid).fields()
        u_l1 = solve_linear_l1(prob, grid).fields()
        return np.max(np.abs(u_modal - u_l1))

    g1, g2 = gap(128), gap(512)
    assert g2 < 0.5 * g1
    assert g2 < 1e-2


def test_drift_term_runs_and_converges():
    alpha = 0.6
    b = neumann_basis(10, 201, c0=1.0)
    a = np.exp(-((b.grid - 1.5) ** 2))
    prob = LinearProblem(b, alpha, a, drift=lambda x, t: 0.2 * np.sin(x))
    ref = solve_linear(prob, TimeGrid.uniform(0.5, 512)).fields()[-1]
    e1 = np.abs(solve_linear(prob, TimeGrid.uniform(0.5, 64)).fields()[-1] - ref).max()
    e2 = np.abs(solve_linear(prob, TimeGrid.uniform(0.5, 128)).fields()[-1] - ref).max()
    assert e2 < e1
    assert e1 < 0.05


def test_trajectory_csv_and_report(tmp_path):
    b = neumann_basis(3, 33)
    prob = LinearProblem(b, 0.5, np.cos(b.grid))
    traj = solve_linear(prob, TimeGrid.uniform(1.0, 8))
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    rows = path.read_text().strip().splitlines()
    assert len(rows) == 10 and rows[0].startswith("t,x0,")
    assert float(rows[1].split(",")[0]) == 0.0
    assert "reconstruction" in traj.report()


def test_problem_validation():
    b = neumann_basis(3, 33)
    with pytest.raises(ValueError):
        LinearProblem(b, 0.5, np.zeros(10))
    with pytest.raises(ValueError):
        solve_linear(LinearProblem(b, 0.5, np.zeros(33)), TimeGrid.uniform(1.0, 4), reconstruction="spline")
    with pytest.raises(ValueError):
        convolve_K(ModalPropagator(b, 0.5), TimeGrid.uniform(1.0, 4), np.zeros((3, 3)))
