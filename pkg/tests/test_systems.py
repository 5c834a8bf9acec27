import math

import numpy as np
import pytest

from fracdiff.fracops import TimeGrid, l1_weights
from fracdiff.linsolve import LinearProblem, solve_linear
from fracdiff.mlf import ml_neg_vec
from fracdiff.spectral import EllipticOperator, eigendecompose
from fracdiff.systems import (
    MultiOrderSystem,
    SemilinearPair,
    cooperative_classify,
    increment_recursion_check,
    kernel_envelope_check,
    nonneg_verify,
    pair_nonneg_verify,
    picard_system_solve,
    semilinear_pair_solve,
)


def full_neumann_basis(n_grid=33, L=math.pi):
    return eigendecompose(EllipticOperator(L), n_grid, n_grid)


def test_system_validation():
    b = full_neumann_basis()
    a = [np.ones_like(b.grid)] * 2
    with pytest.raises(ValueError):
        MultiOrderSystem(b, [0.5], a[:1])
    with pytest.raises(ValueError):
        MultiOrderSystem(b, [0.5, 0.4], a)  # not increasing
    with pytest.raises(ValueError):
        MultiOrderSystem(b, [0.5, 1.2], a)
    with pytest.raises(ValueError):
        MultiOrderSystem(b, [0.3, 0.5], a[:1])
    with pytest.raises(ValueError):
        MultiOrderSystem(b, [0.3, 0.5], a, couplings=[[None]])


def test_decoupled_system_matches_modal_decay():
    b = full_neumann_basis()
    a1 = 1.0 + 0.3 * np.cos(b.grid)
    a2 = 0.5 + 0.2 * np.cos(2 * b.grid)
    sys = MultiOrderSystem(b, [0.4, 0.7], [a1, a2])
    grid = TimeGrid.uniform(1.0, 64)
    out = picard_system_solve(sys, grid)
    for alpha, a, tr in zip(sys.alphas, sys.initials, out["trajectories"]):
        ref = solve_linear(LinearProblem(b, alpha, a), grid)
        assert np.max(np.abs(tr.fields() - ref.fields())) < 1e-9


def test_diagonal_coupling_closed_form():
    """p_ll = q constant: per-mode E_{alpha_l,1}(-(lambda_n - q) t^alpha_l)."""
    b = full_neumann_basis()
    q = -0.8
    a1 = b.modes[:, 1].copy()
    a2 = b.modes[:, 2].copy()
    sys = MultiOrderSystem(
        b, [0.4, 0.6], [a1, a2], couplings=[[q, None], [None, q]]
    )
    grid = TimeGrid.uniform(1.0, 256)
    out = picard_system_solve(sys, grid, M1=1.0)
    for alpha, mode, tr in ((0.4, 1, out["trajectories"][0]),
                            (0.6, 2, out["trajectories"][1])):
        want = ml_neg_vec(alpha, (b.lambdas[mode] - q) * grid.nodes**alpha)
        err = np.max(np.abs(tr.modal[:, mode] - want))
        assert err < 5e-3  # refinement-level agreement (left-endpoint forcing)


def test_increment_ratio_test_and_recursion():
    b = full_neumann_basis()
    rng = np.random.default_rng(7)
    a = [rng.uniform(0.2, 1.0) + rng.uniform(0.0, 0.3) * np.cos(b.grid)
         for _ in range(3)]
    # Strong cooperative coupling + high orders: many sweeps occur before the
    # 1e-13 stop, so the super-geometric Gamma(n*alpha_1+1) decay of (5.12)
    # becomes visible in the measured ratios.
    coup = [[rng.uniform(2.2, 2.5) if j != k else -rng.uniform(0.0, 0.02)
             for k in range(3)] for j in range(3)]
    sys = MultiOrderSystem(b, [0.9, 0.94, 0.98], a, couplings=coup)
    grid = TimeGrid.uniform(1.0, 128)
    out = picard_system_solve(sys, grid, M1=0.1, tol=1e-13, max_sweeps=400)
    sups = [float(np.max(U)) for U in out["increments"]]
    ratios = [s2 / s1 for s1, s2 in zip(sups[:-1], sups[1:]) if s1 > 1e-15]
    assert ratios[-1] < ratios[0] / 10.0  # faster than geometric
    rec = increment_recursion_check(out, sys, grid)
    assert rec["passes"], rec
    env = kernel_envelope_check(sys, grid)
    assert env["passes"], env


def test_nonneg_verify_gate_and_pass():
    b = full_neumann_basis()
    x = b.grid
    a = [np.zeros_like(x), np.zeros_like(x)]
    sys0 = MultiOrderSystem(b, [0.4, 0.6], a)
    grid = TimeGrid.uniform(1.0, 32)
    out0 = picard_system_solve(sys0, grid)
    v0 = nonneg_verify(sys0, out0["trajectories"], grid)
    assert v0["verdict"] == "PASS" and abs(v0["min_value"]) < 1e-12

    rng = np.random.default_rng(3)
    a = [rng.uniform(0.1, 0.6) + rng.uniform(0.0, 0.2) * (1.0 + np.cos(x))
         for _ in range(2)]
    sys1 = MultiOrderSystem(
        b, [0.45, 0.7], a,
        couplings=[[-0.3, 0.4], [0.2, -0.1]],
        forcings=[0.1, lambda x_, t: 0.05 * (1.0 + np.cos(x_))],
    )
    out1 = picard_system_solve(sys1, grid)
    v1 = nonneg_verify(sys1, out1["trajectories"], grid)
    assert v1["verdict"] == "PASS", v1

    sys2 = MultiOrderSystem(
        b, [0.45, 0.7], a, couplings=[[-0.3, -5.0], [0.2, -0.1]]
    )
    out2 = picard_system_solve(sys2, grid)
    v2 = nonneg_verify(sys2, out2["trajectories"], grid)
    assert v2["verdict"] == "NOT-APPLICABLE"
    assert "p_12" in v2["reason"]


def test_equal_order_agrees_with_linsolve():
    """Degenerate check: nearly equal orders behave like a block linear run.
    (Exactly equal orders are rejected by validation, so compare one
    component of a system with a matching scalar solve.)"""
    b = full_neumann_basis()
    a1 = 0.5 + 0.2 * np.cos(b.grid)
    a2 = np.zeros_like(b.grid)
    # second component does not feed back into the first
    sys = MultiOrderSystem(
        b, [0.5, 0.9], [a1, a2], couplings=[[-0.4, None], [0.3, None]]
    )
    grid = TimeGrid.uniform(1.0, 128)
    out = picard_system_solve(sys, grid, M1=1.0)
    ref = solve_linear(
        LinearProblem(b, 0.5, a1, reaction=-0.4, shift=1.0), grid
    )
    assert np.max(np.abs(out["trajectories"][0].fields() - ref.fields())) < 1e-8


def test_pair_decoupled_and_symmetric():
    b = full_neumann_basis()
    a = 0.5 + 0.3 * np.cos(b.grid)
    grid = TimeGrid.uniform(1.0, 64)
    pair0 = SemilinearPair(b, 0.5, lambda u, v: 0.0 * u, lambda u, v: 0.0 * v,
                           a, 0.5 * a)
    u, v = semilinear_pair_solve(pair0, grid)
    ref_u = solve_linear(LinearProblem(b, 0.5, a), grid)
    ref_v = solve_linear(LinearProblem(b, 0.5, 0.5 * a), grid)
    assert np.max(np.abs(u.fields() - ref_u.fields())) < 1e-10
    assert np.max(np.abs(v.fields() - ref_v.fields())) < 1e-10

    pair_sym = SemilinearPair(b, 0.5, lambda u, v: v - u, lambda u, v: u - v,
                              a, a.copy())
    u, v = semilinear_pair_solve(pair_sym, grid)
    assert np.max(np.abs(u.fields() - v.fields())) < 1e-10


def test_pair_lotka_volterra_cross_oracle():
    alpha = 0.6
    b = full_neumann_basis(65)
    x = b.grid
    a = 0.025 + 0.01 * np.cos(x)
    bb = 0.02 + 0.01 * np.cos(2 * x)

    def f(u, v):
        return u * (1.0 - u - 0.5 * v)

    def g(u, v):
        return v * (1.0 - v - 0.5 * u)

    pair = SemilinearPair(b, alpha, f, g, a, bb)
    grid = TimeGrid.uniform(0.5, 2048)
    u, v = semilinear_pair_solve(pair, grid)

    # implicit L1 oracle with iterated nonlinearity
    P = b.weights[None, :] * b.modes.T
    A0 = b.modes @ (b.lambdas[:, None] * P)
    D = l1_weights(alpha, grid)
    n = len(grid)
    U = np.zeros((n, x.size))
    V = np.zeros((n, x.size))
    U[0], V[0] = a, bb
    r = D[1, 1]
    mat = np.linalg.inv(r * np.eye(x.size) + A0)
    for i in range(1, n):
        rhs_u = r * a - D[i, :i] @ (U[:i] - a[None, :])
        rhs_v = r * bb - D[i, :i] @ (V[:i] - bb[None, :])
        uu, vv = U[i - 1].copy(), V[i - 1].copy()
        for _ in range(100):
            un = mat @ (rhs_u + f(uu, vv))
            vn = mat @ (rhs_v + g(uu, vv))
            if max(np.max(np.abs(un - uu)), np.max(np.abs(vn - vv))) < 1e-13:
                uu, vv = un, vn
                break
            uu, vv = un, vn
        U[i], V[i] = uu, vv
    assert np.max(np.abs(u.fields() - U)) < 1e-4
    assert np.max(np.abs(v.fields() - V)) < 1e-4


def test_pair_amplitude_escape():
    b = full_neumann_basis()
    a = np.ones_like(b.grid)
    pair = SemilinearPair(b, 0.5, lambda u, v: u * u + 2.0,
                          lambda u, v: 0.0 * v, a, a.copy(), m=1.2)
    with pytest.raises(ArithmeticError, match="amplitude escape"):
        semilinear_pair_solve(pair, TimeGrid.uniform(2.0, 64))


def test_cooperative_classify_cases():
    b = full_neumann_basis(17)
    z = np.zeros_like(b.grid)

    def mk(f, g):
        return SemilinearPair(b, 0.5, f, g, z, z)

    box = (-1.0, 1.0)
    assert cooperative_classify(mk(lambda u, v: v**2, lambda u, v: u**2), box)["case"] == 1
    # Remark-style construction: h1(xi) h2(eta) + h3(eta) with h1(0)=0, h3>=0
    c1 = cooperative_classify(
        mk(lambda u, v: u * np.sin(v) + v**2, lambda u, v: u**2), box
    )
    assert c1["f_disjuncts"][0]
    assert cooperative_classify(
        mk(lambda u, v: v**2, lambda u, v: u * (1.0 + v**2)), box
    )["case"] == 2
    assert cooperative_classify(
        mk(lambda u, v: v * (1.0 + u**2), lambda u, v: u**2), box
    )["case"] == 3
    assert cooperative_classify(
        mk(lambda u, v: v * (1.0 + u**2), lambda u, v: u * (1.0 + v**2)), box
    )["case"] == 4
    out = cooperative_classify(mk(lambda u, v: -v, lambda u, v: u**2), box)
    assert out["case"] == "none"
    eta, val = out["witnesses"]["f_edge"]
    assert eta > 0.0 and val < 0.0  # violating eta > 0 reported


def test_pair_nonneg_verify():
    b = full_neumann_basis()
    x = b.grid
    a = 0.3 + 0.1 * np.cos(x)
    bb = 0.2 + 0.1 * np.cos(2 * x)
    grid = TimeGrid.uniform(1.0, 64)

    pair1 = SemilinearPair(b, 0.5, lambda u, v: v * v, lambda u, v: u * u, a, bb)
    sol = semilinear_pair_solve(pair1, grid, shift=1.0)
    out = pair_nonneg_verify(pair1, sol)
    assert out["verdict"] == "PASS" and out["classification"]["case"] == 1

    # Case 4 on the observed positive range: f = u v style couplings
    pair4 = SemilinearPair(b, 0.5, lambda u, v: v * (0.5 + u),
                           lambda u, v: u * (0.5 + v), a, bb)
    sol4 = semilinear_pair_solve(pair4, grid, shift=2.0)
    out4 = pair_nonneg_verify(pair4, sol4)
    assert out4["verdict"] == "PASS"
    assert out4["classification"]["case"] in (1, 2, 3, 4)

    gate = pair_nonneg_verify(
        SemilinearPair(b, 0.5, lambda u, v: v * v, lambda u, v: u * u,
                       a - 1.0, bb),
        sol,
    )
    assert gate["verdict"] == "NOT-APPLICABLE"

    noncoop = SemilinearPair(b, 0.5, lambda u, v: -v, lambda u, v: -u, a, bb)
    sol_nc = semilinear_pair_solve(noncoop, grid, shift=1.0)
    out_nc = pair_nonneg_verify(noncoop, sol_nc)
    assert out_nc["verdict"] == "NOT-APPLICABLE"
