"""Solution operators S(t), K(t) and mild-solution solvers for

    d_t^alpha (u - a) + A_0 u = Q u + F,   Q u = b(x,t) u_x + q(x,t) u,

on an eigenbasis of A_0.  The Volterra convolution uses exact kernel
moments (mlf.kernel_weight), which absorb the t^(alpha-1) singularity; the
forcing is reconstructed piecewise-constant per step (left endpoint) by
default, or by endpoint averages ('linear') behind a flag.

An optional spectral shift s >= 0 rewrites the equation as
d_t^alpha (u - a) + (A_0 + s) u = (Q + s) u + F.  The shifted kernel
weights are nonnegative, so whenever the effective forcing is monotone in
u the discrete time-march preserves ordering exactly; the monotone and
comparison machinery in higher modules relies on this.
"""

import math

import numpy as np

from .fracops import TimeGrid
from .mlf import e1_bound_constant, ml_neg_vec
from .spectral import project, synthesize

__all__ = [
    "ModalPropagator",
    "LinearProblem",
    "Trajectory",
    "apply_S",
    "s_norm_bound",
    "convolve_K",
    "solve_linear",
    "solve_linear_l1",
]


class ModalPropagator:
    """Per-mode Mittag-Leffler propagator tables on a time grid.

    S(t): multiply mode n by E_{alpha,1}(-lam_n t^alpha).
    K*g:  discrete convolution with exact kernel moments
          w_n(lo, hi) = int_lo^hi tau^(alpha-1) E_{alpha,alpha}(-lam_n tau^alpha) dtau.
    """

    def __init__(self, basis, alpha, shift=0.0):
        if not (0.0 < alpha < 1.0):
            raise ValueError(f"propagator needs alpha in (0, 1), got {alpha}")
        lam = basis.lambdas + float(shift)
        if (lam < -1e-12).any():
            raise ValueError(
                f"shift {shift} makes an eigenvalue negative (min {lam.min()})"
            )
        self.basis = basis
        self.alpha = float(alpha)
        self.shift = float(shift)
        self.lambdas = np.maximum(lam, 0.0)
        self._tables = {}

    def e_values(self, tnodes):
        """E_{alpha,1}(-lam_n t^alpha) for every node/mode: (n_t, M)."""
        tnodes = np.asarray(tnodes, dtype=float)
        x = np.outer(tnodes**self.alpha, self.lambdas)
        return ml_neg_vec(self.alpha, x)

    def tables(self, grid):
        """(E, W) for a TimeGrid: E is (N+1, M); W is the lag-indexed weight
        table (N, M) for uniform grids, or None (nonuniform grids use
        per-row weights via row_weights)."""
        key = id(grid)
        if key not in self._tables:
            E = self.e_values(grid.nodes)
            W = None
            if grid.kind == "uniform":
                W = self._weights_from_e(E, grid.nodes)
            self._tables[key] = (E, W)
        return self._tables[key]

    def _weights_from_e(self, E, taus):
        """Weights over consecutive lag intervals from an E-value table."""
        lam = self.lambdas
        ga = math.gamma(self.alpha + 1.0)
        small = lam < 1e-12
        w = np.empty((len(taus) - 1, lam.size))
        with np.errstate(divide="ignore", invalid="ignore"):
            w[:, :] = -np.diff(E, axis=0) / lam[None, :]
        if small.any():
            m = np.asarray(taus, dtype=float) ** self.alpha / ga
            w[:, small] = np.diff(m)[:, None]
        return np.maximum(w, 0.0)

    def row_weights(self, t_i, earlier_nodes):
        """Weights w_n over [t_i - t_{j+1}, t_i - t_j] for each interval of
        earlier_nodes (ending at t_i): shape (len-1, M)."""
        taus = t_i - np.asarray(earlier_nodes, dtype=float)[::-1]
        E = self.e_values(taus)
        return self._weights_from_e(E, taus)[::-1]

    def weight_sum_check(self, grid):
        """Invariant: cumulative weights equal (1 - E(-lam t^alpha))/lam."""
        E, W = self.tables(grid)
        if W is None:
            raise ValueError("weight_sum_check needs a uniform grid")
        total = np.cumsum(W, axis=0)
        lam = self.lambdas
        ga = math.gamma(self.alpha + 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            want = (1.0 - E[1:]) / lam[None, :]
        small = lam < 1e-12
        if small.any():
            want[:, small] = (grid.nodes[1:] ** self.alpha / ga)[:, None]
        return float(np.max(np.abs(total - want)))


def apply_S(prop, t, coeffs):
    """Modal action of S(t): multiply mode n by E_{alpha,1}(-lam_n t^alpha)."""
    t = float(t)
    if t < 0.0:
        raise ValueError(f"apply_S needs t >= 0, got {t}")
    coeffs = np.asarray(coeffs, dtype=float)
    if t == 0.0:
        return coeffs.copy()
    e = ml_neg_vec(prop.alpha, prop.lambdas * t**prop.alpha)
    return e * coeffs


def s_norm_bound(prop, t):
    """C/(1 + lam_1 t^alpha) envelope for ||S(t)|| from the calibrated
    Mittag-Leffler bound (modal sup: the slowest mode dominates)."""
    c = e1_bound_constant(prop.alpha)
    return c / (1.0 + float(prop.lambdas[0]) * float(t) ** prop.alpha)


def convolve_K(prop, grid, forcing, reconstruction="constant"):
    """Discrete (K * forcing)(t_i) for a modal forcing history (N+1, M).

    'constant' uses the left endpoint of each step; 'linear' the endpoint
    average.  Exact kernel moments make a constant single-mode forcing g
    reproduce (1 - E_{alpha,1}(-lam t^alpha))/lam * g to ml accuracy.
    """
    if reconstruction not in ("constant", "linear"):
        raise ValueError(f"unknown reconstruction {reconstruction!r}")
    G = np.asarray(forcing, dtype=float)
    n = len(grid)
    if G.shape[0] != n:
        raise ValueError(f"forcing history has {G.shape[0]} rows, grid {n} nodes")
    if reconstruction == "linear":
        G = 0.5 * (G[:-1] + G[1:])  # per-interval averages, row j = [t_j, t_j+1]
    else:
        G = G[:-1]
    out = np.zeros((n, prop.lambdas.size))
    E, W = prop.tables(grid)
    if W is not None:
        # uniform grid: causal convolution of the lag table with the forcing
        from scipy.signal import fftconvolve

        fc = fftconvolve(G, W, mode="full", axes=0)
        out[1:] = fc[: n - 1]
    else:
        for i in range(1, n):
            w = prop.row_weights(grid.nodes[i], grid.nodes[: i + 1])
            out[i] = np.einsum("jm,jm->m", w, G[:i])
    return out


class LinearProblem:
    """Mild-solution data: initial a (field samples), drift b(x,t),
    reaction q(x,t), forcing F(x,t) (callables of (x, t) arrays, constants,
    or None), and a nonnegative spectral shift."""

    def __init__(self, basis, alpha, a, drift=None, reaction=None, forcing=None, shift=0.0):
        a = np.asarray(a, dtype=float)
        if a.shape != basis.grid.shape:
            raise ValueError(
                f"initial field has shape {a.shape}, spatial grid {basis.grid.shape}"
            )
        self.basis = basis
        self.alpha = float(alpha)
        self.a = a
        self.drift = drift
        self.reaction = reaction
        self.forcing = forcing
        self.shift = float(shift)
        self.propagator = ModalPropagator(basis, alpha, shift=self.shift)

    def _coef(self, f, t):
        x = self.basis.grid
        if f is None:
            return None
        if callable(f):
            return np.asarray(f(x, t), dtype=float) * np.ones_like(x)
        return float(f) * np.ones_like(x)

    def q_apply(self, field, t):
        """Q u = b u_x + q u evaluated on the spatial grid at time t."""
        x = self.basis.grid
        out = np.zeros_like(field)
        q = self._coef(self.reaction, t)
        if q is not None:
            out += q * field
        b = self._coef(self.drift, t)
        if b is not None:
            du = np.gradient(field, x)
            out += b * du
        return out

    def rhs_field(self, field, t):
        """(Q + shift) u + F at time t, in physical space."""
        out = self.q_apply(field, t) + self.shift * field
        F = self._coef(self.forcing, t)
        if F is not None:
            out = out + F
        return out


class Trajectory:
    """Modal solution history plus diagnostics."""

    def __init__(self, grid, basis, modal, diagnostics=None):
        self.grid = grid
        self.basis = basis
        self.modal = np.asarray(modal, dtype=float)  # (N+1, M)
        self.diagnostics = dict(diagnostics or {})

    def fields(self):
        return self.modal @ self.basis.modes.T

    def field_at(self, i):
        return self.basis.modes @ self.modal[i]

    def sup_norm(self):
        return float(np.max(np.abs(self.fields())))

    def to_csv(self, path):
        fields = self.fields()
        with open(path, "w") as fh:
            fh.write("t," + ",".join(f"x{i}" for i in range(fields.shape[1])) + "\n")
            for t, row in zip(self.grid.nodes, fields):
                fh.write(f"{float(t)!r}," + ",".join(repr(float(v)) for v in row) + "\n")

    def report(self):
        lines = [f"trajectory: N={self.grid.N}, modes={self.basis.n_modes}"]
        for k, v in self.diagnostics.items():
            lines.append(f"  {k}: {v}")
        return "\n".join(lines)


def solve_linear(
    prob,
    grid,
    reconstruction="constant",
    inner_tol=1e-12,
    max_inner=100,
    rhs_hook=None,
):
    """Forward-substitution solve of the discrete Volterra equation.

    u(t_i) = S(t_i) a + sum_j W_ij P[(Q + s) u + F](t_j); with 'constant'
    reconstruction each node is explicit; with 'linear' the current node
    enters through the endpoint average and is resolved by an inner fixed
    point (modal-norm increment < inner_tol, at most max_inner iterations).

    rhs_hook(field, t), when given, replaces the problem's rhs_field; the
    semilinear layer uses it to inject f(u).
    """
    if reconstruction not in ("constant", "linear"):
        raise ValueError(f"unknown reconstruction {reconstruction!r}")
    prop = prob.propagator
    basis = prob.basis
    n = len(grid)
    M = basis.n_modes
    E, W = prop.tables(grid)
    a_modal = project(basis, prob.a)
    rhs = rhs_hook if rhs_hook is not None else prob.rhs_field

    modal = np.zeros((n, M))
    modal[0] = a_modal
    G = np.zeros((n, M))  # modal rhs history at nodes
    G[0] = project(basis, rhs(prob.a, grid.nodes[0]))
    inner_counts = []
    for i in range(1, n):
        if W is not None:
            w = W[:i][::-1]
        else:
            w = prop.row_weights(grid.nodes[i], grid.nodes[: i + 1])
        base = E[i] * a_modal
        if reconstruction == "constant":
            modal[i] = base + np.einsum("jm,jm->m", w, G[:i])
            G[i] = project(basis, rhs(basis.modes @ modal[i], grid.nodes[i]))
            inner_counts.append(0)
        else:
            past = np.einsum("jm,jm->m", w[:-1], 0.5 * (G[: i - 1] + G[1:i]))
            past += w[-1] * 0.5 * G[i - 1]
            u = modal[i - 1].copy()
            for it in range(max_inner):
                g_i = project(basis, rhs(basis.modes @ u, grid.nodes[i]))
                u_new = base + past + w[-1] * 0.5 * g_i
                delta = float(np.max(np.abs(u_new - u)))
                u = u_new
                if delta < inner_tol * max(1.0, float(np.max(np.abs(u)))):
                    break
            else:
                raise ArithmeticError(
                    f"inner iteration stalled at node {i} (t={grid.nodes[i]}), "
                    f"residual {delta}"
                )
            modal[i] = u
            G[i] = project(basis, rhs(basis.modes @ u, grid.nodes[i]))
            inner_counts.append(it + 1)
    diag = {
        "reconstruction": reconstruction,
        "max_inner_iterations": max(inner_counts) if inner_counts else 0,
        "shift": prob.shift,
    }
    return Trajectory(grid, basis, modal, diag)


def solve_linear_l1(prob, grid):
    """Implicit L1 cross-oracle: same spectral operator, L1 time stepping.

    At each node, (r I + A0 - Q) u_i = F_i + r a - history, with A0 the
    span-truncated operator (so both solvers discretize the identical
    spatial dynamics) and r the diagonal L1 coefficient.  Unconditionally
    stable; used for cross-validation only.
    """
    from scipy.linalg import lu_factor, lu_solve

    from .fracops import l1_weights

    basis = prob.basis
    x = basis.grid
    n = len(grid)
    D = l1_weights(prob.alpha, grid)
    # spectrally truncated A0 as a dense matrix on the spatial grid
    P = basis.weights[None, :] * basis.modes.T  # project
    A0 = basis.modes @ (basis.lambdas[:, None] * P)
    span = basis.modes @ P  # projector onto span{phi_n}
    fields = np.zeros((n, x.size))
    fields[0] = span @ prob.a
    a = fields[0]

    static = not (callable(prob.drift) or callable(prob.reaction))
    lu = None
    for i in range(1, n):
        t = grid.nodes[i]
        r = D[i, i]
        Q = np.zeros((x.size, x.size))
        q = prob._coef(prob.reaction, t)
        if q is not None:
            Q += np.diag(q)
        b = prob._coef(prob.drift, t)
        if b is not None:
            Dx = np.zeros((x.size, x.size))
            h = x[1] - x[0]
            Dx[np.arange(1, x.size - 1), np.arange(2, x.size)] = 0.5 / h
            Dx[np.arange(1, x.size - 1), np.arange(0, x.size - 2)] = -0.5 / h
            Dx[0, :2] = [-1.0 / h, 1.0 / h]
            Dx[-1, -2:] = [-1.0 / h, 1.0 / h]
            Q += np.diag(b) @ Dx
        # restrict Q to the span so both solvers share one spatial operator
        Qs = span @ Q @ span
        F = prob._coef(prob.forcing, t)
        rhs = (span @ F) if F is not None else np.zeros(x.size)
        rhs = rhs + r * a - span @ (D[i, :i] @ (fields[:i] - a[None, :]))
        mat = r * np.eye(x.size) + A0 - Qs
        if static and grid.kind == "uniform":
            if lu is None:
                lu = lu_factor(mat)
            fields[i] = lu_solve(lu, rhs)
        else:
            fields[i] = np.linalg.solve(mat, rhs)
    modal = np.array([project(basis, f) for f in fields])
    return Trajectory(grid, basis, modal, {"scheme": "implicit-L1"})
