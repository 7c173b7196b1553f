"""Riccati, Lyapunov/Sylvester, and matrix-ODE propagation services.

The algebraic Riccati solver works on the filter-form equation

    A P + P A' + Q - P C' R^{-1} C P = 0

via the stable invariant subspace of the Hamiltonian matrix, refined by
Newton iterations (each Newton step is one Lyapunov solve).  Nominal models
whose process noise is blind to a neutral mode of the state matrix (an
imaginary-axis eigenvalue of A' whose eigenvector lies in the null space of
Q) make the Hamiltonian marginal; those modes are deflated exactly, which
yields the semi-stabilizing solution the distributed filter actually uses in
that situation.

Lyapunov/Sylvester equations are solved either by the dense Kronecker
linear system (small problems) or by Schur-form back-substitution; both
paths honor the same residual contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg

from . import matkit
from .model import NominalModel, TrueSystem, stack

if TYPE_CHECKING:  # pragma: no cover
    from .filtering import FilterRealization

__all__ = [
    "SolverError",
    "CareSolutionError",
    "SingularEquationError",
    "NotHurwitzError",
    "solve_care",
    "solve_lyapunov",
    "solve_sylvester",
    "SteadyStateResult",
    "steady_state",
    "TrajectoryInit",
    "default_initial_state",
    "CovarianceTrajectory",
    "propagate",
    "AugmentedJointSystem",
    "build_augmented",
    "propagate_augmented",
]

KRON_DIRECT_MAX_DIM = 32


class SolverError(RuntimeError):
    """Base class for solver failures."""


class CareSolutionError(SolverError):
    """No computable Riccati solution (Hamiltonian on the imaginary axis, etc.)."""


class SingularEquationError(SolverError):
    """Lyapunov/Sylvester spectra violate the unique-solvability condition."""


class NotHurwitzError(SolverError):
    """An operation requiring a Hurwitz matrix received an unstable one."""


# ---------------------------------------------------------------------------
# Sylvester / Lyapunov
# ---------------------------------------------------------------------------


def _sylvester_spectra_check(a: np.ndarray, b: np.ndarray) -> None:
    wa = np.linalg.eigvals(a)
    wb = np.linalg.eigvals(b)
    scale = max(np.max(np.abs(wa), initial=0.0) + np.max(np.abs(wb), initial=0.0), 1e-300)
    gap = np.min(np.abs(wa[:, None] + wb[None, :]))
    if gap <= 1e-10 * scale:
        raise SingularEquationError(
            f"eigenvalue sums come within {gap:.3e} of zero (scale {scale:.3e}); "
            "the equation has no unique solution"
        )


def _sylvester_kron(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    n, m = a.shape[0], b.shape[0]
    coef = np.kron(np.eye(m), a) + np.kron(b.T, np.eye(n))
    x = np.linalg.solve(coef, matkit.vec(c))
    return matkit.unvec(x, n, m)


def _sylvester_schur(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    # Complex Schur forms turn the equation into a triangular system solved
    # column by column (Bartels-Stewart scheme).
    ta, ua = scipy.linalg.schur(a.astype(complex), output="complex")
    tb, ub = scipy.linalg.schur(b.astype(complex), output="complex")
    f = ua.conj().T @ c @ ub
    n, m = a.shape[0], b.shape[0]
    y = np.zeros((n, m), dtype=complex)
    eye = np.eye(n)
    for k in range(m):
        rhs = f[:, k] - y[:, :k] @ tb[:k, k]
        y[:, k] = scipy.linalg.solve_triangular(ta + tb[k, k] * eye, rhs)
    x = ua @ y @ ub.conj().T
    return x.real


def solve_sylvester(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    method: str = "auto",
) -> np.ndarray:
    """Solve ``a @ x + x @ b = c``.

    ``method`` is one of ``auto`` (Kronecker for small problems, Schur
    otherwise), ``kron``, or ``schur``.  Raises
    :class:`SingularEquationError` when some eigenvalue sum of ``a`` and
    ``b`` is numerically zero, and :class:`SolverError` when the residual
    contract ``||a x + x b - c||_F <= 1e-9 (1 + ||x||_F)`` is violated.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]:
        raise ValueError("a and b must be square")
    if c.shape != (a.shape[0], b.shape[0]):
        raise ValueError(f"c must be {a.shape[0]}x{b.shape[0]}, got {c.shape}")
    _sylvester_spectra_check(a, b)
    if method == "auto":
        method = "kron" if max(a.shape[0], b.shape[0]) <= KRON_DIRECT_MAX_DIM else "schur"
    if method == "kron":
        x = _sylvester_kron(a, b, c)
    elif method == "schur":
        x = _sylvester_schur(a, b, c)
    else:
        raise ValueError(f"unknown method {method!r}")
    residual = np.linalg.norm(a @ x + x @ b - c)
    if residual > 1e-9 * (1.0 + np.linalg.norm(x)):
        raise SolverError(f"Sylvester residual {residual:.3e} violates the solver contract")
    return x


def solve_lyapunov(m: np.ndarray, w: np.ndarray, method: str = "auto") -> np.ndarray:
    """Solve the continuous Lyapunov equation ``m @ x + x @ m.T + w = 0``.

    The result is symmetrized when ``w`` is symmetric.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    x = solve_sylvester(m, m.T, -w, method=method)
    if matkit.is_symmetric(w, rtol=1e-9):
        x = matkit.symmetrize(x)
    return x


# ---------------------------------------------------------------------------
# Algebraic Riccati (filter form)
# ---------------------------------------------------------------------------


def _neutral_modes(a: np.ndarray, q: np.ndarray) -> np.ndarray | None:
    """Orthonormal basis of the neutral subspace, or None when empty.

    A neutral mode is an eigenvector of ``a.T`` whose eigenvalue sits on the
    imaginary axis and which lies in the null space of ``q``.  The span of
    the real and imaginary parts of all such eigenvectors is returned.
    """
    w, v = np.linalg.eig(a.T)
    a_scale = max(np.linalg.norm(a, 2), 1e-300)
    q_scale = max(np.linalg.norm(q, 2), 1e-300)
    cols = []
    for k in range(w.size):
        if abs(w[k].real) > 1e-8 * a_scale:
            continue
        e = v[:, k]
        if np.linalg.norm(q @ e) > 1e-8 * q_scale * np.linalg.norm(e):
            continue
        cols.append(e.real)
        if np.linalg.norm(e.imag) > 1e-12:
            cols.append(e.imag)
    if not cols:
        return None
    basis = np.column_stack(cols)
    u, s, _ = np.linalg.svd(basis, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0]))
    return u[:, :rank]


def _care_hamiltonian(a: np.ndarray, gram: np.ndarray, q: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    h = np.zeros((2 * n, 2 * n))
    h[:n, :n] = a.T
    h[:n, n:] = -gram
    h[n:, :n] = -q
    h[n:, n:] = -a
    return h


def _solve_care_core(a: np.ndarray, gram: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Stable-invariant-subspace solution of A P + P A' + Q - P Gram P = 0."""
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    h = _care_hamiltonian(a, gram, q)
    eig = np.linalg.eigvals(h)
    # Axis classification scales with the dynamics, not with ||H||: strong
    # measurements inflate the Hamiltonian without moving slow eigenvalues.
    tol = 1e-9 * max(np.linalg.norm(a, 2), 1.0)
    n_stable = int(np.sum(eig.real < -tol))
    n_marginal = int(np.sum(np.abs(eig.real) <= tol))
    if n_marginal > 0 or n_stable != n:
        raise CareSolutionError(
            f"Hamiltonian has {n_marginal} imaginary-axis eigenvalues and "
            f"{n_stable} stable ones (need {n}); no stabilizing solution"
        )
    _, z, sdim = scipy.linalg.schur(h, output="real", sort="lhp")
    if sdim != n:
        raise CareSolutionError(f"Schur reordering selected {sdim} stable directions, expected {n}")
    u1 = z[:n, :n]
    u2 = z[n:, :n]
    p = matkit.symmetrize(np.linalg.solve(u1.T, u2.T).T)

    # Newton refinement: each step solves one Lyapunov equation in the
    # current closed loop, which is strictly stable here.
    for _ in range(5):
        res = a @ p + p @ a.T + q - p @ gram @ p
        if np.linalg.norm(res) <= 1e-13 * (1.0 + np.linalg.norm(p) ** 2):
            break
        g_cl = a - p @ gram
        try:
            delta = solve_lyapunov(g_cl, res)
        except SolverError:
            break
        p_new = matkit.symmetrize(p + delta)
        new_res = a @ p_new + p_new @ a.T + q - p_new @ gram @ p_new
        if np.linalg.norm(new_res) >= np.linalg.norm(res):
            break
        p = p_new
    return p


def solve_care(
    a: np.ndarray,
    c_stack: np.ndarray,
    r_diag: np.ndarray,
    q: np.ndarray,
) -> np.ndarray:
    """Solve ``a p + p a' + q - p c' r^{-1} c p = 0`` for the PSD solution.

    ``r_diag`` must be symmetric positive definite.  When the pair
    ``(a, q^{1/2})`` hides neutral modes (imaginary-axis eigenvalues of
    ``a.T`` with eigenvectors annihilated by ``q``), the solution is
    computed on the complementary subspace and extended by zero, matching
    the limit of the differential Riccati equation.  Any other source of
    imaginary-axis Hamiltonian eigenvalues raises
    :class:`CareSolutionError`.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    c_stack = np.atleast_2d(np.asarray(c_stack, dtype=float))
    r_diag = np.atleast_2d(np.asarray(r_diag, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = a.shape[0]
    if q.shape != (n, n) or c_stack.shape[1] != n or r_diag.shape[0] != c_stack.shape[0]:
        raise ValueError("inconsistent Riccati dimensions")
    r_eigs = np.linalg.eigvalsh(matkit.symmetrize(r_diag))
    if r_eigs[0] <= 0.0:
        raise CareSolutionError(f"measurement noise intensity is not PD (min eig {r_eigs[0]:.3e})")
    gram = matkit.symmetrize(c_stack.T @ np.linalg.solve(r_diag, c_stack))

    # Deflate neutral modes repeatedly (a reduction can expose new ones) and
    # solve on the orthonormal complement.
    keep_total = np.eye(n)
    a_red, q_red, gram_red = a, q, gram
    while a_red.shape[0] > 0:
        neutral = _neutral_modes(a_red, q_red)
        if neutral is None:
            break
        keep = scipy.linalg.null_space(neutral.T)
        a_red = keep.T @ a_red @ keep
        q_red = matkit.symmetrize(keep.T @ q_red @ keep)
        gram_red = matkit.symmetrize(keep.T @ gram_red @ keep)
        keep_total = keep_total @ keep
    p_red = _solve_care_core(a_red, gram_red, q_red)
    p = matkit.symmetrize(keep_total @ p_red @ keep_total.T)

    residual = np.linalg.norm(a @ p + p @ a.T + q - p @ gram @ p)
    if residual > 1e-8 * (1.0 + np.linalg.norm(p) ** 2):
        raise CareSolutionError(f"Riccati residual {residual:.3e} violates the solver contract")
    min_eig = np.linalg.eigvalsh(p)[0]
    if min_eig < -1e-8 * max(1.0, np.linalg.norm(p, 2)):
        raise CareSolutionError(f"Riccati solution is not PSD (min eigenvalue {min_eig:.3e})")
    return p


# ---------------------------------------------------------------------------
# Steady-state covariances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SteadyStateResult:
    """Steady-state covariances of the filter network.

    ``nominal_cov``  : what the designer's model predicts
    ``error_cov``    : the actual stacked estimation error covariance
    ``cross_cov``    : steady error/state cross term (None when the mismatch
                       feedthrough is zero and it is not needed)
    ``state_cov``    : steady second moment of the stacked true state (None
                       in the same situation)
    ``residuals``    : equation residual norms, keyed by block name
    """

    nominal_cov: np.ndarray
    error_cov: np.ndarray
    cross_cov: np.ndarray | None
    state_cov: np.ndarray | None
    residuals: dict[str, float]


def _hurwitz_guard(m: np.ndarray, what: str) -> None:
    alpha = matkit.spectral_abscissa(m)
    if alpha > 1e-9 * max(np.linalg.norm(m, 2), 1e-300):
        raise NotHurwitzError(f"{what} is unstable (spectral abscissa {alpha:.3e})")


def steady_state(fr: "FilterRealization", ts: TrueSystem, nm: NominalModel) -> SteadyStateResult:
    """Solve the steady-state equations for the nominal index and the error covariance.

    With zero mismatch feedthrough both indices satisfy plain Lyapunov
    equations in the closed-loop matrix.  Otherwise the stacked state second
    moment and the cross term are solved first (requiring a Hurwitz true
    state matrix), and their contribution drives the error-covariance
    equation.  A closed-loop matrix with an imaginary-axis eigenvalue makes
    the equations singular and raises :class:`SingularEquationError`.
    """
    st = stack(ts, nm)
    n_sensors = ts.sensor_count
    acl = fr.closed_loop
    _hurwitz_guard(acl, "closed-loop matrix")
    u_q = matkit.kron(matkit.ones_matrix(n_sensors), ts.q)
    w_nom = fr.gain_diag @ st.r_diag_nom @ fr.gain_diag.T + matkit.kron(
        matkit.ones_matrix(n_sensors), nm.q
    )
    w_err = fr.gain_diag @ st.r_diag @ fr.gain_diag.T + u_q
    residuals: dict[str, float] = {}

    if fr.mismatch_is_zero:
        error_cov = solve_lyapunov(acl, w_err)
        residuals["error_cov"] = float(np.linalg.norm(acl @ error_cov + error_cov @ acl.T + w_err))
        nominal_cov = solve_lyapunov(acl, w_nom)
        residuals["nominal_cov"] = float(
            np.linalg.norm(acl @ nominal_cov + nominal_cov @ acl.T + w_nom)
        )
        return SteadyStateResult(nominal_cov, error_cov, None, None, residuals)

    _hurwitz_guard(ts.a, "true state matrix (required for nonzero mismatch feedthrough)")
    f = fr.mismatch_diag
    a_d = st.a_diag
    state_cov = solve_lyapunov(a_d, u_q)
    residuals["state_cov"] = float(np.linalg.norm(a_d @ state_cov + state_cov @ a_d.T + u_q))
    rhs_cross = f @ state_cov + u_q
    cross_cov = solve_sylvester(acl, a_d.T, -rhs_cross)
    residuals["cross_cov"] = float(np.linalg.norm(acl @ cross_cov + cross_cov @ a_d.T + rhs_cross))
    w_full = w_err + f @ cross_cov.T + cross_cov @ f.T
    error_cov = solve_lyapunov(acl, w_full)
    residuals["error_cov"] = float(np.linalg.norm(acl @ error_cov + error_cov @ acl.T + w_full))
    nominal_cov = solve_lyapunov(acl, w_nom)
    residuals["nominal_cov"] = float(np.linalg.norm(acl @ nominal_cov + nominal_cov @ acl.T + w_nom))
    return SteadyStateResult(nominal_cov, error_cov, cross_cov, state_cov, residuals)


# ---------------------------------------------------------------------------
# Matrix-ODE propagation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryInit:
    """Initial matrices for the coupled covariance ODEs."""

    nominal_cov: np.ndarray
    error_cov: np.ndarray
    cross_cov: np.ndarray
    state_cov: np.ndarray


def default_initial_state(ts: TrueSystem) -> TrajectoryInit:
    """Defaults for filters that all start at the mean initial state.

    Every filter uses the same deterministic initial estimate (the mean of
    the initial state), so all blocks of the initial error covariance equal
    the initial state covariance, and the cross term matches it.
    """
    n_sensors = ts.sensor_count
    ones = matkit.ones_matrix(n_sensors)
    base = matkit.kron(ones, ts.sigma0)
    second_moment = matkit.kron(ones, ts.sigma0 + np.outer(ts.x0, ts.x0))
    return TrajectoryInit(
        nominal_cov=base.copy(),
        error_cov=base.copy(),
        cross_cov=base.copy(),
        state_cov=second_moment,
    )


@dataclass(frozen=True)
class CovarianceTrajectory:
    """Covariance matrices sampled on a time grid.

    ``error_trace_rate`` is the numerical growth rate of the error-covariance
    trace along the grid; divergent scenarios show a persistent positive
    rate instead of raising.
    """

    time: np.ndarray
    nominal_cov: np.ndarray
    error_cov: np.ndarray
    cross_cov: np.ndarray
    state_cov: np.ndarray
    error_trace_rate: np.ndarray


def _check_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("time grid must be 1-D with at least two points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


def stable_step(dt: float, drift: np.ndarray) -> float:
    """Cap an RK4 step so the stiffest drift mode stays inside the stability region.

    The covariance ODEs have drift eigenvalues bounded by twice those of the
    drift matrix; 1.25 / ||drift||_2 keeps 2 * ||drift||_2 * dt below the
    real-axis stability limit with margin.  Deterministic in the inputs.
    """
    nrm = float(np.linalg.norm(drift, 2))
    if nrm <= 0.0:
        return dt
    return min(dt, 1.25 / nrm)


def propagate(
    fr: "FilterRealization",
    ts: TrueSystem,
    nm: NominalModel,
    grid: np.ndarray,
    dt: float = 1e-3,
    init: TrajectoryInit | None = None,
) -> CovarianceTrajectory:
    """Integrate the coupled covariance ODEs with fixed-step fourth-order Runge-Kutta.

    Between grid points the integrator uses equal substeps no longer than
    ``dt`` (capped further for stiff closed loops, see :func:`stable_step`).
    Symmetric blocks are re-symmetrized after every step.
    """
    grid = _check_grid(grid)
    if dt <= 0:
        raise ValueError("dt must be positive")
    dt = stable_step(dt, fr.closed_loop)
    if init is None:
        init = default_initial_state(ts)
    st = stack(ts, nm)
    n_sensors = ts.sensor_count
    acl = fr.closed_loop
    f = fr.mismatch_diag
    a_d = st.a_diag
    u_q = matkit.kron(matkit.ones_matrix(n_sensors), ts.q)
    w_nom = fr.gain_diag @ st.r_diag_nom @ fr.gain_diag.T + matkit.kron(
        matkit.ones_matrix(n_sensors), nm.q
    )
    w_err = fr.gain_diag @ st.r_diag @ fr.gain_diag.T + u_q

    def rhs(su, se, s, x):
        dsu = acl @ su + su @ acl.T + w_nom
        dse = acl @ se + se @ acl.T + f @ s.T + s @ f.T + w_err
        ds = acl @ s + s @ a_d.T + f @ x + u_q
        dx = a_d @ x + x @ a_d.T + u_q
        return dsu, dse, ds, dx

    su = np.asarray(init.nominal_cov, dtype=float).copy()
    se = np.asarray(init.error_cov, dtype=float).copy()
    s = np.asarray(init.cross_cov, dtype=float).copy()
    x = np.asarray(init.state_cov, dtype=float).copy()
    q_dim = acl.shape[0]
    for name, m in (("nominal_cov", su), ("error_cov", se), ("cross_cov", s), ("state_cov", x)):
        if m.shape != (q_dim, q_dim):
            raise ValueError(f"initial {name} must be {q_dim}x{q_dim}, got {m.shape}")

    out_su = np.empty((grid.size, q_dim, q_dim))
    out_se = np.empty_like(out_su)
    out_s = np.empty_like(out_su)
    out_x = np.empty_like(out_su)
    out_su[0], out_se[0], out_s[0], out_x[0] = su, se, s, x

    for k in range(grid.size - 1):
        span = grid[k + 1] - grid[k]
        n_sub = max(1, math.ceil(span / dt - 1e-12))
        h = span / n_sub
        for _ in range(n_sub):
            k1 = rhs(su, se, s, x)
            k2 = rhs(*(v + 0.5 * h * d for v, d in zip((su, se, s, x), k1)))
            k3 = rhs(*(v + 0.5 * h * d for v, d in zip((su, se, s, x), k2)))
            k4 = rhs(*(v + h * d for v, d in zip((su, se, s, x), k3)))
            su, se, s, x = (
                v + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
                for v, d1, d2, d3, d4 in zip((su, se, s, x), k1, k2, k3, k4)
            )
            su = matkit.symmetrize(su)
            se = matkit.symmetrize(se)
            x = matkit.symmetrize(x)
        out_su[k + 1], out_se[k + 1], out_s[k + 1], out_x[k + 1] = su, se, s, x

    traces = np.einsum("kii->k", out_se)
    return CovarianceTrajectory(
        time=grid,
        nominal_cov=out_su,
        error_cov=out_se,
        cross_cov=out_s,
        state_cov=out_x,
        error_trace_rate=np.gradient(traces, grid),
    )


# ---------------------------------------------------------------------------
# Augmented joint system (error stacked with the replicated true state)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentedJointSystem:
    """Joint dynamics of the stacked error and the replicated true state.

    ``drift`` is upper block triangular (the replicated state does not feed
    back from the error); ``noise_intensity`` is block diagonal with the
    measurement and replicated process intensities.
    """

    drift: np.ndarray
    input_map: np.ndarray
    noise_intensity: np.ndarray
    init_cov: np.ndarray


def build_augmented(
    fr: "FilterRealization",
    ts: TrueSystem,
    nm: NominalModel,
    init: TrajectoryInit | None = None,
) -> AugmentedJointSystem:
    if init is None:
        init = default_initial_state(ts)
    st = stack(ts, nm)
    q_dim = fr.closed_loop.shape[0]
    m_dim = st.r_diag.shape[0]
    drift = np.block([[fr.closed_loop, fr.mismatch_diag], [np.zeros((q_dim, q_dim)), st.a_diag]])
    input_map = np.block(
        [
            [-fr.gain_diag, np.eye(q_dim)],
            [np.zeros((q_dim, m_dim)), np.eye(q_dim)],
        ]
    )
    noise = matkit.block_diag(
        [st.r_diag, matkit.kron(matkit.ones_matrix(ts.sensor_count), ts.q)]
    )
    init_cov = np.block(
        [[init.error_cov, init.cross_cov], [init.cross_cov.T, init.state_cov]]
    )
    return AugmentedJointSystem(
        drift=drift, input_map=input_map, noise_intensity=noise, init_cov=init_cov
    )


def propagate_augmented(
    aug: AugmentedJointSystem, grid: np.ndarray, dt: float = 1e-3
) -> np.ndarray:
    """RK4 propagation of the joint covariance; returns (len(grid), 2q, 2q)."""
    grid = _check_grid(grid)
    dt = stable_step(dt, aug.drift)
    drive = matkit.symmetrize(aug.input_map @ aug.noise_intensity @ aug.input_map.T)
    a = aug.drift
    cov = matkit.symmetrize(np.asarray(aug.init_cov, dtype=float))
    out = np.empty((grid.size,) + cov.shape)
    out[0] = cov

    def rhs(c):
        return a @ c + c @ a.T + drive

    for k in range(grid.size - 1):
        span = grid[k + 1] - grid[k]
        n_sub = max(1, math.ceil(span / dt - 1e-12))
        h = span / n_sub
        for _ in range(n_sub):
            k1 = rhs(cov)
            k2 = rhs(cov + 0.5 * h * k1)
            k3 = rhs(cov + 0.5 * h * k2)
            k4 = rhs(cov + h * k3)
            cov = matkit.symmetrize(cov + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        out[k + 1] = cov
    return out
