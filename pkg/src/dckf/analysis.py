"""Performance analysis: trace bounds, divergence certificates, index ordering.

Everything here evaluates the actual estimation error covariance through
quantities the designer can compute: the nominal performance index, the
Frobenius norms of the parameter deviations, and the spectrum of the
closed-loop matrix.

The trace-gap radius needs two vector norms involving the inverse of the
Kronecker sum of the closed loop with itself.  That matrix is never
materialized: with X solving  acl' X + X acl = I  one has

    || vec(I)' kronsum(acl)^{-1} ||_2            == ||X||_F
    || vec(I)' kronsum(acl)^{-1} (K (x) K) ||_2  == ||K' X K||_F

so a single Lyapunov solve of the closed-loop size provides both factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matkit
from .filtering import (
    FilterRealization,
    _nominal_core,
    build_filter,
    gamma_threshold,
    is_hurwitz,
)
from .graph import Topology
from .model import Deviations, NominalModel, TrueSystem
from .solvers import SteadyStateResult, solve_lyapunov, stable_step

__all__ = [
    "HypothesisError",
    "BoundsReport",
    "deviation_gap",
    "trace_bounds",
    "nominal_trace_floor",
    "AsymptoticFit",
    "asymptotic_fit",
    "DivergenceCertificate",
    "DivergenceReport",
    "divergence_test",
    "RelationReport",
    "relation_analysis",
]


class HypothesisError(ValueError):
    """A theorem hypothesis needed by the requested analysis does not hold."""


def _inverse_vec_norms(closed_loop: np.ndarray, gain_diag: np.ndarray) -> tuple[float, float]:
    """The two trace-gap factors via one Lyapunov solve (see module docstring)."""
    q = closed_loop.shape[0]
    x = solve_lyapunov(closed_loop.T, -np.eye(q))
    plain = float(np.linalg.norm(x))
    weighted = float(np.linalg.norm(gain_diag.T @ x @ gain_diag))
    return plain, weighted


def _gamma_gate(fr: FilterRealization, what: str) -> None:
    if fr.gamma < fr.gamma_ref - 1e-12 * max(1.0, fr.gamma_ref):
        raise HypothesisError(f"{what} requires a consensus gain at or above the reference gain")
    if not is_hurwitz(fr.closed_loop):
        raise HypothesisError(f"{what} requires a Hurwitz closed-loop matrix")


@dataclass(frozen=True)
class BoundsReport:
    """Steady-state trace bounds driven by the deviation norms.

    ``gap`` is the radius around the nominal trace that is guaranteed to
    contain the actual error-covariance trace:
    ``max(0, tr_nominal - gap) <= tr_error <= tr_nominal + gap``.
    ``cross_margin`` / ``state_margin`` are the denominators protecting the
    cross-term and state-moment norm bounds; the report is refused when
    either is numerically zero.
    """

    tr_nominal: float
    tr_error: float
    gap: float
    upper: float
    lower: float
    cross_margin: float
    state_margin: float
    cross_norm_bound: float
    state_norm_bound: float
    tr_nominal_floor: float

    @property
    def sandwich_holds(self) -> bool:
        return self.lower <= self.tr_error <= self.upper


def deviation_gap(
    fr: FilterRealization,
    dev: Deviations,
    plain: float,
    weighted: float,
    margin_variant: str = "dimension",
) -> tuple[float, float, float, float, float]:
    """Trace-gap radius from the deviation norms and the two trace-gap factors.

    ``plain`` and ``weighted`` are the values of the two vector norms from
    the module docstring (exact via a Lyapunov solve, or approximated by
    their asymptotic fit).  Returns
    ``(gap, cross_margin, state_margin, cross_norm_bound, state_norm_bound)``.
    ``margin_variant`` selects the deviation coefficient inside the
    cross-term margin: ``dimension`` uses sqrt(state dim * sensor count)
    (consistent with the bound's derivation and more conservative), while
    ``sensors`` uses sqrt(sensor count).
    """
    nm = fr.nominal
    n, n_sensors = fr.n, fr.sensor_count
    big = n * n_sensors
    a_diag_nom = matkit.kron(np.eye(n_sensors), nm.a)
    d_a_diag_norm = np.sqrt(n_sensors) * dev.d_a_norm

    if margin_variant == "dimension":
        cross_coef = np.sqrt(big)
    elif margin_variant == "sensors":
        cross_coef = np.sqrt(n_sensors)
    else:
        raise ValueError(f"unknown margin variant {margin_variant!r}")

    cross_margin = matkit.kron_sum_fro_norm(fr.closed_loop, a_diag_nom) - cross_coef * d_a_diag_norm
    state_margin = (
        matkit.kron_sum_fro_norm(a_diag_nom, a_diag_nom) - 2.0 * np.sqrt(big) * d_a_diag_norm
    )
    margin_scale = matkit.kron_sum_fro_norm(fr.closed_loop, a_diag_nom)
    if abs(cross_margin) <= 1e-9 * margin_scale or abs(state_margin) <= 1e-9 * margin_scale:
        raise HypothesisError("a norm-bound margin is numerically zero; the bound is undefined")

    q_nom_norm = float(np.linalg.norm(nm.q))
    state_norm_bound = n_sensors * (q_nom_norm + dev.d_q_norm) / abs(state_margin)
    mismatch_norm = float(np.linalg.norm(fr.mismatch_diag))
    cross_norm_bound = (
        np.sqrt(big) * mismatch_norm * state_norm_bound
        + n_sensors * q_nom_norm
        + n_sensors * dev.d_q_norm
    ) / abs(cross_margin)

    meas_dev = np.sqrt(sum(v**2 for v in dev.d_r_norms))
    gap = weighted * meas_dev + plain * (
        n_sensors * dev.d_q_norm + 2.0 * mismatch_norm * cross_norm_bound
    )
    return (
        float(gap),
        float(cross_margin),
        float(state_margin),
        float(cross_norm_bound),
        float(state_norm_bound),
    )


def trace_bounds(
    fr: FilterRealization,
    ss: SteadyStateResult,
    dev: Deviations,
    margin_variant: str = "dimension",
) -> BoundsReport:
    """Bound the steady error-covariance trace around the nominal trace.

    The two trace-gap factors are computed exactly through the Lyapunov
    reformulation; see :func:`deviation_gap` for ``margin_variant``.
    """
    _gamma_gate(fr, "trace bound")
    plain, weighted = _inverse_vec_norms(fr.closed_loop, fr.gain_diag)
    gap, cross_margin, state_margin, cross_norm_bound, state_norm_bound = deviation_gap(
        fr, dev, plain, weighted, margin_variant
    )

    tr_nominal = float(np.trace(ss.nominal_cov))
    tr_error = float(np.trace(ss.error_cov))
    return BoundsReport(
        tr_nominal=tr_nominal,
        tr_error=tr_error,
        gap=float(gap),
        upper=tr_nominal + float(gap),
        lower=max(0.0, tr_nominal - float(gap)),
        cross_margin=float(cross_margin),
        state_margin=float(state_margin),
        cross_norm_bound=float(cross_norm_bound),
        state_norm_bound=float(state_norm_bound),
        tr_nominal_floor=nominal_trace_floor(fr, fr.nominal),
    )


def nominal_trace_floor(fr: FilterRealization, nm: NominalModel) -> float:
    """Lower bound on the steady nominal-index trace.

    The bound separates the consensus gain: the denominator grows linearly
    in (gamma - gamma_ref), so the floor decays to zero as the gain grows.
    """
    _gamma_gate(fr, "nominal trace floor")
    r_diag_nom = matkit.block_diag([s.r for s in nm.sensors])
    drive_trace = float(
        np.trace(fr.gain_diag @ r_diag_nom @ fr.gain_diag.T)
    ) + fr.sensor_count * float(np.trace(nm.q))
    denom = 2.0 * float(np.trace(-fr.closed_loop_ref)) + 2.0 * (
        fr.gamma - fr.gamma_ref
    ) * float(np.trace(fr.lap)) * float(np.trace(fr.p_inf))
    return drive_trace / denom


@dataclass(frozen=True)
class AsymptoticFit:
    """Least-squares fit of the squared trace-gap factors against the gain.

    Both squared factors follow ``a + b/gamma + c/gamma^2`` up to a cubic
    remainder, with positive ``a`` and ``b``.  ``fit_residual`` is ``1 - R^2``
    of the plain-factor fit, ``fit_residual_gain`` of the gain-weighted one.
    """

    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    c2: float
    fit_residual: float
    fit_residual_gain: float

    @property
    def plain_positive(self) -> bool:
        """Leading and first-order coefficients of the plain factor are positive."""
        return self.a1 > 0 and self.b1 > 0

    @property
    def gain_positive(self) -> bool:
        return self.a2 > 0 and self.b2 > 0


def asymptotic_fit(nm: NominalModel, topo: Topology, gamma_grid) -> AsymptoticFit:
    """Fit the squared trace-gap factors to a + b/g + c/g^2 over a gain grid."""
    grid = np.asarray(gamma_grid, dtype=float)
    if grid.size < 6:
        raise ValueError("the fit needs at least 6 gain values")
    if grid.max() / grid.min() < 10.0:
        raise ValueError("the gain grid must span at least one decade")
    core = _nominal_core(nm, topo)
    threshold = gamma_threshold(nm, topo, p_inf=core.p_inf)
    if np.any(grid <= threshold):
        raise ValueError("every gain in the grid must exceed the Hurwitz threshold")

    coupling = matkit.kron(core.lap, core.p_inf)
    y_plain = np.empty(grid.size)
    y_gain = np.empty(grid.size)
    for k, g in enumerate(np.sort(grid)):
        acl = core.feedback_diag - g * coupling
        if not is_hurwitz(acl):
            raise HypothesisError(f"closed loop is not Hurwitz at gain {g:.6g}")
        plain, weighted = _inverse_vec_norms(acl, core.gain_diag)
        y_plain[k] = plain**2
        y_gain[k] = weighted**2

    g_sorted = np.sort(grid)
    design = np.column_stack([np.ones_like(g_sorted), 1.0 / g_sorted, 1.0 / g_sorted**2])

    def fit(y):
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        pred = design @ coef
        ss_res = float(np.sum((y - pred) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        return coef, ss_res / ss_tot if ss_tot > 0 else 0.0

    coef1, resid1 = fit(y_plain)
    coef2, resid2 = fit(y_gain)
    return AsymptoticFit(
        a1=float(coef1[0]),
        b1=float(coef1[1]),
        c1=float(coef1[2]),
        a2=float(coef2[0]),
        b2=float(coef2[1]),
        c2=float(coef2[2]),
        fit_residual=resid1,
        fit_residual_gain=resid2,
    )


# ---------------------------------------------------------------------------
# Divergence certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DivergenceCertificate:
    """A neutral mode the nominal noise model is blind to.

    ``freq`` is the imaginary part of the neutral eigenvalue of the nominal
    state matrix (transposed); ``vector`` the associated unit eigenvector
    (complex in general).  ``aug_residual`` certifies that the replicated
    vector is an eigenvector of the stacked closed loop.  ``will_diverge``
    records whether the true process noise actually excites the mode, in
    which case the projected error variance grows linearly at
    ``growth_rate`` per unit time.
    """

    freq: float
    vector: np.ndarray
    aug_residual: float
    q_nominal_residual: float
    will_diverge: bool
    growth_rate: float


@dataclass(frozen=True)
class DivergenceReport:
    certificates: tuple[DivergenceCertificate, ...]
    mismatch_zero: bool
    gamma: float

    @property
    def any_divergence(self) -> bool:
        return any(c.will_diverge for c in self.certificates)


def _canonical_phase(e: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(e)))
    pivot = e[idx]
    e = e * (np.conj(pivot) / abs(pivot))
    e = e / np.linalg.norm(e)
    if np.linalg.norm(e.imag) <= 1e-12:
        e = e.real.astype(complex)
    return e


def divergence_test(
    nm: NominalModel,
    ts: TrueSystem,
    topo: Topology,
    gamma: float,
) -> DivergenceReport:
    """Search for neutral modes that defeat the nominal noise model.

    Certificates pair an imaginary-axis eigenvalue of the transposed nominal
    state matrix with an eigenvector in the null space of the nominal
    process noise.  Each is verified against the stacked closed loop built
    at ``gamma``; conjugate pairs are reported once with nonnegative
    frequency.  An empty certificate list means this criterion detects no
    divergence.
    """
    fr = build_filter(nm, ts, topo, gamma)
    a_scale = max(np.linalg.norm(nm.a, 2), 1e-300)
    q_nom_scale = max(np.linalg.norm(nm.q, 2), 1e-300)
    q_true_scale = max(np.linalg.norm(ts.q, 2), 1e-300)
    w, v = np.linalg.eig(nm.a.T)

    candidates: list[tuple[float, np.ndarray, float]] = []
    for k in range(w.size):
        if abs(w[k].real) > 1e-8 * a_scale or w[k].imag < -1e-8 * a_scale:
            continue
        e = _canonical_phase(v[:, k])
        q_resid = float(np.linalg.norm(nm.q @ e))
        if q_resid > 1e-8 * q_nom_scale:
            continue
        freq = max(float(w[k].imag), 0.0)
        if any(
            abs(freq - f0) <= 1e-8 * (1.0 + a_scale) and abs(np.vdot(e0, e)) > 1.0 - 1e-8
            for f0, e0, _ in candidates
        ):
            continue
        candidates.append((freq, e, q_resid))

    n_sensors = ts.sensor_count
    ones = np.ones(n_sensors)
    certificates = []
    for freq, e, q_resid in candidates:
        stacked = np.kron(ones, e)
        resid = float(
            np.linalg.norm(fr.closed_loop.T @ stacked - 1j * freq * stacked)
        )
        excitation = float((np.conj(e) @ ts.q @ e).real)
        will_diverge = bool(np.linalg.norm(ts.q @ e) > 1e-8 * q_true_scale)
        certificates.append(
            DivergenceCertificate(
                freq=freq,
                vector=e,
                aug_residual=resid,
                q_nominal_residual=q_resid,
                will_diverge=will_diverge,
                growth_rate=n_sensors**2 * excitation,
            )
        )
    return DivergenceReport(
        certificates=tuple(certificates),
        mismatch_zero=fr.mismatch_is_zero,
        gamma=float(gamma),
    )


# ---------------------------------------------------------------------------
# Ordering of the nominal index against the error covariance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelationReport:
    """Evolution of the gap between the nominal index and the error covariance.

    ``mismatch_drive`` is the constant matrix forcing the gap dynamics
    (gain-weighted measurement-noise deviation plus the replicated
    process-noise deviation); its sign classification decides whether the
    nominal index brackets the error covariance from above or below.
    ``gap`` holds the integrated gap trajectory, ``gap_closed`` the exact
    closed-form evaluation, and ``gap_norm_bound`` the spectral-norm bound
    from the reference-gain logarithmic norm (the consensus gain above the
    reference has no effect on it).
    """

    time: np.ndarray
    mismatch_drive: np.ndarray
    drive_sign: str
    gap: np.ndarray
    gap_closed: np.ndarray
    gap_min_eig: np.ndarray
    gap_norm: np.ndarray
    gap_norm_bound: np.ndarray
    log_norm_rate: float
    coupling_log_norm: float
    ordering: str


def _classify_sign(m: np.ndarray) -> str:
    scale = float(np.linalg.norm(m, 2))
    if scale == 0.0:
        return "zero"
    w = np.linalg.eigvalsh(matkit.symmetrize(m))
    tol = 1e-10 * scale
    if w[0] >= -tol and w[-1] <= tol:
        return "zero"
    if w[0] >= -tol:
        return "psd"
    if w[-1] <= tol:
        return "nsd"
    return "indefinite"


def relation_analysis(
    fr: FilterRealization,
    dev: Deviations,
    gap_init: np.ndarray,
    grid,
    dt: float = 1e-3,
    psd_tol: float = 1e-8,
) -> RelationReport:
    """Analyze the gap (nominal index minus error covariance) over time.

    Requires exact state and measurement matrices (only the noise
    intensities may deviate).  The gap obeys a Lyapunov-type ODE driven by
    the constant mismatch-drive matrix; the closed-form solution is
    evaluated per grid point through the matrix exponential and one
    Lyapunov solve.
    """
    if not dev.state_matrix_exact:
        raise HypothesisError(
            "relation analysis assumes exact state and measurement matrices "
            "(only noise-intensity deviations allowed)"
        )
    _gamma_gate(fr, "relation analysis")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be 1-D and strictly increasing")

    d_r_diag = matkit.block_diag(list(dev.d_r))
    drive = matkit.symmetrize(
        fr.gain_diag @ d_r_diag @ fr.gain_diag.T
        + matkit.kron(matkit.ones_matrix(fr.sensor_count), dev.d_q)
    )
    acl = fr.closed_loop
    gap = matkit.symmetrize(np.asarray(gap_init, dtype=float))
    if gap.shape != acl.shape:
        raise ValueError(f"gap_init must be {acl.shape[0]}x{acl.shape[0]}, got {gap.shape}")
    dt = stable_step(dt, acl)

    # Fixed-step RK4 on the gap ODE.
    out = np.empty((grid.size,) + gap.shape)
    out[0] = gap
    current = gap.copy()
    for k in range(grid.size - 1):
        span = grid[k + 1] - grid[k]
        n_sub = max(1, int(np.ceil(span / dt - 1e-12)))
        h = span / n_sub
        for _ in range(n_sub):
            k1 = acl @ current + current @ acl.T + drive
            m2 = current + 0.5 * h * k1
            k2 = acl @ m2 + m2 @ acl.T + drive
            m3 = current + 0.5 * h * k2
            k3 = acl @ m3 + m3 @ acl.T + drive
            m4 = current + h * k3
            k4 = acl @ m4 + m4 @ acl.T + drive
            current = matkit.symmetrize(
                current + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            )
        out[k + 1] = current

    # Closed form: with Z solving acl Z + Z acl' + drive = 0, the forced
    # response over [t0, t] is Z - e^{acl dt} Z e^{acl' dt}.
    z_inf = solve_lyapunov(acl, drive)
    closed = np.empty_like(out)
    for k, t in enumerate(grid):
        phi = matkit.expm(acl * (t - grid[0]))
        closed[k] = matkit.symmetrize(phi @ (gap - z_inf) @ phi.T + z_inf)

    min_eigs = np.array([np.linalg.eigvalsh(m)[0] for m in out])
    norms = np.array([np.linalg.norm(m, 2) for m in out])

    rate = matkit.log_norm(fr.closed_loop_ref, "two") + matkit.log_norm(
        fr.closed_loop_ref.T, "two"
    )
    coupling = -(fr.gamma - fr.gamma_ref) * matkit.kron(fr.lap, fr.p_inf)
    coupling_log_norm = matkit.log_norm(coupling, "two")
    delta_t = grid - grid[0]
    drive_norm = float(np.linalg.norm(drive, 2))
    init_norm = float(np.linalg.norm(gap, 2))
    if abs(rate) > 1e-14:
        integral = (np.exp(rate * delta_t) - 1.0) / rate
    else:
        integral = delta_t.copy()
    bound = init_norm * np.exp(rate * delta_t) + drive_norm * integral

    sign = _classify_sign(drive)
    init_sign = _classify_sign(gap)
    scale = max(np.max(norms), 1.0)
    if sign in ("psd", "zero") and init_sign in ("psd", "zero"):
        ordering = "nominal_upper" if np.all(min_eigs >= -psd_tol * scale) else "violated"
    elif sign in ("nsd", "zero") and init_sign in ("nsd", "zero"):
        max_eigs = np.array([np.linalg.eigvalsh(m)[-1] for m in out])
        ordering = "nominal_lower" if np.all(max_eigs <= psd_tol * scale) else "violated"
    else:
        ordering = "inconclusive"

    return RelationReport(
        time=grid,
        mismatch_drive=drive,
        drive_sign=sign,
        gap=out,
        gap_closed=closed,
        gap_min_eig=min_eigs,
        gap_norm=norms,
        gap_norm_bound=bound,
        log_norm_rate=float(rate),
        coupling_log_norm=float(coupling_log_norm),
        ordering=ordering,
    )
