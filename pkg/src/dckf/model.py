"""True system and nominal model declarations, deviations, assumption checks.

The true system is the plant that generates data; the nominal model is what
the filter designer believes.  Deviations are nominal minus actual.  The
assumption report collects the structural conditions the analysis relies on:
a connected undirected network, observability of the nominal pair,
controllability of the nominal state/noise pair, and (when the mismatch
feedthrough is nonzero) stability of the true state matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matkit
from .graph import Topology, is_connected

__all__ = [
    "Sensor",
    "TrueSystem",
    "NominalModel",
    "Deviations",
    "StackedMatrices",
    "AssumptionReport",
    "deviations",
    "stack",
    "validate_assumptions",
    "observability_matrix",
    "controllability_matrix",
]


def _check_square(name: str, a: np.ndarray, n: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise ValueError(f"{name} must be {n}x{n}, got {a.shape[0]}x{a.shape[0]}")
    return a


def _check_psd(name: str, a: np.ndarray, strict: bool = False) -> np.ndarray:
    if not matkit.is_symmetric(a, rtol=1e-8):
        raise ValueError(f"{name} must be symmetric")
    w = np.linalg.eigvalsh(matkit.symmetrize(a))
    scale = max(abs(w[-1]), 1.0)
    if strict and w[0] <= 1e-12 * scale:
        raise ValueError(f"{name} must be positive definite (min eigenvalue {w[0]:.3e})")
    if not strict and w[0] < -1e-10 * scale:
        raise ValueError(f"{name} must be positive semidefinite (min eigenvalue {w[0]:.3e})")
    return np.asarray(a, dtype=float)


@dataclass(frozen=True)
class Sensor:
    """One sensor: measurement matrix ``c`` (m x n) and noise intensity ``r`` (m x m, PD)."""

    c: np.ndarray
    r: np.ndarray

    def __post_init__(self) -> None:
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        r = np.atleast_2d(np.asarray(self.r, dtype=float))
        if r.shape[0] != r.shape[1] or r.shape[0] != c.shape[0]:
            raise ValueError(f"sensor dimensions inconsistent: c {c.shape}, r {r.shape}")
        _check_psd("sensor noise intensity", r, strict=True)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "r", r)

    @property
    def m(self) -> int:
        return self.c.shape[0]


def _validate_sensor_model(a, q, sensors, what: str):
    a = _check_square(f"{what} state matrix", a)
    n = a.shape[0]
    q = _check_psd(f"{what} process noise intensity", _check_square(f"{what} process noise", q, n))
    sensors = tuple(s if isinstance(s, Sensor) else Sensor(*s) for s in sensors)
    if not sensors:
        raise ValueError(f"{what} needs at least one sensor")
    for k, s in enumerate(sensors):
        if s.c.shape[1] != n:
            raise ValueError(f"{what} sensor {k}: c has {s.c.shape[1]} columns, state dim is {n}")
    return a, q, sensors


@dataclass(frozen=True)
class TrueSystem:
    """Actual dynamics, noise intensities, per-sensor models, initial moments."""

    a: np.ndarray
    q: np.ndarray
    sensors: tuple[Sensor, ...]
    x0: np.ndarray
    sigma0: np.ndarray

    def __post_init__(self) -> None:
        a, q, sensors = _validate_sensor_model(self.a, self.q, self.sensors, "true system")
        n = a.shape[0]
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.size != n:
            raise ValueError(f"x0 has {x0.size} entries, state dim is {n}")
        sigma0 = _check_psd("initial covariance", _check_square("initial covariance", self.sigma0, n))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "sigma0", sigma0)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def sensor_count(self) -> int:
        return len(self.sensors)


@dataclass(frozen=True)
class NominalModel:
    """The filter designer's (possibly wrong) parameters."""

    a: np.ndarray
    q: np.ndarray
    sensors: tuple[Sensor, ...]

    def __post_init__(self) -> None:
        a, q, sensors = _validate_sensor_model(self.a, self.q, self.sensors, "nominal model")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "sensors", sensors)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def sensor_count(self) -> int:
        return len(self.sensors)


def _check_pair(ts: TrueSystem, nm: NominalModel) -> None:
    if nm.n != ts.n:
        raise ValueError(f"state dimensions differ: true {ts.n}, nominal {nm.n}")
    if nm.sensor_count != ts.sensor_count:
        raise ValueError(
            f"sensor counts differ: true {ts.sensor_count}, nominal {nm.sensor_count}"
        )
    for k, (st, sn) in enumerate(zip(ts.sensors, nm.sensors)):
        if st.c.shape != sn.c.shape:
            raise ValueError(f"sensor {k}: measurement shapes differ {st.c.shape} vs {sn.c.shape}")


@dataclass(frozen=True)
class Deviations:
    """Componentwise nominal-minus-actual differences with Frobenius norms."""

    d_a: np.ndarray
    d_c: tuple[np.ndarray, ...]
    d_q: np.ndarray
    d_r: tuple[np.ndarray, ...]

    @property
    def d_a_norm(self) -> float:
        return float(np.linalg.norm(self.d_a))

    @property
    def d_c_norms(self) -> tuple[float, ...]:
        return tuple(float(np.linalg.norm(d)) for d in self.d_c)

    @property
    def d_q_norm(self) -> float:
        return float(np.linalg.norm(self.d_q))

    @property
    def d_r_norms(self) -> tuple[float, ...]:
        return tuple(float(np.linalg.norm(d)) for d in self.d_r)

    @property
    def state_matrix_exact(self) -> bool:
        return self.d_a_norm == 0.0 and all(v == 0.0 for v in self.d_c_norms)


def deviations(ts: TrueSystem, nm: NominalModel) -> Deviations:
    """Nominal minus actual for the state matrix, sensors, and noise intensities."""
    _check_pair(ts, nm)
    return Deviations(
        d_a=nm.a - ts.a,
        d_c=tuple(sn.c - st.c for st, sn in zip(ts.sensors, nm.sensors)),
        d_q=nm.q - ts.q,
        d_r=tuple(sn.r - st.r for st, sn in zip(ts.sensors, nm.sensors)),
    )


@dataclass(frozen=True)
class StackedMatrices:
    """Stacked/block-diagonal forms for the sensor network.

    ``c_stack``   : all measurement matrices stacked vertically (sum m_i rows)
    ``c_diag``    : block diagonal of the measurement matrices
    ``r_diag``    : block diagonal of the measurement noise intensities
    ``a_diag``    : kron(I_N, A)

    Fields with the ``_nom`` suffix hold the nominal counterparts.
    """

    c_stack: np.ndarray
    c_diag: np.ndarray
    r_diag: np.ndarray
    a_diag: np.ndarray
    c_stack_nom: np.ndarray
    c_diag_nom: np.ndarray
    r_diag_nom: np.ndarray
    a_diag_nom: np.ndarray


def stack(ts: TrueSystem, nm: NominalModel) -> StackedMatrices:
    _check_pair(ts, nm)
    eye_n = np.eye(ts.sensor_count)
    return StackedMatrices(
        c_stack=np.vstack([s.c for s in ts.sensors]),
        c_diag=matkit.block_diag([s.c for s in ts.sensors]),
        r_diag=matkit.block_diag([s.r for s in ts.sensors]),
        a_diag=matkit.kron(eye_n, ts.a),
        c_stack_nom=np.vstack([s.c for s in nm.sensors]),
        c_diag_nom=matkit.block_diag([s.c for s in nm.sensors]),
        r_diag_nom=matkit.block_diag([s.r for s in nm.sensors]),
        a_diag_nom=matkit.kron(eye_n, nm.a),
    )


def observability_matrix(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """[C; CA; ...; CA^(n-1)] stacked."""
    n = a.shape[0]
    blocks = [c]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ a)
    return np.vstack(blocks)


def controllability_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[B, AB, ..., A^(n-1)B] side by side."""
    n = a.shape[0]
    blocks = [b]
    for _ in range(n - 1):
        blocks.append(a @ blocks[-1])
    return np.hstack(blocks)


def _full_rank(m: np.ndarray, n: int, rtol: float = 1e-9) -> bool:
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return False
    return int(np.sum(s > rtol * s[0])) >= n


@dataclass(frozen=True)
class AssumptionReport:
    """Per-assumption verdicts for one (true system, nominal model, topology) triple."""

    connected: bool
    observable: bool
    controllable: bool
    mismatch_zero: bool
    true_a_hurwitz: bool

    @property
    def network_ok(self) -> bool:
        return self.connected

    @property
    def nominal_ok(self) -> bool:
        return self.observable and self.controllable

    @property
    def mismatch_ok(self) -> bool:
        # With zero mismatch feedthrough no condition on the true A is needed;
        # otherwise the true A must be Hurwitz for steady-state indices to exist.
        return self.mismatch_zero or self.true_a_hurwitz

    @property
    def all_ok(self) -> bool:
        return self.network_ok and self.nominal_ok and self.mismatch_ok

    def failures(self) -> list[str]:
        out = []
        if not self.connected:
            out.append("network is not connected")
        if not self.observable:
            out.append("nominal pair (A, stacked C) is not observable")
        if not self.controllable:
            out.append("nominal pair (A, Q^(1/2)) is not controllable")
        if not self.mismatch_ok:
            out.append("mismatch feedthrough is nonzero and the true A is not Hurwitz")
        return out


def validate_assumptions(
    ts: TrueSystem,
    nm: NominalModel,
    topo: Topology,
    mismatch_diag: np.ndarray,
) -> AssumptionReport:
    """Evaluate the structural assumptions of the mismatch analysis.

    ``mismatch_diag`` is the block-diagonal mismatch feedthrough of the built
    filter (zero exactly when the state and measurement matrices are exact).
    Rank checks use a relative singular-value cutoff of 1e-9.
    """
    _check_pair(ts, nm)
    if topo.node_count != ts.sensor_count:
        raise ValueError(
            f"topology has {topo.node_count} nodes but the system has {ts.sensor_count} sensors"
        )
    st = stack(ts, nm)
    n = nm.n
    observable = _full_rank(observability_matrix(nm.a, st.c_stack_nom), n)
    controllable = _full_rank(controllability_matrix(nm.a, matkit.sqrtm_psd(nm.q)), n)
    f = np.asarray(mismatch_diag, dtype=float)
    mismatch_zero = bool(np.linalg.norm(f) <= 1e-12 * max(1.0, np.linalg.norm(nm.a)))
    alpha = matkit.spectral_abscissa(ts.a)
    hurwitz = alpha < -1e-9 * max(np.linalg.norm(ts.a, 2), 1e-300)
    return AssumptionReport(
        connected=is_connected(topo),
        observable=observable,
        controllable=controllable,
        mismatch_zero=mismatch_zero,
        true_a_hurwitz=bool(hurwitz),
    )
