"""Dense real-matrix kernels shared by every other module.

All functions operate on plain ``numpy.ndarray`` inputs and never mutate
them.  Vectorization follows the column-major convention, so the identity
``vec(X @ Y @ Z) == kron(Z.T, X) @ vec(Y)`` holds exactly.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
import scipy.linalg

LogNormKind = Literal["one", "two", "inf"]

__all__ = [
    "kron",
    "vec",
    "unvec",
    "log_norm",
    "spectral_abscissa",
    "expm",
    "sqrtm_psd",
    "symmetrize",
    "is_symmetric",
    "block_diag",
    "ones_matrix",
    "kron_sum_fro_norm",
    "eigh_psd_inverse",
]


def _as_square(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got shape {a.shape}")
    return a


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with block (i, j) equal to ``a[i, j] * b``."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def vec(a: np.ndarray) -> np.ndarray:
    """Stack the columns of ``a`` into one vector (column-major order)."""
    return np.asarray(a, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec` for a ``rows x cols`` target."""
    v = np.asarray(v, dtype=float)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape {v.size} entries into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def log_norm(a: np.ndarray, kind: LogNormKind = "two") -> float:
    """Logarithmic norm (matrix measure) of a square matrix.

    ``one``  : max over columns of (diagonal entry + off-diagonal abs sum)
    ``two``  : largest eigenvalue of the symmetric part (A + A.T) / 2
    ``inf``  : max over rows of (diagonal entry + off-diagonal abs sum)

    For every t >= 0 the induced norm satisfies
    ``norm(expm(t * a)) <= exp(t * log_norm(a))``.
    """
    a = _as_square(a)
    if kind == "two":
        return float(np.linalg.eigvalsh(0.5 * (a + a.T))[-1])
    absd = np.abs(a) - np.diag(np.abs(np.diag(a)))  # off-diagonal magnitudes
    if kind == "one":
        return float(np.max(np.diag(a) + absd.sum(axis=0)))
    if kind == "inf":
        return float(np.max(np.diag(a) + absd.sum(axis=1)))
    raise ValueError(f"unknown logarithmic norm kind: {kind!r}")


def spectral_abscissa(a: np.ndarray) -> float:
    """Largest real part over the eigenvalues of ``a``."""
    a = _as_square(a)
    return float(np.max(np.linalg.eigvals(a).real))


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring with Pade approximation)."""
    return scipy.linalg.expm(_as_square(a))


def symmetrize(a: np.ndarray) -> np.ndarray:
    """(a + a.T) / 2."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def is_symmetric(a: np.ndarray, rtol: float = 1e-10) -> bool:
    a = np.asarray(a, dtype=float)
    scale = np.linalg.norm(a)
    return bool(np.linalg.norm(a - a.T) <= rtol * max(scale, 1.0))


def sqrtm_psd(a: np.ndarray, neg_rtol: float = 1e-10) -> np.ndarray:
    """Symmetric PSD square root of a symmetric PSD matrix.

    Eigenvalues below ``-neg_rtol * max_eigenvalue`` raise; small negative
    eigenvalues due to round-off are clipped to zero.
    """
    a = _as_square(a)
    if not is_symmetric(a, rtol=1e-8):
        raise ValueError("sqrtm_psd expects a (numerically) symmetric matrix")
    w, v = np.linalg.eigh(symmetrize(a))
    floor = -neg_rtol * max(w[-1], 0.0) - 1e-300
    if w[0] < floor:
        raise ValueError(f"matrix is not PSD: min eigenvalue {w[0]:.3e}")
    root = v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return symmetrize(root)


def block_diag(blocks: list[np.ndarray] | tuple[np.ndarray, ...]) -> np.ndarray:
    """Block-diagonal assembly of 2-D arrays."""
    return scipy.linalg.block_diag(*[np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks])


def ones_matrix(n: int) -> np.ndarray:
    """The rank-one all-ones matrix 1 @ 1.T of size n x n."""
    return np.ones((n, n))


def kron_sum_fro_norm(m: np.ndarray, p: np.ndarray) -> float:
    """Frobenius norm of ``kron(I, m) + kron(p, I)`` without materializing it.

    Both factors must be square of the same size q; the identity blocks are
    q x q as well.  Expanding the trace gives
    ``q * (||m||_F^2 + ||p||_F^2) + 2 * tr(m) * tr(p)``.
    """
    m = _as_square(m, "m")
    p = _as_square(p, "p")
    if m.shape != p.shape:
        raise ValueError("kron_sum_fro_norm requires same-size square factors")
    q = m.shape[0]
    total = q * (np.linalg.norm(m) ** 2 + np.linalg.norm(p) ** 2)
    total += 2.0 * np.trace(m) * np.trace(p)
    return float(np.sqrt(total))


def eigh_psd_inverse(a: np.ndarray, cond_rtol: float = 1e-12) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via eigendecomposition."""
    a = _as_square(a)
    w, v = np.linalg.eigh(symmetrize(a))
    if w[0] <= cond_rtol * w[-1] or w[-1] <= 0.0:
        raise np.linalg.LinAlgError(
            f"matrix is singular or not positive definite (eigenvalues in [{w[0]:.3e}, {w[-1]:.3e}])"
        )
    return (v / w) @ v.T
