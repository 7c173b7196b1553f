import numpy as np
import pytest

from dckf import matkit


def test_kron_identity_blocks():
    assert np.array_equal(matkit.kron(np.eye(2), np.eye(3)), np.eye(6))


def test_kron_rank_one_by_scalar():
    ones = np.ones((2, 2))
    assert np.array_equal(matkit.kron(ones, np.array([[5.0]])), 5.0 * np.ones((2, 2)))


def test_kron_vec_identity_random():
    rng = np.random.default_rng(7)
    for _ in range(20):
        x, y, z = (rng.standard_normal((2, 2)) for _ in range(3))
        direct = matkit.vec(x @ y @ z)
        via_kron = matkit.kron(z.T, x) @ matkit.vec(y)
        np.testing.assert_allclose(via_kron, direct, atol=1e-12)


def test_kron_vec_identity_rectangular():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 3))
    y = rng.standard_normal((3, 4))
    z = rng.standard_normal((4, 5))
    np.testing.assert_allclose(
        matkit.kron(z.T, x) @ matkit.vec(y), matkit.vec(x @ y @ z), atol=1e-12
    )


def test_vec_definition_and_zero():
    np.testing.assert_array_equal(
        matkit.vec(np.array([[1.0, 3.0], [2.0, 4.0]])), [1.0, 2.0, 3.0, 4.0]
    )
    np.testing.assert_array_equal(matkit.vec(np.zeros((2, 3))), np.zeros(6))


def test_vec_norm_matches_frobenius():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 3))
    # Independent evaluation of both sides.
    frob = np.sqrt(np.sum(a * a))
    assert np.linalg.norm(matkit.vec(a)) == pytest.approx(frob, rel=1e-14)


def test_unvec_round_trip():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((3, 5))
    assert np.array_equal(matkit.unvec(matkit.vec(a), 3, 5), a)


def test_log_norm_values():
    assert matkit.log_norm(-np.eye(2), "two") == pytest.approx(-1.0)
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert matkit.log_norm(rot, "two") == pytest.approx(0.0, abs=1e-14)
    tri = np.array([[-2.0, 1.0], [0.0, -1.0]])
    assert matkit.log_norm(tri, "one") == pytest.approx(0.0, abs=1e-14)
    assert matkit.log_norm(tri, "inf") == pytest.approx(-1.0)


def test_log_norm_rejects_non_square():
    with pytest.raises(ValueError):
        matkit.log_norm(np.ones((2, 3)), "two")


def test_log_norm_scaling_and_subadditivity():
    rng = np.random.default_rng(11)
    for kind in ("one", "two", "inf"):
        for _ in range(25):
            a = rng.standard_normal((4, 4))
            b = rng.standard_normal((4, 4))
            gamma = float(rng.uniform(0.1, 5.0))
            assert matkit.log_norm(gamma * a, kind) == pytest.approx(
                gamma * matkit.log_norm(a, kind), rel=1e-10, abs=1e-12
            )
            assert matkit.log_norm(a + b, kind) <= (
                matkit.log_norm(a, kind) + matkit.log_norm(b, kind) + 1e-10
            )


def test_log_norm_bounds_exponential_growth():
    rng = np.random.default_rng(12)
    for _ in range(10):
        a = rng.standard_normal((4, 4))
        a -= (matkit.spectral_abscissa(a) + 0.5) * np.eye(4)  # make it stable
        mu = matkit.log_norm(a, "two")
        for t in np.arange(0.1, 5.01, 0.7):
            assert np.linalg.norm(matkit.expm(t * a), 2) <= np.exp(t * mu) * (1 + 1e-10)


def test_spectral_abscissa():
    assert matkit.spectral_abscissa(-np.eye(3)) == pytest.approx(-1.0)
    assert matkit.spectral_abscissa(np.array([[0.0, 1.0], [-1.0, 0.0]])) == pytest.approx(
        0.0, abs=1e-14
    )
    assert matkit.spectral_abscissa(np.diag([-1.0, -2.0])) == pytest.approx(-1.0)


def test_expm_identity_and_diagonal():
    np.testing.assert_allclose(matkit.expm(np.zeros((3, 3))), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(
        matkit.expm(np.diag([1.0, 2.0])), np.diag([np.e, np.e**2]), rtol=1e-12
    )


def test_expm_inverse_pair():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((4, 4))
    np.testing.assert_allclose(matkit.expm(a) @ matkit.expm(-a), np.eye(4), atol=1e-10)


def test_expm_derivative_finite_difference():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((3, 3))
    h = 1e-6
    fd = (matkit.expm(h * a) - matkit.expm(-h * a)) / (2 * h)
    np.testing.assert_allclose(fd, a, atol=1e-6)


def test_sqrtm_psd_values():
    np.testing.assert_allclose(matkit.sqrtm_psd(np.eye(4)), np.eye(4), atol=1e-14)
    np.testing.assert_allclose(
        matkit.sqrtm_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14
    )


def test_sqrtm_psd_multiply_back():
    rng = np.random.default_rng(9)
    m = rng.standard_normal((4, 4))
    a = m.T @ m
    r = matkit.sqrtm_psd(a)
    assert np.linalg.norm(r @ r - a) <= 1e-10 * np.linalg.norm(a)
    assert matkit.is_symmetric(r)


def test_sqrtm_psd_rejects_indefinite():
    with pytest.raises(ValueError):
        matkit.sqrtm_psd(np.diag([1.0, -1.0]))


def test_spectral_norm_below_frobenius():
    rng = np.random.default_rng(10)
    for _ in range(25):
        a = rng.standard_normal((4, 5))
        assert np.linalg.norm(a, 2) <= np.linalg.norm(a) + 1e-12


def test_trace_inequalities_positive_matrices():
    rng = np.random.default_rng(13)
    for _ in range(25):
        m = rng.standard_normal((4, 4))
        a = m.T @ m + 0.5 * np.eye(4)  # PD
        w = rng.standard_normal((4, 4))
        b = w.T @ w  # PSD
        tr_ab = np.trace(a @ b)
        assert tr_ab <= np.trace(a) * np.linalg.norm(b, 2) + 1e-10
        assert np.trace(a) * np.linalg.norm(b, 2) <= np.trace(a) * np.trace(b) + 1e-10
        tr_inv = np.trace(np.linalg.inv(a) @ b)
        assert tr_inv >= np.trace(b) / np.trace(a) - 1e-10


def test_kron_sum_fro_norm_matches_explicit():
    rng = np.random.default_rng(14)
    for _ in range(10):
        m = rng.standard_normal((4, 4))
        p = rng.standard_normal((4, 4))
        explicit = np.linalg.norm(np.kron(np.eye(4), m) + np.kron(p, np.eye(4)))
        assert matkit.kron_sum_fro_norm(m, p) == pytest.approx(explicit, rel=1e-12)


def test_eigh_psd_inverse():
    rng = np.random.default_rng(15)
    m = rng.standard_normal((5, 5))
    a = m.T @ m + np.eye(5)
    np.testing.assert_allclose(matkit.eigh_psd_inverse(a) @ a, np.eye(5), atol=1e-10)
    with pytest.raises(np.linalg.LinAlgError):
        matkit.eigh_psd_inverse(np.diag([1.0, 0.0]))
