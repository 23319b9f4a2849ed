import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from lightcone.krylov import KrylovInfo, expm_krylov


def random_hermitian(n, rng):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


@pytest.mark.parametrize("n, t", [(5, 0.3), (60, 2.0), (200, 7.5)])
def test_unitary_action_matches_dense(n, t, rng):
    H = random_hermitian(n, rng)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    ref = sla.expm(-1j * t * H) @ v
    got = expm_krylov(sp.csr_matrix(-1j * H), v, t)
    np.testing.assert_allclose(got, ref, atol=1e-10 * np.linalg.norm(v))


def test_non_normal_generator(rng):
    n = 40
    A = rng.normal(size=(n, n)) / np.sqrt(n) - 0.5 * np.eye(n)
    v = rng.normal(size=n)
    np.testing.assert_allclose(expm_krylov(A, v, 3.0), sla.expm(3.0 * A) @ v, atol=1e-10)


def test_happy_breakdown_exact():
    # v lives in a 2-dimensional invariant subspace
    A = np.diag([1.0, -2.0, 0.5, 0.25])
    v = np.array([1.0, 1.0, 0.0, 0.0])
    info = KrylovInfo()
    got = expm_krylov(A, v, 1.5, info=info)
    np.testing.assert_allclose(got, np.exp(1.5 * np.diag(A)) * v, atol=1e-14)
    assert info.steps == 1 and info.rejected == 0


def test_zero_time_and_zero_vector():
    A = np.eye(3)
    v = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(expm_krylov(A, v, 0.0), v)
    np.testing.assert_array_equal(expm_krylov(A, np.zeros(3), 1.0), 0)


def test_norm_preserved_long_time(rng):
    H = random_hermitian(80, rng)
    v = rng.normal(size=80).astype(complex)
    v /= np.linalg.norm(v)
    info = KrylovInfo()
    w = expm_krylov(-1j * H, v, 50.0, info=info)
    assert abs(np.linalg.norm(w) - 1) < 1e-10
    assert info.steps > 1
