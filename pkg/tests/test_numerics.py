import numpy as np
import pytest
from scipy.sparse.linalg import LinearOperator

from topoconv.numerics import (
    ConvergenceError,
    NonHermitianError,
    NumericsError,
    dense_matrix,
    extremal_eigenpair,
    hermitian_eig,
    hermiticity_defect,
    significant_rank,
    svd,
)


def _spread_hermitian(n: int, seed: int = 1) -> np.ndarray:
    """Eigenvalues near 0, 1, ..., n-1: unit gaps keep restarted Lanczos fast."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return np.diag(np.arange(n, dtype=float)) + 0.01 * (x + x.conj().T)


def test_svd_reconstructs_and_orders():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(7, 5)) + 1j * rng.normal(size=(7, 5))
    res = svd(m)
    np.testing.assert_allclose(res.reconstruct(), m, atol=1e-12)
    assert np.all(np.diff(res.s) <= 0)
    assert res.u.shape == (7, 5) and res.vt.shape == (5, 5)
    assert res.rank == 5


def test_svd_rank_of_outer_product():
    a = np.arange(1, 6, dtype=float)
    res = svd(np.outer(a, a))
    assert res.rank == 1
    assert significant_rank(np.zeros(3)) == 0


@pytest.mark.parametrize("bad", [np.array([1.0, 2.0]), np.array([[1.0, np.nan]]), np.zeros((0, 2))])
def test_dense_matrix_rejects_bad_input(bad):
    with pytest.raises(NumericsError):
        dense_matrix(bad)


def test_hermitian_eig_matches_numpy():
    h = _spread_hermitian(20)
    values, vectors = hermitian_eig(h)
    np.testing.assert_allclose(values, np.linalg.eigvalsh(h), atol=1e-12)
    np.testing.assert_allclose(vectors.conj().T @ vectors, np.eye(20), atol=1e-12)


def test_hermitian_eig_rejects_non_hermitian():
    with pytest.raises(NonHermitianError):
        hermitian_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(NumericsError):
        hermitian_eig(np.ones((2, 3)))


def test_lanczos_ground_pair():
    h = _spread_hermitian(200)
    guess = np.ones(200)
    value, vector = extremal_eigenpair(h, guess, tol=1e-9)
    assert value == pytest.approx(np.linalg.eigvalsh(h)[0], abs=1e-9)
    assert np.linalg.norm(h @ vector - value * vector) <= 1e-9
    assert np.linalg.norm(vector) == pytest.approx(1.0)


def test_lanczos_accepts_linear_operator():
    h = _spread_hermitian(50, seed=3)
    op = LinearOperator((50, 50), matvec=lambda v: h @ v, dtype=np.complex128)
    value, _ = extremal_eigenpair(op, np.ones(50), tol=1e-9)
    assert value == pytest.approx(np.linalg.eigvalsh(h)[0], abs=1e-9)


def test_lanczos_small_invariant_subspace():
    # guess spans an exact invariant subspace: breakdown must give the exact answer
    h = np.diag([3.0, -1.0, 2.0, 5.0])
    value, vector = extremal_eigenpair(h, np.array([1.0, 1.0, 0.0, 0.0]))
    assert value == pytest.approx(-1.0)
    assert abs(vector[1]) == pytest.approx(1.0)


def test_lanczos_one_by_one():
    value, vector = extremal_eigenpair(np.array([[2.5]]), np.array([3.0]))
    assert value == pytest.approx(2.5)
    assert vector.shape == (1,)


def test_lanczos_budget_exhausted():
    h = _spread_hermitian(200)
    with pytest.raises(ConvergenceError) as info:
        extremal_eigenpair(h, np.ones(200), tol=1e-14, max_iter=4, krylov_dim=2)
    assert info.value.iterations >= 4
    assert np.isfinite(info.value.best_residual)


def test_lanczos_rejects_bad_guess():
    with pytest.raises(NumericsError):
        extremal_eigenpair(np.eye(3), np.zeros(3))
    with pytest.raises(NumericsError):
        extremal_eigenpair(np.eye(3), np.ones(4))


def test_hermiticity_defect():
    h = _spread_hermitian(10)
    assert hermiticity_defect(h) < 1e-10
    assert hermiticity_defect(np.triu(np.ones((10, 10)))) > 1e-3
