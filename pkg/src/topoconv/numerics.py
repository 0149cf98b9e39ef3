"""Dense linear algebra: SVD, Hermitian eigendecomposition, Lanczos ground pair."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, aslinearoperator

log = logging.getLogger("topoconv")

HERMITIAN_TOL = 1e-9
RANK_CUTOFF = 1e-14  # relative to s_max
KRYLOV_DIM = 30
BREAKDOWN_TOL = 1e-12


class NumericsError(Exception):
    """Raised when a dense linear-algebra routine fails."""


class NonHermitianError(NumericsError):
    """Raised when a matrix expected to be Hermitian is not."""


class ConvergenceError(NumericsError):
    """Raised when the iterative eigensolver exhausts its iteration budget."""

    def __init__(self, message: str, best_residual: float, iterations: int) -> None:
        super().__init__(message)
        self.best_residual = best_residual
        self.iterations = iterations


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD with singular values in descending order."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def rank(self) -> int:
        return significant_rank(self.s)

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vt


def dense_matrix(entries: object) -> np.ndarray:
    """Validate and convert to a finite complex128 2-D array."""
    m = np.asarray(entries, dtype=np.complex128)
    if m.ndim != 2 or m.size == 0:
        raise NumericsError(f"expected a nonempty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericsError(f"non-finite entries in {m.shape[0]}x{m.shape[1]} matrix")
    return m


def significant_rank(s: np.ndarray) -> int:
    """Number of singular values above RANK_CUTOFF * s_max."""
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s > RANK_CUTOFF * s[0]))


def svd(m: np.ndarray) -> SvdResult:
    """Thin SVD; falls back from gesdd to gesvd before giving up."""
    m = dense_matrix(m)
    rows, cols = m.shape
    for driver in ("gesdd", "gesvd"):
        try:
            u, s, vt = scipy.linalg.svd(
                m, full_matrices=False, lapack_driver=driver, check_finite=False
            )
        except np.linalg.LinAlgError:
            log.debug("SVD driver %s failed on %dx%d matrix", driver, rows, cols)
            continue
        return SvdResult(u=u, s=s, vt=vt)
    raise NumericsError(f"SVD did not converge for {rows}x{cols} matrix")


def check_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    scale = max(1.0, float(np.linalg.norm(m)))
    deviation = float(np.linalg.norm(m - m.conj().T))
    if deviation > tol * scale:
        raise NonHermitianError(
            f"matrix deviates from Hermitian by {deviation:.3e} (tolerance {tol * scale:.3e})"
        )


def hermitian_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues ascending and orthonormal eigenvectors (columns)."""
    m = dense_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise NumericsError(f"expected a square matrix, got {m.shape[0]}x{m.shape[1]}")
    check_hermitian(m)
    m = 0.5 * (m + m.conj().T)
    try:
        values, vectors = scipy.linalg.eigh(m, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise NumericsError(f"eigh failed for {m.shape[0]}x{m.shape[1]} matrix: {e}") from e
    return values, vectors


def hermiticity_defect(op: LinearOperator, pairs: int = 3, seed: int = 0) -> float:
    """Largest |<y, A x> - conj(<x, A y>)| over random vector pairs."""
    op = aslinearoperator(op)
    n = op.shape[0]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        y = rng.normal(size=n) + 1j * rng.normal(size=n)
        lhs = np.vdot(y, op.matvec(x))
        rhs = np.conj(np.vdot(x, op.matvec(y)))
        worst = max(worst, abs(lhs - rhs))
    return worst


def extremal_eigenpair(
    op: LinearOperator | np.ndarray,
    guess: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 1000,
    krylov_dim: int = KRYLOV_DIM,
) -> tuple[float, np.ndarray]:
    """Algebraically smallest eigenpair of a Hermitian operator.

    Restarted Lanczos with full reorthogonalization. Each cycle builds a Krylov
    basis of at most ``krylov_dim`` vectors, restarts from the Ritz vector and
    stops once the explicit residual ||A x - lambda x|| drops to ``tol``.
    ``max_iter`` bounds the number of operator applications.
    """
    op = aslinearoperator(op)
    n = op.shape[0]
    v = np.asarray(guess, dtype=np.complex128).ravel()
    if n < 1 or v.shape[0] != n:
        raise NumericsError(f"guess of length {v.shape[0]} for operator of dimension {n}")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise NumericsError("initial guess is the zero vector")
    v = v / norm

    if n == 1:
        value = complex(op.matvec(np.ones(1, dtype=np.complex128))[0]).real
        return value, np.ones(1, dtype=np.complex128)

    m = min(krylov_dim, n)
    best_residual = np.inf
    applied = 0
    while applied < max_iter:
        basis = np.zeros((m, n), dtype=np.complex128)
        alpha = np.zeros(m)
        beta = np.zeros(m)
        basis[0] = v
        k = 0
        for j in range(m):
            w = np.asarray(op.matvec(basis[j]), dtype=np.complex128).ravel()
            applied += 1
            alpha[j] = np.vdot(basis[j], w).real
            # two Gram-Schmidt passes against the whole basis
            for _ in range(2):
                w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
            k = j + 1
            if k == m:
                break
            b = np.linalg.norm(w)
            scale = max(1.0, float(np.abs(alpha[:k]).max()))
            if b < BREAKDOWN_TOL * scale:
                break
            beta[j] = b
            basis[j + 1] = w / b

        if k == 1:
            coeffs = np.ones(1)
        else:
            _, s = scipy.linalg.eigh_tridiagonal(
                alpha[:k], beta[: k - 1], select="i", select_range=(0, 0)
            )
            coeffs = s[:, 0]
        x = coeffs @ basis[:k]
        x /= np.linalg.norm(x)
        ax = np.asarray(op.matvec(x), dtype=np.complex128).ravel()
        applied += 1
        value = np.vdot(x, ax).real
        residual = float(np.linalg.norm(ax - value * x))
        best_residual = min(best_residual, residual)
        if residual <= tol:
            return float(value), x
        v = x

    raise ConvergenceError(
        f"Lanczos did not reach residual {tol:.1e} after {applied} applications "
        f"(best {best_residual:.3e}, dimension {n})",
        best_residual=best_residual,
        iterations=applied,
    )
