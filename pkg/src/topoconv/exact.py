"""Reference solutions: free fermions for cluster-Ising and exact diagonalization.

Jordan-Wigner convention (0-based sites, S_k = prod_{j<k} Z_j):

    f1_k = S_k X_k,    f2_k = -S_k Y_k,    Majorana index 2k and 2k+1.

Under it the cluster-Ising terms become bilinears,

    -X_{k-1} Z_k X_{k+1} = -i f2_{k-1} f1_{k+1}
     g Y_k Y_{k+1}       = -i g f1_k f2_{k+1}
     Y_0 X_1             =  i f1_0 f1_1
     X_{N-2} Y_{N-1}     = -i f2_{N-2} f2_{N-1}

and H = (i/4) f^T K f with K real antisymmetric: a term i t f_a f_b puts
2t at K[a, b] and -2t at K[b, a].
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
import scipy.special

from .models import (
    ModelFamily,
    ModelSpec,
    PerturbationKind,
    PerturbationSpec,
    build_sparse,
    check_dense_size,
    embed_operators,
    total_sz_diagonal,
)
from .mps import RdmSpectrum
from .numerics import hermitian_eig, svd

log = logging.getLogger("topoconv")

ZERO_MODE_TOL = 1e-12
DEGENERACY_TOL = 1e-9
MAX_ZERO_PAIRS_ENUMERATED = 4
SPARSE_ED_DIM = 2**11  # above this ED switches to ARPACK
SPARSE_EIGS = 8


class OracleError(ValueError):
    """Raised when an exact solution is requested outside its domain."""


@dataclass(frozen=True, eq=False)
class MajoranaModel:
    """H = (i/4) f^T K f on 2N Majorana operators."""

    sites: int
    coupling: np.ndarray

    def single_particle_energies(self) -> np.ndarray:
        """Nonnegative mode energies eps_k, ascending (N values)."""
        values, _ = hermitian_eig(1j * self.coupling)
        return np.clip(values[self.sites :], 0.0, None)

    def ground_energy(self) -> float:
        return -0.25 * float(scipy.linalg.svdvals(self.coupling).sum())

    def many_body_energies(self) -> np.ndarray:
        """All 2^N eigenvalues sum_k eps_k (n_k - 1/2), ascending."""
        check_dense_size(self.sites, 2)
        eps = self.single_particle_energies()
        signs = np.array(list(itertools.product((-0.5, 0.5), repeat=self.sites)))
        return np.sort(signs @ eps)


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Gamma_ab = (i/2) <[f_a, f_b]> of a Gaussian state.

    ``alternatives`` holds the covariances of the other zero-mode fillings
    when the ground state is degenerate.
    """

    gamma: np.ndarray
    degenerate: bool = False
    alternatives: tuple[np.ndarray, ...] = ()

    @property
    def sites(self) -> int:
        return self.gamma.shape[0] // 2


def _add_bilinear(k: np.ndarray, t: float, a: int, b: int) -> None:
    k[a, b] += 2.0 * t
    k[b, a] -= 2.0 * t


def build_majorana(
    sites: int, g: float, perturbation: PerturbationSpec | None = None
) -> MajoranaModel:
    """Majorana coupling matrix of the open cluster-Ising chain."""
    if sites < 3:
        raise OracleError(f"free-fermion cluster-Ising needs N >= 3, got {sites}")
    perturbation = perturbation or PerturbationSpec()
    if perturbation.active and perturbation.kind is not PerturbationKind.CLUSTER_MAJORANA:
        raise OracleError(
            f"perturbation {perturbation.kind.value} is not quadratic in Majorana operators"
        )
    k = np.zeros((2 * sites, 2 * sites))
    for c in range(1, sites - 1):
        _add_bilinear(k, -1.0, 2 * (c - 1) + 1, 2 * (c + 1))
    for j in range(sites - 1):
        _add_bilinear(k, -g, 2 * j, 2 * (j + 1) + 1)
    if perturbation.active:
        eps, sign = perturbation.strength, perturbation.sign
        _add_bilinear(k, eps, 0, 2)
        _add_bilinear(k, -sign * eps, 2 * (sites - 2) + 1, 2 * (sites - 1) + 1)
    return MajoranaModel(sites=sites, coupling=k)


def majorana_model(spec: ModelSpec) -> MajoranaModel:
    if spec.family is not ModelFamily.CLUSTER_ISING:
        raise OracleError("free-fermion solution exists only for cluster_ising")
    return build_majorana(spec.sites, spec.g, spec.perturbation)


def _normal_form(k: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int, float]], list[int]]:
    """Real Schur form of an antisymmetric matrix: (Z, 2x2 blocks, zero-mode indices).

    Each block (i, i+1, b) stands for b [[0, 1], [-1, 0]] in the basis Z.
    """
    t, z = scipy.linalg.schur(k, output="real")
    n = k.shape[0]
    blocks: list[tuple[int, int, float]] = []
    zeros: list[int] = []
    i = 0
    while i < n:
        if i + 1 < n and abs(t[i + 1, i]) > 0.0:
            b = 0.5 * (t[i, i + 1] - t[i + 1, i])
            if abs(b) < ZERO_MODE_TOL:
                zeros.extend((i, i + 1))
            else:
                blocks.append((i, i + 1, b))
            i += 2
        else:
            zeros.append(i)
            i += 1
    return z, blocks, zeros


def ground_covariance(model: MajoranaModel) -> tuple[CovarianceMatrix, float]:
    """Covariance of the Gaussian ground state and its energy -1/2 sum_k eps_k."""
    z, blocks, zeros = _normal_form(model.coupling)
    n = model.coupling.shape[0]
    base = np.zeros((n, n))
    for i, j, b in blocks:
        # i f_i f_j = -1 in the ground state of (i/2) b f_i f_j with b > 0
        s = -np.sign(b)
        base[i, j] = s
        base[j, i] = -s
    pairs = list(zip(zeros[0::2], zeros[1::2]))
    energy = model.ground_energy()

    def filled(choice: Sequence[int]) -> np.ndarray:
        gp = base.copy()
        for (i, j), s in zip(pairs, choice):
            gp[i, j] = s
            gp[j, i] = -s
        return z @ gp @ z.T

    if not pairs:
        return CovarianceMatrix(filled(())), energy

    log.info("Free-fermion ground state has %d zero-mode pair(s); degenerate", len(pairs))
    if len(pairs) <= MAX_ZERO_PAIRS_ENUMERATED:
        choices = list(itertools.product((-1, 1), repeat=len(pairs)))
    else:
        first = (-1,) * len(pairs)
        choices = [first] + [first[:i] + (1,) + first[i + 1 :] for i in range(len(pairs))]
    gammas = [filled(c) for c in choices]
    return (
        CovarianceMatrix(gammas[0], degenerate=True, alternatives=tuple(gammas[1:])),
        energy,
    )


def block_occupations(gamma: CovarianceMatrix, block: range) -> np.ndarray:
    """nu_k in [0, 1] of the covariance restricted to a contiguous site block."""
    sites = list(block)
    if not sites or sites != list(range(sites[0], sites[0] + len(sites))):
        raise OracleError(f"block {block} is not a contiguous site range")
    if sites[0] < 0 or sites[-1] >= gamma.sites:
        raise OracleError(f"block {block} outside chain of {gamma.sites}")
    lo, hi = 2 * sites[0], 2 * (sites[-1] + 1)
    restricted = gamma.gamma[lo:hi, lo:hi]
    _, blocks, zeros = _normal_form(restricted)
    nus = [abs(b) for _, _, b in blocks] + [0.0] * (len(zeros) // 2)
    return np.clip(np.array(nus), 0.0, 1.0)


def renyi_from_occupations(nus: np.ndarray, alpha: float) -> float:
    if alpha <= 0:
        raise OracleError(f"Renyi index must be positive, got {alpha}")
    p = (1.0 + nus) / 2.0
    q = (1.0 - nus) / 2.0
    if np.isinf(alpha):
        return float(-np.log(p).sum())
    if alpha == 1.0:
        return float(-(scipy.special.xlogy(p, p) + scipy.special.xlogy(q, q)).sum())
    with np.errstate(divide="ignore"):
        logs = np.logaddexp(alpha * np.log(p), alpha * np.log(q))
    return float(logs.sum() / (1.0 - alpha))


def block_renyi_free_fermion(gamma: CovarianceMatrix, block: range, alpha: float) -> float:
    """Renyi entropy of a contiguous fermion block; equals the spin-block entropy
    when the block starts at site 0."""
    return renyi_from_occupations(block_occupations(gamma, block), alpha)


def _canonical_ground_vector(vectors: np.ndarray) -> np.ndarray:
    """Deterministic representative of a (possibly degenerate) eigenspace.

    Projects the basis state with the largest weight in the eigenspace (first
    index among ties) onto it; that component comes out real and positive.
    """
    weights = np.round(np.linalg.norm(vectors, axis=1), 8)
    pivot = int(np.argmax(weights))
    psi = vectors @ vectors[pivot].conj()
    return psi / np.linalg.norm(psi)


def _eigenpairs(h: scipy.sparse.spmatrix, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``count`` eigenpairs, ascending; ARPACK above SPARSE_ED_DIM."""
    dim = h.shape[0]
    if dim <= SPARSE_ED_DIM or count >= dim - 1:
        values, vectors = hermitian_eig(h.toarray())
        return values[:count], vectors[:, :count]
    v0 = np.random.default_rng(0).normal(size=dim).astype(h.dtype)
    try:
        values, vectors = scipy.sparse.linalg.eigsh(h, k=count, which="SA", v0=v0, tol=0)
    except scipy.sparse.linalg.ArpackNoConvergence as e:
        raise OracleError(f"sparse ED did not converge for dimension {dim}: {e}") from e
    order = np.argsort(values)
    return values[order], vectors[:, order]


def _lowest(h: scipy.sparse.spmatrix) -> tuple[float, np.ndarray, int]:
    values, vectors = _eigenpairs(h, SPARSE_EIGS)
    e0 = float(values[0])
    tol = DEGENERACY_TOL * max(1.0, abs(e0))
    degeneracy = int(np.count_nonzero(values - e0 <= tol))
    if degeneracy == values.size < h.shape[0]:
        log.warning("ground manifold may exceed the %d resolved eigenpairs", values.size)
    return e0, _canonical_ground_vector(vectors[:, :degeneracy]), degeneracy


def ed_ground(spec: ModelSpec) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of the Hamiltonian (penalty included if set)."""
    energy, psi, degeneracy = _lowest(build_sparse(spec))
    if degeneracy > 1:
        log.debug("ED ground state of %s is %d-fold degenerate", spec.family.value, degeneracy)
    return energy, psi


def ed_spectrum(spec: ModelSpec, count: int = 8) -> np.ndarray:
    h = build_sparse(spec)
    return _eigenpairs(h, min(count, h.shape[0]))[0]


def ed_sector_ground(spec: ModelSpec, target: int) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of the bare lambda-D Hamiltonian inside Sz_tot = target."""
    if spec.family is not ModelFamily.LAMBDA_D:
        raise OracleError("sector-resolved ED is defined for lambda_d")
    h = build_sparse(spec.without_penalty())
    idx = np.flatnonzero(np.isclose(total_sz_diagonal(spec.sites), target))
    if idx.size == 0:
        raise OracleError(f"sector Sz_tot = {target} is empty for {spec.sites} sites")
    energy, sub, _ = _lowest(h[idx][:, idx])
    psi = np.zeros(h.shape[0], dtype=np.complex128)
    psi[idx] = sub
    return energy, psi


def _infer_sites(psi: np.ndarray, local_dim: int) -> int:
    n = int(round(np.log(psi.size) / np.log(local_dim)))
    if local_dim**n != psi.size:
        raise OracleError(f"state of length {psi.size} is not a power of {local_dim}")
    return n


def ed_block_spectrum(psi: np.ndarray, sites: Iterable[int], local_dim: int) -> RdmSpectrum:
    """Spectrum of the reduced density matrix of ``sites`` (any subset)."""
    psi = np.asarray(psi, dtype=np.complex128).ravel()
    n = _infer_sites(psi, local_dim)
    keep = sorted(set(sites))
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise OracleError(f"sites {keep} outside chain of {n}")
    rest = [j for j in range(n) if j not in keep]
    tensor = psi.reshape((local_dim,) * n).transpose(keep + rest)
    matrix = tensor.reshape(local_dim ** len(keep), -1)
    s = svd(matrix / np.linalg.norm(psi)).s
    return RdmSpectrum.from_weights(s**2)


def ed_expectation(
    psi: np.ndarray, ops: Sequence[tuple[int, np.ndarray]], local_dim: int
) -> complex:
    """<psi| prod_j O_j |psi> for on-site operators at distinct sites."""
    psi = np.asarray(psi, dtype=np.complex128).ravel()
    n = _infer_sites(psi, local_dim)
    if not ops:
        return complex(np.vdot(psi, psi))
    if len({s for s, _ in ops}) != len(ops):
        raise OracleError("ed_expectation needs distinct sites")
    return complex(np.vdot(psi, embed_operators(tuple(ops), n, local_dim) @ psi))
