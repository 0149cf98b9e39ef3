"""Open-boundary matrix product states: gauge, expectations and entanglement spectra."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .models import DENSE_DIM_CAP, MatrixProductOperator
from .numerics import NumericsError, hermitian_eig, svd

log = logging.getLogger("topoconv")

BLOCK_CAP = 4096  # default limit on the Gram / block density matrix dimension
SPECTRUM_SUM_TOL = 1e-8
NEGATIVE_CLAMP = 1e-12
ORTHO_TOL = 1e-10
_CONTAINER_VERSION = 1


class MpsError(ValueError):
    """Raised when an MPS operation receives incompatible input."""


class BlockTooLargeError(MpsError):
    """Raised when a block spectrum would exceed the configured dimension cap."""


class PartitionKind(str, Enum):
    BOUNDARY_CUT = "boundary_cut"
    MIDDLE_BLOCK = "middle_block"


@dataclass(frozen=True)
class PartitionSpec:
    """A bipartition A|B (cut after |A| sites) or a tripartition A|B|C with B a block.

    Sites are 0-based: a boundary cut keeps sites [0, cut_after) in A, a middle
    block is sites [start, start + length).
    """

    kind: PartitionKind
    sites: int
    cut_after: int = 0
    start: int = 0
    length: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PartitionKind(self.kind))
        if self.kind is PartitionKind.BOUNDARY_CUT:
            if not 1 <= self.cut_after < self.sites:
                raise MpsError(f"cut after {self.cut_after} outside chain of {self.sites}")
        else:
            if self.length < 1:
                raise MpsError("middle block needs length >= 1")
            if self.start < 1 or self.start + self.length > self.sites - 1:
                raise MpsError(
                    f"block [{self.start}, {self.start + self.length}) is not interior "
                    f"to a chain of {self.sites}"
                )

    @classmethod
    def boundary(cls, sites: int, cut_after: int) -> PartitionSpec:
        return cls(PartitionKind.BOUNDARY_CUT, sites, cut_after=cut_after)

    @classmethod
    def middle(cls, sites: int, start: int, length: int) -> PartitionSpec:
        return cls(PartitionKind.MIDDLE_BLOCK, sites, start=start, length=length)

    @classmethod
    def parse(cls, label: str, sites: int) -> PartitionSpec:
        """Parse ``"a|b"`` or ``"a|b|c"`` (region sizes summing to ``sites``)."""
        if not re.fullmatch(r"\s*\d+\s*(\|\s*\d+\s*){1,2}", label):
            raise MpsError(f"partition label {label!r} is not of the form a|b or a|b|c")
        sizes = [int(p) for p in label.split("|")]
        if sum(sizes) != sites:
            raise MpsError(f"partition {label!r} covers {sum(sizes)} sites, chain has {sites}")
        if any(s < 1 for s in sizes):
            raise MpsError(f"partition {label!r} has an empty region")
        if len(sizes) == 2:
            return cls.boundary(sites, sizes[0])
        return cls.middle(sites, sizes[0], sizes[1])

    @property
    def label(self) -> str:
        if self.kind is PartitionKind.BOUNDARY_CUT:
            return f"{self.cut_after}|{self.sites - self.cut_after}"
        rest = self.sites - self.start - self.length
        return f"{self.start}|{self.length}|{rest}"

    @property
    def block_sites(self) -> range:
        """Sites of the subsystem whose spectrum is reported (A for a cut, B for a block)."""
        if self.kind is PartitionKind.BOUNDARY_CUT:
            return range(self.cut_after)
        return range(self.start, self.start + self.length)


@dataclass(frozen=True, eq=False)
class RdmSpectrum:
    """Descending reduced-density-matrix eigenvalues for a partition."""

    partition: PartitionSpec | None
    eigenvalues: np.ndarray

    def __post_init__(self) -> None:
        x = self.eigenvalues
        if x.ndim != 1 or x.size == 0:
            raise MpsError("spectrum must be a nonempty vector")
        if np.any(x < 0) or np.any(np.diff(x) > 0):
            raise MpsError("spectrum must be nonnegative and descending")
        if abs(x.sum() - 1.0) > SPECTRUM_SUM_TOL:
            raise MpsError(f"spectrum sums to {x.sum():.12f}, expected 1")

    @classmethod
    def from_weights(
        cls, weights: np.ndarray, partition: PartitionSpec | None = None
    ) -> RdmSpectrum:
        """Sort, clamp tiny negative round-off and renormalize raw eigenvalues."""
        x = np.sort(np.real(np.asarray(weights, dtype=np.complex128)))[::-1]
        if x.size and x[-1] < -NEGATIVE_CLAMP * max(1.0, x[0]):
            log.debug("Clamping negative RDM eigenvalue %.3e", x[-1])
        x = np.clip(x, 0.0, None)
        total = x.sum()
        if total <= 0:
            raise MpsError("reduced density matrix has zero trace")
        return cls(partition=partition, eigenvalues=np.ascontiguousarray(x / total))


@dataclass(frozen=True, eq=False)
class MatrixProductState:
    """Per-site tensors A[left, phys, right]; boundary bonds have dimension 1."""

    tensors: tuple[np.ndarray, ...]
    canonical_center: int | None = None

    def __post_init__(self) -> None:
        ts = tuple(np.asarray(t, dtype=np.complex128) for t in self.tensors)
        object.__setattr__(self, "tensors", ts)
        if not ts:
            raise MpsError("MPS needs at least one site")
        if ts[0].shape[0] != 1 or ts[-1].shape[2] != 1:
            raise MpsError("boundary bonds must have dimension 1")
        d = ts[0].shape[1]
        for i, t in enumerate(ts):
            if t.ndim != 3 or t.shape[1] != d:
                raise MpsError(f"site {i} tensor has shape {t.shape}, local dimension {d}")
            if i > 0 and ts[i - 1].shape[2] != t.shape[0]:
                raise MpsError(f"bond mismatch between sites {i - 1} and {i}")

    @property
    def sites(self) -> int:
        return len(self.tensors)

    @property
    def local_dim(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @classmethod
    def product(cls, local_states: Sequence[int | np.ndarray], local_dim: int) -> MatrixProductState:
        """Product state from basis indices or local vectors."""
        tensors = []
        for s in local_states:
            if isinstance(s, (int, np.integer)):
                v = np.zeros(local_dim, dtype=np.complex128)
                v[int(s)] = 1.0
            else:
                v = np.asarray(s, dtype=np.complex128)
                v = v / np.linalg.norm(v)
            tensors.append(v.reshape(1, local_dim, 1))
        return cls(tuple(tensors), canonical_center=0)

    @classmethod
    def random(
        cls, sites: int, local_dim: int, bond_dim: int = 2, seed: int = 0
    ) -> MatrixProductState:
        rng = np.random.default_rng(seed)
        bonds = [1] + [
            min(bond_dim, local_dim**i, local_dim ** (sites - i)) for i in range(1, sites)
        ] + [1]
        tensors = tuple(
            rng.normal(size=(bonds[i], local_dim, bonds[i + 1]))
            + 1j * rng.normal(size=(bonds[i], local_dim, bonds[i + 1]))
            for i in range(sites)
        )
        return canonicalize(cls(tensors), 0)

    @classmethod
    def from_statevector(cls, psi: np.ndarray, sites: int, local_dim: int) -> MatrixProductState:
        """Exact MPS by successive SVDs; the result is left-canonical with center N-1."""
        psi = np.asarray(psi, dtype=np.complex128).ravel()
        if psi.size != local_dim**sites:
            raise MpsError(f"state of length {psi.size} is not {local_dim}^{sites}")
        psi = psi / np.linalg.norm(psi)
        tensors = []
        rest = psi.reshape(1, -1)
        for _ in range(sites - 1):
            left = rest.shape[0]
            res = svd(rest.reshape(left * local_dim, -1))
            k = max(1, res.rank)
            tensors.append(res.u[:, :k].reshape(left, local_dim, k))
            rest = res.s[:k, None] * res.vt[:k]
        tensors.append(rest.reshape(rest.shape[0], local_dim, 1))
        return cls(tuple(tensors), canonical_center=sites - 1)

    def to_statevector(self) -> np.ndarray:
        if self.local_dim**self.sites > DENSE_DIM_CAP:
            raise MpsError(f"state vector of {self.sites} sites exceeds the dense cap")
        acc = self.tensors[0]
        for t in self.tensors[1:]:
            acc = np.tensordot(acc, t, axes=([acc.ndim - 1], [0]))
        return acc.reshape(-1)

    def norm(self) -> float:
        return float(np.sqrt(abs(overlap(self, self))))


def _left_orthonormalize(tensors: list[np.ndarray], i: int) -> None:
    a = tensors[i]
    left, d, right = a.shape
    q, r = scipy.linalg.qr(a.reshape(left * d, right), mode="economic")
    tensors[i] = q.reshape(left, d, q.shape[1])
    tensors[i + 1] = np.tensordot(r, tensors[i + 1], axes=([1], [0]))


def _right_orthonormalize(tensors: list[np.ndarray], i: int) -> None:
    a = tensors[i]
    left, d, right = a.shape
    q, r = scipy.linalg.qr(a.reshape(left, d * right).T, mode="economic")
    tensors[i] = q.T.reshape(q.shape[1], d, right)
    tensors[i - 1] = np.tensordot(tensors[i - 1], r.T, axes=([2], [0]))


def canonicalize(state: MatrixProductState, center: int) -> MatrixProductState:
    """Mixed-canonical form around ``center`` with unit norm."""
    n = state.sites
    if not 0 <= center < n:
        raise MpsError(f"center {center} outside chain of {n}")
    tensors = list(state.tensors)
    for i in range(center):
        _left_orthonormalize(tensors, i)
    for i in range(n - 1, center, -1):
        _right_orthonormalize(tensors, i)
    norm = np.linalg.norm(tensors[center])
    if norm == 0.0:
        raise MpsError("cannot canonicalize the zero state")
    tensors[center] = tensors[center] / norm
    return MatrixProductState(tuple(tensors), canonical_center=center)


def is_canonical(state: MatrixProductState, tol: float = ORTHO_TOL) -> bool:
    c = state.canonical_center
    if c is None:
        return False
    for i, a in enumerate(state.tensors):
        if i == c:
            continue
        if i < c:
            gram = np.einsum("asb,asc->bc", a.conj(), a)
        else:
            gram = np.einsum("asb,csb->ac", a, a.conj())
        if not np.allclose(gram, np.eye(gram.shape[0]), atol=tol):
            return False
    return abs(np.linalg.norm(state.tensors[c]) - 1.0) < tol


def overlap(bra: MatrixProductState, ket: MatrixProductState) -> complex:
    """<bra|ket>."""
    if bra.sites != ket.sites or bra.local_dim != ket.local_dim:
        raise MpsError("overlap of states with different shapes")
    env = np.ones((1, 1), dtype=np.complex128)
    for a, b in zip(bra.tensors, ket.tensors):
        env = np.einsum("xy,xsa,ysb->ab", env, a.conj(), b)
    return complex(env[0, 0])


def expectation_mpo(state: MatrixProductState, op: MatrixProductOperator) -> float:
    """<psi|O|psi> / <psi|psi> for a Hermitian MPO."""
    if op.sites != state.sites or op.local_dim != state.local_dim:
        raise MpsError(
            f"MPO ({op.sites} sites, d={op.local_dim}) does not match "
            f"state ({state.sites} sites, d={state.local_dim})"
        )
    env = np.ones((1, 1, 1), dtype=np.complex128)
    for a, w in zip(state.tensors, op.tensors):
        env = np.einsum("cvd,csa,vwst,dtb->awb", env, a.conj(), w, a, optimize=True)
    value = complex(env[0, 0, 0]) / overlap(state, state).real
    if abs(value.imag) > 1e-10 * max(1.0, abs(value.real)):
        raise MpsError(f"expectation has imaginary part {value.imag:.3e}; MPO not Hermitian?")
    return value.real


def _check_site_operator(state: MatrixProductState, op: np.ndarray) -> np.ndarray:
    op = np.asarray(op, dtype=np.complex128)
    d = state.local_dim
    if op.shape != (d, d):
        raise MpsError(f"operator shape {op.shape} does not match local dimension {d}")
    return op


def local_expectation(state: MatrixProductState, site_operator: np.ndarray, site: int) -> float:
    op = _check_site_operator(state, site_operator)
    if not np.allclose(op, op.conj().T, atol=1e-12):
        raise MpsError("local_expectation requires a Hermitian operator")
    a = canonicalize(state, site).tensors[site]
    return float(np.einsum("asb,st,atb->", a.conj(), op, a).real)


def local_profile(state: MatrixProductState, site_operator: np.ndarray) -> np.ndarray:
    """<O_j> for every site in one left-to-right gauge sweep."""
    op = _check_site_operator(state, site_operator)
    tensors = list(canonicalize(state, 0).tensors)
    values = np.empty(state.sites)
    for j in range(state.sites):
        a = tensors[j]
        values[j] = np.einsum("asb,st,atb->", a.conj(), op, a).real
        if j < state.sites - 1:
            _left_orthonormalize(tensors, j)
    return values


def two_point_correlations(
    state: MatrixProductState,
    op_a: np.ndarray,
    op_b: np.ndarray,
    anchor: int,
    offsets: Sequence[int],
) -> np.ndarray:
    """<A_anchor B_{anchor+n}> for each positive offset n, sharing one transfer."""
    op_a = _check_site_operator(state, op_a)
    op_b = _check_site_operator(state, op_b)
    offsets = list(offsets)
    if not offsets:
        return np.zeros(0, dtype=np.complex128)
    if min(offsets) < 1 or anchor < 0 or anchor + max(offsets) >= state.sites:
        raise MpsError(f"offsets {offsets} from anchor {anchor} leave the chain")
    canon = canonicalize(state, anchor)
    a = canon.tensors[anchor]
    env = np.einsum("xsa,st,xtb->ab", a.conj(), op_a, a)
    wanted = set(offsets)
    found: dict[int, complex] = {}
    for n in range(1, max(offsets) + 1):
        a = canon.tensors[anchor + n]
        if n in wanted:
            found[n] = complex(np.einsum("xy,xsa,st,yta->", env, a.conj(), op_b, a))
        env = np.einsum("xy,xsa,ysb->ab", env, a.conj(), a)
    return np.array([found[n] for n in offsets])


def string_expectation(
    state: MatrixProductState, ops: Sequence[tuple[int, np.ndarray]]
) -> complex:
    """Expectation of an ordered product of on-site operators (identity elsewhere)."""
    if not ops:
        return 1.0 + 0.0j
    sites = [s for s, _ in ops]
    if any(b <= a for a, b in zip(sites, sites[1:])):
        raise MpsError(f"string sites must be strictly increasing, got {sites}")
    if sites[0] < 0 or sites[-1] >= state.sites:
        raise MpsError(f"string sites {sites} outside chain of {state.sites}")
    placed = {s: _check_site_operator(state, o) for s, o in ops}
    first, last = sites[0], sites[-1]
    canon = canonicalize(state, first)
    chi = canon.tensors[first].shape[0]
    env = np.eye(chi, dtype=np.complex128)
    identity = np.eye(state.local_dim, dtype=np.complex128)
    for j in range(first, last + 1):
        a = canon.tensors[j]
        env = np.einsum("xy,xsa,st,ytb->ab", env, a.conj(), placed.get(j, identity), a)
    return complex(np.trace(env))


def boundary_cut_spectrum(state: MatrixProductState, cut_after: int) -> RdmSpectrum:
    """Squared Schmidt values across the bond after the first ``cut_after`` sites."""
    partition = PartitionSpec.boundary(state.sites, cut_after)
    center = cut_after - 1
    a = canonicalize(state, center).tensors[center]
    left, d, right = a.shape
    s = svd(a.reshape(left * d, right)).s
    return RdmSpectrum.from_weights(s**2, partition)


def all_cut_spectra(state: MatrixProductState) -> list[RdmSpectrum]:
    """Spectra of every boundary cut (index i is the cut after i + 1 sites), one sweep."""
    n = state.sites
    tensors = list(canonicalize(state, 0).tensors)
    out = []
    for i in range(n - 1):
        a = tensors[i]
        left, d, right = a.shape
        res = svd(a.reshape(left * d, right))
        out.append(RdmSpectrum.from_weights(res.s**2, PartitionSpec.boundary(n, i + 1)))
        k = res.s.size
        tensors[i] = res.u.reshape(left, d, k)
        tensors[i + 1] = np.tensordot(res.s[:, None] * res.vt, tensors[i + 1], axes=([1], [0]))
    return out


def _block_tensor(tensors: Sequence[np.ndarray]) -> np.ndarray:
    acc = tensors[0]
    for t in tensors[1:]:
        acc = np.tensordot(acc, t, axes=([acc.ndim - 1], [0]))
    return acc.reshape(acc.shape[0], -1, acc.shape[-1])


def _gram_matrix(tensors: Sequence[np.ndarray]) -> np.ndarray:
    # E[a, a', b, b'] = sum_s T[a, s, b] conj(T[a', s, b'])
    first = tensors[0]
    env = np.einsum("asb,ctd->acbd", first, first.conj())
    for t in tensors[1:]:
        env = np.einsum("acbd,bse,dsf->acef", env, t, t.conj(), optimize=True)
    chi_l, chi_r = env.shape[0], env.shape[2]
    return env.transpose(0, 2, 1, 3).reshape(chi_l * chi_r, chi_l * chi_r)


def middle_block_spectrum(
    state: MatrixProductState, start: int, length: int, cap: int = BLOCK_CAP
) -> RdmSpectrum:
    """Nonzero spectrum of rho_B for the interior block [start, start + length).

    With the center at ``start`` the environments left and right of the block
    are orthonormal. The Gram matrix of the block vectors B_{ab} then shares its
    nonzero spectrum with rho_B; when d^length is the smaller dimension rho_B is
    built directly instead.
    """
    partition = PartitionSpec.middle(state.sites, start, length)
    canon = canonicalize(state, start)
    block = canon.tensors[start : start + length]
    chi_l, chi_r = block[0].shape[0], block[-1].shape[2]
    gram_dim = chi_l * chi_r
    direct_dim = state.local_dim**length
    if min(gram_dim, direct_dim) > cap:
        raise BlockTooLargeError(
            f"block of {length} sites needs a {min(gram_dim, direct_dim)}-dimensional "
            f"matrix (cap {cap}); compress the state to bond dimension "
            f"{int(np.sqrt(cap))} or less first"
        )
    if direct_dim <= gram_dim:
        t = _block_tensor(block)
        rho = np.einsum("asb,atb->st", t, t.conj())
    else:
        rho = _gram_matrix(block)
    try:
        values, _ = hermitian_eig(rho)
    except NumericsError as e:
        raise MpsError(f"block spectrum for {partition.label} failed: {e}") from e
    return RdmSpectrum.from_weights(values, partition)


def partition_spectrum(
    state: MatrixProductState, partition: PartitionSpec, cap: int = BLOCK_CAP
) -> RdmSpectrum:
    if partition.sites != state.sites:
        raise MpsError(f"partition {partition.label} is for {partition.sites} sites")
    if partition.kind is PartitionKind.BOUNDARY_CUT:
        return boundary_cut_spectrum(state, partition.cut_after)
    return middle_block_spectrum(state, partition.start, partition.length, cap)


def truncation_rank(weights: np.ndarray, chi_max: int, tol: float) -> int:
    """Smallest kept count whose discarded tail weight is <= tol, capped at chi_max.

    ``weights`` are normalized squared singular values in descending order.
    """
    tail = np.concatenate([np.cumsum(weights[::-1])[::-1], [0.0]])
    keep = int(np.argmax(tail <= tol))
    significant = int(np.count_nonzero(weights > 1e-28 * max(weights[0], 1e-300)))
    return max(1, min(keep, chi_max, significant))


def compress(
    state: MatrixProductState, chi_max: int, discard_tol: float = 0.0
) -> tuple[MatrixProductState, list[float]]:
    """Truncate every bond to at most ``chi_max``; returns the discarded weight per bond."""
    if chi_max < 1:
        raise MpsError(f"chi_max must be >= 1, got {chi_max}")
    n = state.sites
    tensors = list(canonicalize(state, n - 1).tensors)
    discarded = [0.0] * (n - 1)
    for i in range(n - 1, 0, -1):
        a = tensors[i]
        left, d, right = a.shape
        res = svd(a.reshape(left, d * right))
        weights = res.s**2 / np.sum(res.s**2)
        k = truncation_rank(weights, chi_max, discard_tol)
        discarded[i - 1] = float(weights[k:].sum())
        tensors[i] = res.vt[:k].reshape(k, d, right)
        tensors[i - 1] = np.tensordot(tensors[i - 1], res.u[:, :k] * res.s[:k], axes=([2], [0]))
        tensors[i - 1] /= np.linalg.norm(tensors[i - 1])
    compressed = MatrixProductState(tuple(tensors), canonical_center=0)
    if max(discarded, default=0.0) > 0:
        log.debug("Compressed to chi=%d, max discarded weight %.3e", chi_max, max(discarded))
    return compressed, discarded


def save_mps(state: MatrixProductState, path: Path | str) -> None:
    """Write a self-describing .npz container (little-endian complex128 payload)."""
    shapes = np.array([t.shape for t in state.tensors], dtype="<i8")
    data = np.concatenate([t.ravel() for t in state.tensors]).astype("<c16")
    center = -1 if state.canonical_center is None else state.canonical_center
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.int64(_CONTAINER_VERSION),
            sites=np.int64(state.sites),
            local_dim=np.int64(state.local_dim),
            center=np.int64(center),
            shapes=shapes,
            data=data,
        )


def load_mps(path: Path | str) -> MatrixProductState:
    with np.load(path) as z:
        if int(z["version"]) != _CONTAINER_VERSION:
            raise MpsError(f"unsupported MPS container version {int(z['version'])}")
        sites = int(z["sites"])
        shapes = z["shapes"]
        data = z["data"].astype(np.complex128)
        center = int(z["center"])
    if shapes.shape != (sites, 3):
        raise MpsError(f"container shape table {shapes.shape} does not match {sites} sites")
    sizes = np.prod(shapes, axis=1)
    if sizes.sum() != data.size:
        raise MpsError("container payload length does not match tensor shapes")
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    tensors = tuple(
        data[offsets[i] : offsets[i + 1]].reshape(tuple(shapes[i])) for i in range(sites)
    )
    return MatrixProductState(tensors, canonical_center=None if center < 0 else center)
