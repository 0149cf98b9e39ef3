"""Model Hamiltonians as matrix product operators and as dense oracle matrices.

Two families are supported on open chains (sites are 0-based here):

* cluster-Ising, spin-1/2:
  H = -sum_{c=1}^{N-2} X_{c-1} Z_c X_{c+1} + g sum_{j=0}^{N-2} Y_j Y_{j+1}
* lambda-D, spin-1:
  H = sum_j (Sx_j Sx_{j+1} + Sy_j Sy_{j+1} + lam Sz_j Sz_{j+1}) + D sum_j Sz_j^2

plus an optional boundary perturbation that selects one state out of the
degenerate edge manifold, and for lambda-D an optional penalty
mu (Sz_tot - m)^2 that pins the total magnetization.

MPOs are compiled by a finite-state automaton. Every internal bond carries a
READY state (nothing placed yet, identity so far), a DONE state (a complete
term sits to the left) and one channel per multi-site term crossing the bond.
A term with sites s_0 < ... < s_k enters its channel at s_0 with
coefficient * O_0, passes O_j (or identity) through intermediate sites and
leaves into DONE at s_k. Single-site terms jump READY -> DONE directly.
The cluster-Ising XZX term therefore occupies two channels on each bond it
crosses; together with the YY term and an edge perturbation the bond
dimension stays at most 6.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse

log = logging.getLogger("topoconv")

DENSE_DIM_CAP = 2**14

# Pauli matrices
I2 = np.eye(2, dtype=np.complex128)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

# Spin-1 in the basis (+1, 0, -1)
I3 = np.eye(3, dtype=np.complex128)
SPIN_X = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=np.complex128) / np.sqrt(2)
SPIN_Y = np.array([[0, 1, 0], [-1, 0, 1], [0, -1, 0]], dtype=np.complex128) / (np.sqrt(2) * 1j)
SPIN_Z = np.diag([1.0, 0.0, -1.0]).astype(np.complex128)

PAULI = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}
SPIN_ONE = {"x": SPIN_X, "y": SPIN_Y, "z": SPIN_Z}

_READY = "ready"
_DONE = "done"


class ModelError(ValueError):
    """Raised when a model specification or operator request is invalid."""


class ModelFamily(str, Enum):
    CLUSTER_ISING = "cluster_ising"
    LAMBDA_D = "lambda_d"


class PerturbationKind(str, Enum):
    NONE = "none"
    CLUSTER_EDGE = "cluster_edge"  # X0 Z1 + s Z_{N-2} X_{N-1}
    CLUSTER_LOGICAL = "cluster_logical"  # Z0 X1 + s X_{N-2} Z_{N-1}
    CLUSTER_MAJORANA = "cluster_majorana"  # Y0 X1 + s X_{N-2} Y_{N-1}
    SPIN_ONE_EDGE = "spin_one_edge"  # Sz_0 + s Sz_{N-1}


_CLUSTER_KINDS = {
    PerturbationKind.CLUSTER_EDGE,
    PerturbationKind.CLUSTER_LOGICAL,
    PerturbationKind.CLUSTER_MAJORANA,
}


@dataclass(frozen=True)
class PerturbationSpec:
    kind: PerturbationKind = PerturbationKind.NONE
    strength: float = 1e-3
    sign: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PerturbationKind(self.kind))
        if self.strength < 0:
            raise ModelError(f"perturbation strength must be >= 0, got {self.strength}")
        if self.sign not in (1, -1):
            raise ModelError(f"perturbation sign must be +1 or -1, got {self.sign}")

    @property
    def active(self) -> bool:
        return self.kind is not PerturbationKind.NONE and self.strength > 0


@dataclass(frozen=True)
class SectorPenalty:
    """Quadratic penalty strength * (Sz_tot - target)^2."""

    target: int
    strength: float = 10.0

    def __post_init__(self) -> None:
        if self.strength <= 0:
            raise ModelError(f"sector penalty strength must be > 0, got {self.strength}")


@dataclass(frozen=True)
class ModelSpec:
    family: ModelFamily
    sites: int
    g: float = 0.0
    lam: float = 1.0
    anisotropy: float = 0.0
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    sector_penalty: SectorPenalty | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", ModelFamily(self.family))
        if self.sites < 2:
            raise ModelError(f"need at least 2 sites, got {self.sites}")
        kind = self.perturbation.kind
        if self.family is ModelFamily.CLUSTER_ISING:
            if kind not in _CLUSTER_KINDS | {PerturbationKind.NONE}:
                raise ModelError(f"perturbation {kind.value} does not apply to cluster_ising")
            if self.sector_penalty is not None:
                raise ModelError("sector penalty is only defined for lambda_d")
        elif kind not in (PerturbationKind.SPIN_ONE_EDGE, PerturbationKind.NONE):
            raise ModelError(f"perturbation {kind.value} does not apply to lambda_d")
        if self.sector_penalty is not None and abs(self.sector_penalty.target) > self.sites:
            raise ModelError(
                f"sector target {self.sector_penalty.target} unreachable on {self.sites} sites"
            )

    @property
    def local_dim(self) -> int:
        return 2 if self.family is ModelFamily.CLUSTER_ISING else 3

    def with_parameter(self, name: str, value: float) -> ModelSpec:
        """Copy with the sweep parameter ``g``, ``D`` or ``lambda`` set to ``value``."""
        attr = {"g": "g", "D": "anisotropy", "lambda": "lam"}.get(name)
        if attr is None:
            raise ModelError(f"unknown sweep parameter {name!r}")
        if (attr == "g") != (self.family is ModelFamily.CLUSTER_ISING):
            raise ModelError(f"parameter {name!r} does not belong to {self.family.value}")
        return replace(self, **{attr: float(value)})

    def without_penalty(self) -> ModelSpec:
        return replace(self, sector_penalty=None)

    def to_dict(self) -> dict:
        d: dict = {
            "family": self.family.value,
            "sites": self.sites,
            "perturbation": {
                "kind": self.perturbation.kind.value,
                "strength": self.perturbation.strength,
                "sign": self.perturbation.sign,
            },
        }
        if self.family is ModelFamily.CLUSTER_ISING:
            d["g"] = self.g
        else:
            d["lambda"] = self.lam
            d["D"] = self.anisotropy
        if self.sector_penalty is not None:
            d["sector_penalty"] = {
                "target": self.sector_penalty.target,
                "strength": self.sector_penalty.strength,
            }
        return d


@dataclass(frozen=True, eq=False)
class Term:
    """coefficient * prod_j O_j over distinct sites, sorted by site."""

    coefficient: complex
    ops: tuple[tuple[int, np.ndarray], ...]


def model_terms(spec: ModelSpec) -> list[Term]:
    """Local terms of the Hamiltonian, without the sector penalty."""
    n = spec.sites
    terms: list[Term] = []
    eps = spec.perturbation.strength
    sign = spec.perturbation.sign
    kind = spec.perturbation.kind

    if spec.family is ModelFamily.CLUSTER_ISING:
        for c in range(1, n - 1):
            terms.append(Term(-1.0, ((c - 1, PAULI_X), (c, PAULI_Z), (c + 1, PAULI_X))))
        if spec.g != 0.0:
            for j in range(n - 1):
                terms.append(Term(spec.g, ((j, PAULI_Y), (j + 1, PAULI_Y))))
        if spec.perturbation.active:
            left, right = {
                PerturbationKind.CLUSTER_EDGE: ((PAULI_X, PAULI_Z), (PAULI_Z, PAULI_X)),
                PerturbationKind.CLUSTER_LOGICAL: ((PAULI_Z, PAULI_X), (PAULI_X, PAULI_Z)),
                PerturbationKind.CLUSTER_MAJORANA: ((PAULI_Y, PAULI_X), (PAULI_X, PAULI_Y)),
            }[kind]
            terms.append(Term(eps, ((0, left[0]), (1, left[1]))))
            terms.append(Term(sign * eps, ((n - 2, right[0]), (n - 1, right[1]))))
        return terms

    for j in range(n - 1):
        terms.append(Term(1.0, ((j, SPIN_X), (j + 1, SPIN_X))))
        terms.append(Term(1.0, ((j, SPIN_Y), (j + 1, SPIN_Y))))
        if spec.lam != 0.0:
            terms.append(Term(spec.lam, ((j, SPIN_Z), (j + 1, SPIN_Z))))
    if spec.anisotropy != 0.0:
        sz2 = SPIN_Z @ SPIN_Z
        for j in range(n):
            terms.append(Term(spec.anisotropy, ((j, sz2),)))
    if spec.perturbation.active:
        terms.append(Term(eps, ((0, SPIN_Z),)))
        terms.append(Term(sign * eps, ((n - 1, SPIN_Z),)))
    return terms


@dataclass(frozen=True, eq=False)
class MatrixProductOperator:
    """Per-site tensors W[left, right, out, in]; boundary bonds have dimension 1."""

    tensors: tuple[np.ndarray, ...]

    @property
    def sites(self) -> int:
        return len(self.tensors)

    @property
    def local_dim(self) -> int:
        return self.tensors[0].shape[2]

    @property
    def bond_dims(self) -> list[int]:
        return [w.shape[1] for w in self.tensors[:-1]]

    def to_dense(self) -> np.ndarray:
        if self.local_dim**self.sites > DENSE_DIM_CAP:
            raise ModelError(f"dense contraction of {self.sites} sites exceeds the size cap")
        acc = self.tensors[0][0]
        for w in self.tensors[1:]:
            acc = np.einsum("vAB,vwab->wAaBb", acc, w)
            r, a, d1, b, d2 = acc.shape
            acc = acc.reshape(r, a * d1, b * d2)
        return acc[0]

    def dagger(self) -> MatrixProductOperator:
        return MatrixProductOperator(
            tuple(w.conj().transpose(0, 1, 3, 2) for w in self.tensors)
        )


class MpoBuilder:
    """Finite-state automaton compiler for sums of local operator products."""

    def __init__(self, sites: int, local_dim: int) -> None:
        if sites < 1:
            raise ModelError("MPO needs at least one site")
        self._n = sites
        self._d = local_dim
        # bond i sits left of site i; bond 0 and bond n are the boundaries
        self._bonds: list[list[object]] = [[_READY]] + [
            [_READY, _DONE] for _ in range(sites - 1)
        ] + [[_DONE]]
        self._moves: list[list[tuple[object, object, np.ndarray]]] = [[] for _ in range(sites)]
        self._channels = 0

    def _check_op(self, site: int, op: np.ndarray) -> np.ndarray:
        if not 0 <= site < self._n:
            raise ModelError(f"site {site} outside chain of {self._n}")
        op = np.asarray(op, dtype=np.complex128)
        if op.shape != (self._d, self._d):
            raise ModelError(f"operator shape {op.shape} does not match local dimension {self._d}")
        return op

    def _new_channel(self, kind: str) -> tuple[str, int]:
        label = (kind, self._channels)
        self._channels += 1
        return label

    def add_term(self, coefficient: complex, ops: tuple[tuple[int, np.ndarray], ...]) -> None:
        if coefficient == 0 or not ops:
            return
        ordered = sorted(((s, self._check_op(s, o)) for s, o in ops), key=lambda p: p[0])
        sites = [s for s, _ in ordered]
        if len(set(sites)) != len(sites):
            raise ModelError(f"term repeats a site: {sites}")
        if len(ordered) == 1:
            site, op = ordered[0]
            self._moves[site].append((_READY, _DONE, coefficient * op))
            return

        label = self._new_channel("term")
        first, last = sites[0], sites[-1]
        for b in range(first + 1, last + 1):
            self._bonds[b].append(label)
        placed = dict(ordered)
        self._moves[first].append((_READY, label, coefficient * placed[first]))
        for j in range(first + 1, last):
            self._moves[j].append((label, label, placed.get(j, np.eye(self._d))))
        self._moves[last].append((label, _DONE, placed[last]))

    def add_pair_sum(self, coefficient: complex, left: np.ndarray, right: np.ndarray) -> None:
        """Add coefficient * sum_{i<j} left_i right_j through one shared channel."""
        if coefficient == 0 or self._n < 2:
            return
        left = self._check_op(0, left)
        right = self._check_op(0, right)
        label = self._new_channel("pair")
        for b in range(1, self._n):
            self._bonds[b].append(label)
        for j in range(self._n):
            if j < self._n - 1:
                self._moves[j].append((_READY, label, coefficient * left))
            if 0 < j < self._n - 1:
                self._moves[j].append((label, label, np.eye(self._d)))
            if j > 0:
                self._moves[j].append((label, _DONE, right))

    def build(self) -> MatrixProductOperator:
        identity = np.eye(self._d, dtype=np.complex128)
        tensors = []
        for j in range(self._n):
            left = {s: i for i, s in enumerate(self._bonds[j])}
            right = {s: i for i, s in enumerate(self._bonds[j + 1])}
            w = np.zeros((len(left), len(right), self._d, self._d), dtype=np.complex128)
            for state in (_READY, _DONE):
                if state in left and state in right:
                    w[left[state], right[state]] += identity
            for src, dst, op in self._moves[j]:
                if src in left and dst in right:
                    w[left[src], right[dst]] += op
            tensors.append(w)
        mpo = MatrixProductOperator(tuple(tensors))
        log.debug("Built MPO on %d sites, bond dims %s", self._n, mpo.bond_dims)
        return mpo


def _add_sector_penalty(builder: MpoBuilder, sites: int, penalty: SectorPenalty) -> None:
    # mu (Sz_tot - m)^2 = mu sum Sz_i^2 + 2 mu sum_{i<j} Sz_i Sz_j - 2 mu m sum Sz_i + mu m^2
    mu, m = penalty.strength, penalty.target
    sz2 = SPIN_Z @ SPIN_Z
    for j in range(sites):
        builder.add_term(1.0, ((j, mu * sz2 - 2.0 * mu * m * SPIN_Z),))
    builder.add_pair_sum(2.0 * mu, SPIN_Z, SPIN_Z)
    builder.add_term(mu * m * m, ((0, I3),))


def build_cluster_ising(spec: ModelSpec) -> MatrixProductOperator:
    if spec.family is not ModelFamily.CLUSTER_ISING:
        raise ModelError(f"build_cluster_ising called with family {spec.family.value}")
    builder = MpoBuilder(spec.sites, 2)
    for term in model_terms(spec):
        builder.add_term(term.coefficient, term.ops)
    return builder.build()


def build_lambda_d(spec: ModelSpec) -> MatrixProductOperator:
    if spec.family is not ModelFamily.LAMBDA_D:
        raise ModelError(f"build_lambda_d called with family {spec.family.value}")
    builder = MpoBuilder(spec.sites, 3)
    for term in model_terms(spec):
        builder.add_term(term.coefficient, term.ops)
    if spec.sector_penalty is not None:
        _add_sector_penalty(builder, spec.sites, spec.sector_penalty)
    return builder.build()


def build_mpo(spec: ModelSpec) -> MatrixProductOperator:
    if spec.family is ModelFamily.CLUSTER_ISING:
        return build_cluster_ising(spec)
    return build_lambda_d(spec)


def total_sz_mpo(sites: int) -> MatrixProductOperator:
    builder = MpoBuilder(sites, 3)
    for j in range(sites):
        builder.add_term(1.0, ((j, SPIN_Z),))
    return builder.build()


def total_sz_squared_mpo(sites: int) -> MatrixProductOperator:
    builder = MpoBuilder(sites, 3)
    sz2 = SPIN_Z @ SPIN_Z
    for j in range(sites):
        builder.add_term(1.0, ((j, sz2),))
    builder.add_pair_sum(2.0, SPIN_Z, SPIN_Z)
    return builder.build()


def embed_operators(
    ops: dict[int, np.ndarray] | tuple[tuple[int, np.ndarray], ...],
    sites: int,
    local_dim: int,
) -> scipy.sparse.csr_matrix:
    """Sparse d^N x d^N matrix of a product of on-site operators."""
    placed = dict(ops)
    out = scipy.sparse.identity(1, dtype=np.complex128, format="csr")
    for j in range(sites):
        op = placed.get(j)
        factor = (
            scipy.sparse.identity(local_dim, dtype=np.complex128, format="csr")
            if op is None
            else scipy.sparse.csr_matrix(np.asarray(op, dtype=np.complex128))
        )
        out = scipy.sparse.kron(out, factor, format="csr")
    return out


def check_dense_size(sites: int, local_dim: int) -> int:
    dim = local_dim**sites
    if dim > DENSE_DIM_CAP:
        raise ModelError(
            f"dense Hilbert space {local_dim}^{sites} = {dim} exceeds cap {DENSE_DIM_CAP}"
        )
    return dim


def total_sz_diagonal(sites: int) -> np.ndarray:
    """Diagonal of Sz_tot for a spin-1 chain in the product basis."""
    per_site = np.array([1.0, 0.0, -1.0])
    total = np.zeros(1)
    for _ in range(sites):
        total = (total[:, None] + per_site[None, :]).ravel()
    return total


def build_sparse(spec: ModelSpec) -> scipy.sparse.csr_matrix:
    """Sparse Hamiltonian with the same term content as build_mpo."""
    dim = check_dense_size(spec.sites, spec.local_dim)
    h = scipy.sparse.csr_matrix((dim, dim), dtype=np.complex128)
    for term in model_terms(spec):
        h = h + term.coefficient * embed_operators(term.ops, spec.sites, spec.local_dim)
    if spec.sector_penalty is not None:
        shifted = total_sz_diagonal(spec.sites) - spec.sector_penalty.target
        h = h + scipy.sparse.diags(spec.sector_penalty.strength * shifted**2, format="csr")
    return h.tocsr()


def build_dense(spec: ModelSpec) -> np.ndarray:
    return build_sparse(spec).toarray()
