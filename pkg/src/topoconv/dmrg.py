"""Two-site DMRG ground-state search with density-matrix noise."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.special
from scipy.sparse.linalg import LinearOperator

from .models import (
    MatrixProductOperator,
    ModelFamily,
    ModelSpec,
    build_mpo,
    total_sz_mpo,
    total_sz_squared_mpo,
)
from .mps import (
    MatrixProductState,
    boundary_cut_spectrum,
    canonicalize,
    expectation_mpo,
    truncation_rank,
)
from .numerics import ConvergenceError, NumericsError, extremal_eigenpair, hermitian_eig, svd

log = logging.getLogger("topoconv")

NOISE_DECAY = 0.1
NOISE_FLOOR = 1e-11  # noise below this is switched off
ENTROPY_STABILITY = 1e-7
SECTOR_TOL = 1e-4


class DmrgError(RuntimeError):
    """Raised when a DMRG run fails; the message names sweep and site."""


class SectorError(DmrgError):
    """Raised when a penalized search does not land in the requested Sz_tot sector."""


@dataclass(frozen=True)
class DmrgConfig:
    chi_max: int | None = None  # None: 64 for spin-1/2, 100 for spin-1
    sweeps_max: int = 30
    energy_tol: float = 1e-10
    truncation_tol: float = 1e-12
    noise: float = 1e-6
    eigensolver_tol: float = 1e-9
    eigensolver_max_iter: int = 1000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.chi_max is not None and self.chi_max < 2:
            raise ValueError(f"chi_max must be >= 2, got {self.chi_max}")
        if self.sweeps_max < 1:
            raise ValueError(f"sweeps_max must be >= 1, got {self.sweeps_max}")
        for name in ("energy_tol", "truncation_tol", "eigensolver_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")

    def bond_limit(self, local_dim: int) -> int:
        if self.chi_max is not None:
            return self.chi_max
        return 64 if local_dim == 2 else 100

    def to_dict(self) -> dict:
        return {
            "chi_max": self.chi_max,
            "sweeps_max": self.sweeps_max,
            "energy_tol": self.energy_tol,
            "truncation_tol": self.truncation_tol,
            "noise": self.noise,
            "eigensolver_tol": self.eigensolver_tol,
            "eigensolver_max_iter": self.eigensolver_max_iter,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class GroundStateResult:
    state: MatrixProductState
    energy: float
    energy_history: tuple[float, ...]
    converged: bool
    max_discarded_weight: float
    entropy_history: tuple[float, ...] = field(default=())

    @property
    def sweeps(self) -> int:
        return len(self.energy_history)

    @property
    def publication_grade(self) -> bool:
        """Converged and mid-chain entropy stable over the final two sweeps."""
        if not self.converged or len(self.entropy_history) < 2:
            return False
        return abs(self.entropy_history[-1] - self.entropy_history[-2]) < ENTROPY_STABILITY


def _heff_apply(
    left: np.ndarray, w1: np.ndarray, w2: np.ndarray, right: np.ndarray, theta: np.ndarray
) -> np.ndarray:
    t = np.tensordot(left, theta, axes=([2], [0]))  # x w s t b
    t = np.tensordot(t, w1, axes=([1, 2], [0, 3]))  # x t b u s'
    t = np.tensordot(t, w2, axes=([1, 3], [3, 0]))  # x b s' v t'
    return np.tensordot(t, right, axes=([1, 3], [2, 1]))  # x s' t' z


def _extend_left(env: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("xwy,xsa,wvst,ytb->avb", env, a.conj(), w, a, optimize=True)


def _extend_right(env: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("avb,xsa,wvst,ytb->xwy", env, a.conj(), w, a, optimize=True)


def _von_neumann(weights: np.ndarray) -> float:
    return float(scipy.special.entr(weights).sum())


class _Sweeper:
    """Mutable sweep state for one ground_state call."""

    def __init__(
        self, op: MatrixProductOperator, state: MatrixProductState, cfg: DmrgConfig
    ) -> None:
        self.op = op
        self.cfg = cfg
        self.n = op.sites
        self.chi = cfg.bond_limit(op.local_dim)
        self.tensors = list(canonicalize(state, 0).tensors)
        one = np.ones((1, 1, 1), dtype=np.complex128)
        self.left: list[np.ndarray | None] = [one] + [None] * (self.n - 1)
        self.right: list[np.ndarray | None] = [None] * (self.n - 1) + [one]
        for i in range(self.n - 1, 0, -1):
            self.right[i - 1] = _extend_right(self.right[i], self.tensors[i], op.tensors[i])
        self.sweep = 0
        self.discarded = 0.0

    def _solve(self, i: int, noise: float) -> tuple[float, np.ndarray]:
        w1, w2 = self.op.tensors[i], self.op.tensors[i + 1]
        left, right = self.left[i], self.right[i + 1]
        theta = np.tensordot(self.tensors[i], self.tensors[i + 1], axes=([2], [0]))
        shape = theta.shape
        dim = theta.size

        def matvec(v: np.ndarray) -> np.ndarray:
            return _heff_apply(left, w1, w2, right, v.reshape(shape)).ravel()

        heff = LinearOperator((dim, dim), matvec=matvec, dtype=np.complex128)
        tol = max(self.cfg.eigensolver_tol, noise)
        try:
            energy, vec = extremal_eigenpair(
                heff, theta.ravel(), tol=tol, max_iter=self.cfg.eigensolver_max_iter
            )
        except ConvergenceError as e:
            log.debug("Local solve at sweep %d site %d retrying: %s", self.sweep, i, e)
            try:
                energy, vec = extremal_eigenpair(
                    heff,
                    theta.ravel(),
                    tol=tol,
                    max_iter=2 * self.cfg.eigensolver_max_iter,
                    krylov_dim=60,
                )
            except NumericsError as e2:
                raise DmrgError(f"sweep {self.sweep}, sites ({i}, {i + 1}): {e2}") from e2
        except NumericsError as e:
            raise DmrgError(f"sweep {self.sweep}, sites ({i}, {i + 1}): {e}") from e
        return energy, vec.reshape(shape)

    def _noise_term(self, i: int, theta: np.ndarray, to_right: bool) -> np.ndarray:
        l, d1, d2, r = theta.shape
        if to_right:
            t = np.tensordot(self.left[i], theta, axes=([2], [0]))
            t = np.tensordot(t, self.op.tensors[i], axes=([1, 2], [0, 3]))  # x t b u s'
            return t.transpose(0, 4, 3, 1, 2).reshape(l * d1, -1)
        t = np.tensordot(theta, self.right[i + 1], axes=([3], [2]))  # a s t z v
        t = np.tensordot(t, self.op.tensors[i + 1], axes=([2, 4], [3, 1]))  # a s z u t'
        return t.transpose(0, 1, 3, 4, 2).reshape(-1, d2 * r).T

    def _split(self, i: int, theta: np.ndarray, noise: float, to_right: bool) -> None:
        l, d1, d2, r = theta.shape
        m = theta.reshape(l * d1, d2 * r)
        # kept basis on the side the orthogonality centre leaves
        if noise > 0:
            side = m if to_right else m.T
            p = self._noise_term(i, theta, to_right)
            rho = side @ side.conj().T
            mixing = p @ p.conj().T
            rho = rho + noise * mixing / max(np.trace(mixing).real, 1e-300)
            values, vectors = hermitian_eig(rho)
            values, vectors = values[::-1], vectors[:, ::-1]
            weights = np.clip(values, 0.0, None) / np.clip(values, 0.0, None).sum()
            k = truncation_rank(weights, self.chi, self.cfg.truncation_tol)
            basis = vectors[:, :k]
            if to_right:
                a = basis
                b = basis.conj().T @ m
            else:
                b = basis.T
                a = m @ basis.conj()
            kept = np.linalg.norm(b if to_right else a) ** 2
        else:
            res = svd(m)
            weights = res.s**2 / np.sum(res.s**2)
            k = truncation_rank(weights, self.chi, self.cfg.truncation_tol)
            if to_right:
                a, b = res.u[:, :k], res.s[:k, None] * res.vt[:k]
            else:
                a, b = res.u[:, :k] * res.s[:k], res.vt[:k]
            kept = float(np.sum(res.s[:k] ** 2))
        total = float(np.linalg.norm(m) ** 2)
        self.discarded = max(self.discarded, max(0.0, 1.0 - kept / total))
        a = a.reshape(l, d1, k)
        b = b.reshape(k, d2, r)
        if to_right:
            b = b / np.linalg.norm(b)
        else:
            a = a / np.linalg.norm(a)
        self.tensors[i], self.tensors[i + 1] = a, b

    def run_sweep(self, noise: float) -> float:
        self.discarded = 0.0
        energy = np.inf
        for i in range(self.n - 1):
            energy, theta = self._solve(i, noise)
            self._split(i, theta, noise, to_right=True)
            self.left[i + 1] = _extend_left(self.left[i], self.tensors[i], self.op.tensors[i])
        for i in range(self.n - 2, -1, -1):
            energy, theta = self._solve(i, noise)
            self._split(i, theta, noise, to_right=False)
            self.right[i] = _extend_right(
                self.right[i + 1], self.tensors[i + 1], self.op.tensors[i + 1]
            )
        self.sweep += 1
        return energy

    def state(self) -> MatrixProductState:
        return MatrixProductState(tuple(self.tensors), canonical_center=0)


def ground_state(
    op: MatrixProductOperator,
    cfg: DmrgConfig | None = None,
    seed: int | None = None,
    initial: MatrixProductState | None = None,
) -> GroundStateResult:
    """Variational ground state of ``op``.

    Converged means a noise-free sweep changed the energy by less than
    ``cfg.energy_tol``.
    """
    cfg = cfg or DmrgConfig()
    seed = cfg.seed if seed is None else seed
    n = op.sites
    if n < 2:
        raise DmrgError("two-site DMRG needs at least two sites")
    if initial is None:
        initial = MatrixProductState.random(n, op.local_dim, bond_dim=2, seed=seed)
    elif initial.sites != n or initial.local_dim != op.local_dim:
        raise DmrgError("initial state does not match the MPO")

    sweeper = _Sweeper(op, initial, cfg)
    energies: list[float] = []
    entropies: list[float] = []
    converged = False
    noise = cfg.noise
    for sweep in range(cfg.sweeps_max):
        energy = sweeper.run_sweep(noise)
        state = sweeper.state()
        entropies.append(_von_neumann(boundary_cut_spectrum(state, n // 2).eigenvalues))
        delta = abs(energy - energies[-1]) if energies else np.inf
        energies.append(energy)
        log.debug(
            "sweep %d: E=%.12f dE=%.2e noise=%.1e chi=%d discarded=%.2e",
            sweep,
            energy,
            delta,
            noise,
            max(state.bond_dims, default=1),
            sweeper.discarded,
        )
        if noise == 0.0 and delta < cfg.energy_tol:
            converged = True
            break
        noise = noise * NOISE_DECAY
        if noise < NOISE_FLOOR:
            noise = 0.0

    state = sweeper.state()
    final = expectation_mpo(state, op)
    if converged:
        log.debug("DMRG converged after %d sweeps, E=%.12f", len(energies), final)
    else:
        log.warning(
            "DMRG not converged after %d sweeps (last dE=%.2e)",
            len(energies),
            abs(energies[-1] - energies[-2]) if len(energies) > 1 else float("nan"),
        )
    return GroundStateResult(
        state=state,
        energy=final,
        energy_history=tuple(energies),
        converged=converged,
        max_discarded_weight=sweeper.discarded,
        entropy_history=tuple(entropies),
    )


def sector_product_state(sites: int, target: int) -> MatrixProductState:
    """Spin-1 product state with |target| sites at +-1 spread evenly, the rest 0."""
    if abs(target) > sites:
        raise DmrgError(f"Sz_tot = {target} unreachable on {sites} sites")
    flipped = {int(round((k + 0.5) * sites / abs(target) - 0.5)) for k in range(abs(target))}
    up = 0 if target > 0 else 2
    return MatrixProductState.product([up if j in flipped else 1 for j in range(sites)], 3)


def ground_state_in_sector(
    spec: ModelSpec, cfg: DmrgConfig | None = None, seed: int | None = None
) -> GroundStateResult:
    """Penalized search for the lowest state with Sz_tot = target; reports the bare energy."""
    if spec.family is not ModelFamily.LAMBDA_D or spec.sector_penalty is None:
        raise DmrgError("sector search needs a lambda_d spec with a sector penalty")
    target = spec.sector_penalty.target
    result = ground_state(
        build_mpo(spec), cfg, seed=seed, initial=sector_product_state(spec.sites, target)
    )
    mean = expectation_mpo(result.state, total_sz_mpo(spec.sites))
    variance = expectation_mpo(result.state, total_sz_squared_mpo(spec.sites)) - mean**2
    if abs(mean - target) >= SECTOR_TOL or variance >= SECTOR_TOL:
        raise SectorError(
            f"state has <Sz_tot> = {mean:.6f} (variance {variance:.2e}), target {target}; "
            f"increase the penalty strength (now {spec.sector_penalty.strength})"
        )
    bare = expectation_mpo(result.state, build_mpo(spec.without_penalty()))
    return GroundStateResult(
        state=result.state,
        energy=bare,
        energy_history=result.energy_history,
        converged=result.converged,
        max_discarded_weight=result.max_discarded_weight,
        entropy_history=result.entropy_history,
    )


def ground_state_for_spec(
    spec: ModelSpec, cfg: DmrgConfig | None = None, seed: int | None = None
) -> GroundStateResult:
    if spec.sector_penalty is not None:
        return ground_state_in_sector(spec, cfg, seed)
    return ground_state(build_mpo(spec), cfg, seed)
