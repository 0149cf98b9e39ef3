"""Entropies, convertibility sign diagrams and phase diagnostics built on spectra."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.special
import scipy.stats

from .models import PAULI_Y, PAULI_Z, SPIN_ONE
from .mps import (
    MatrixProductState,
    RdmSpectrum,
    all_cut_spectra,
    local_profile,
    string_expectation,
    two_point_correlations,
)

log = logging.getLogger("topoconv")

SPECTRUM_FLOOR = 1e-14
PAIR_TOL = 1e-4
PAIR_WEIGHT_FLOOR = 1e-8
ZERO_TOL = 1e-6
CORRELATION_FLOOR = 1e-12
MIN_FIT_POINTS = 4
EDGE_SITES = 5
MIN_EDGE_CHAIN = 12
GOOD_FIT_R2 = 0.99


class AnalysisError(ValueError):
    """Raised when an analysis step has too little or mismatched input."""


@dataclass(frozen=True, eq=False)
class AlphaGrid:
    """Finite Renyi indices (ascending) and whether alpha = inf is appended."""

    values: np.ndarray
    include_infinity: bool = True

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or (v.size == 0 and not self.include_infinity):
            raise AnalysisError("alpha grid is empty")
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise AnalysisError("finite alpha values must be positive")
        if np.any(np.diff(v) <= 0):
            raise AnalysisError("alpha values must be strictly ascending")

    @classmethod
    def logspaced(
        cls, count: int = 40, lo: float = 0.1, hi: float = 100.0, include_infinity: bool = True
    ) -> AlphaGrid:
        if count < 1 or lo <= 0 or hi < lo:
            raise AnalysisError(f"bad alpha range: count={count}, min={lo}, max={hi}")
        return cls(np.logspace(np.log10(lo), np.log10(hi), count), include_infinity)

    @classmethod
    def parse(cls, text: str) -> AlphaGrid:
        """``"0.5,1,2,inf"`` or ``"logspace:0.1:100:40"`` (``:inf`` appended adds infinity)."""
        text = text.strip()
        m = re.fullmatch(r"logspace:([^:]+):([^:]+):(\d+)(:inf)?", text)
        try:
            if m:
                return cls.logspaced(int(m[3]), float(m[1]), float(m[2]), bool(m[4]))
            items = [t.strip().lower() for t in text.split(",") if t.strip()]
            finite = sorted(float(t) for t in items if t not in ("inf", "infinity"))
            return cls(np.array(finite), include_infinity=len(finite) != len(items))
        except ValueError as e:
            raise AnalysisError(f"cannot parse alpha grid {text!r}: {e}") from e

    @property
    def all_values(self) -> list[float]:
        out = [float(a) for a in self.values]
        if self.include_infinity:
            out.append(float("inf"))
        return out


def renyi_entropy(spectrum: RdmSpectrum, alpha: float) -> float:
    """S_alpha = log(sum x^alpha) / (1 - alpha); von Neumann at 1, -log x_1 at inf."""
    if not alpha > 0:
        raise AnalysisError(f"Renyi index must be positive, got {alpha}")
    x = spectrum.eigenvalues[spectrum.eigenvalues > SPECTRUM_FLOOR]
    if np.isinf(alpha):
        return float(-np.log(x[0]))
    if alpha == 1.0:
        return float(scipy.special.entr(x).sum())
    return float(scipy.special.logsumexp(alpha * np.log(x)) / (1.0 - alpha))


def renyi_entropies(spectrum: RdmSpectrum, alphas: AlphaGrid) -> np.ndarray:
    return np.array([renyi_entropy(spectrum, a) for a in alphas.all_values])


def entanglement_spectrum(spectrum: RdmSpectrum) -> np.ndarray:
    """Levels -log x_n, ascending."""
    x = spectrum.eigenvalues[spectrum.eigenvalues > SPECTRUM_FLOOR]
    return np.sort(-np.log(x))


@dataclass(frozen=True)
class DegeneracyReport:
    paired: bool
    max_gap_within_pairs: float
    levels: int


def degeneracy_report(
    es: np.ndarray, pair_tol: float = PAIR_TOL, weight_floor: float = PAIR_WEIGHT_FLOOR
) -> DegeneracyReport:
    """Do the significant levels group into consecutive degenerate pairs?"""
    levels = np.sort(np.asarray(es, dtype=float))
    levels = levels[levels < -np.log(weight_floor)]
    n = levels.size
    gaps = levels[1 : n - n % 2 : 2] - levels[0 : n - n % 2 : 2]
    max_gap = float(gaps.max()) if gaps.size else 0.0
    paired = n > 0 and n % 2 == 0 and max_gap < pair_tol
    return DegeneracyReport(paired=bool(paired), max_gap_within_pairs=max_gap, levels=n)


@dataclass(frozen=True, eq=False)
class SweepPoint:
    """One grid point: spectra keyed by partition label plus run diagnostics."""

    parameter: float
    energy: float
    spectra: dict[str, RdmSpectrum]
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SweepResult:
    parameter_name: str
    points: tuple[SweepPoint, ...]

    def __post_init__(self) -> None:
        grid = self.grid
        if grid.size and np.any(np.diff(grid) <= 0):
            raise AnalysisError("sweep grid must be strictly ascending")

    @property
    def grid(self) -> np.ndarray:
        return np.array([p.parameter for p in self.points], dtype=float)

    def spectra(self, label: str) -> list[RdmSpectrum]:
        try:
            return [p.spectra[label] for p in self.points]
        except KeyError as e:
            raise AnalysisError(f"partition {label} missing from sweep point") from e


class Verdict(str, Enum):
    CONVERTIBLE_UP = "convertible_up"
    CONVERTIBLE_DOWN = "convertible_down"
    NON_CONVERTIBLE = "non_convertible"
    INDETERMINATE = "indeterminate"

    @property
    def convertible(self) -> bool:
        return self in (Verdict.CONVERTIBLE_UP, Verdict.CONVERTIBLE_DOWN)


def verdict_for(signs: np.ndarray) -> Verdict:
    up, down = bool(np.any(signs > 0)), bool(np.any(signs < 0))
    if up and down:
        return Verdict.NON_CONVERTIBLE
    if up:
        return Verdict.CONVERTIBLE_UP
    if down:
        return Verdict.CONVERTIBLE_DOWN
    return Verdict.INDETERMINATE


@dataclass(frozen=True, eq=False)
class SignDiagram:
    """sign(dS_alpha/dp) on the (parameter, alpha) grid with per-parameter verdicts."""

    parameter_name: str
    partition: str
    grid: np.ndarray
    alphas: list[float]
    derivatives: np.ndarray  # [parameter, alpha]
    signs: np.ndarray  # int8, same shape
    verdicts: tuple[Verdict, ...]
    critical_adjacent: tuple[bool, ...]
    infinity_disagreements: tuple[float, ...] = ()


def _interior_maxima(values: np.ndarray) -> list[int]:
    out = []
    for i in range(1, len(values) - 1):
        window = values[i - 1 : i + 2]
        if np.all(np.isfinite(window)) and values[i] > values[i - 1] and values[i] > values[i + 1]:
            out.append(i)
    return out


def derivative_sign_diagram(
    sweep: SweepResult,
    partition: str,
    alphas: AlphaGrid,
    zero_tol: float = ZERO_TOL,
    correlation_lengths: Sequence[float] | None = None,
) -> SignDiagram:
    """Finite-difference dS_alpha/dp (central inside, one-sided at the ends) and verdicts.

    The largest finite alpha column is checked against -d log x_1/dp; parameter
    values where both exceed ``zero_tol`` with opposite signs are reported.
    """
    grid = sweep.grid
    if grid.size < 3:
        raise AnalysisError(f"need at least 3 grid points, got {grid.size}")
    spectra = sweep.spectra(partition)
    table = np.array([renyi_entropies(s, alphas) for s in spectra])
    derivatives = np.gradient(table, grid, axis=0, edge_order=1)
    signs = np.sign(derivatives).astype(np.int8)
    signs[np.abs(derivatives) <= zero_tol] = 0
    verdicts = tuple(verdict_for(row) for row in signs)

    disagreements: tuple[float, ...] = ()
    if alphas.values.size:
        log_top = np.array([np.log(s.eigenvalues[0]) for s in spectra])
        slope_top = -np.gradient(log_top, grid, edge_order=1)
        d_large = derivatives[:, alphas.values.size - 1]
        both = (np.abs(d_large) > zero_tol) & (np.abs(slope_top) > zero_tol)
        disagree = both & (np.sign(d_large) != np.sign(slope_top))
        disagreements = tuple(float(p) for p in grid[disagree])
    if disagreements:
        log.warning(
            "%s: largest-alpha column disagrees with -d log x_1 at %s = %s",
            partition,
            sweep.parameter_name,
            ", ".join(f"{p:g}" for p in disagreements),
        )

    adjacent = [False] * grid.size
    if correlation_lengths is not None:
        xi = np.asarray(correlation_lengths, dtype=float)
        for i in _interior_maxima(xi):
            for j in (i - 1, i, i + 1):
                adjacent[j] = True

    return SignDiagram(
        parameter_name=sweep.parameter_name,
        partition=partition,
        grid=grid,
        alphas=alphas.all_values,
        derivatives=derivatives,
        signs=signs,
        verdicts=verdicts,
        critical_adjacent=tuple(adjacent),
        infinity_disagreements=disagreements,
    )


class StringOrderKind(str, Enum):
    CLUSTER_Z = "cluster_z"
    LAMBDA_D_X = "lambda_d_x"
    LAMBDA_D_Z = "lambda_d_z"


def _string_ops(kind: StringOrderKind, sites: int) -> list[tuple[int, np.ndarray]]:
    if kind is StringOrderKind.CLUSTER_Z:
        end, link = PAULI_Y, PAULI_Z
    else:
        end = SPIN_ONE[kind.value[-1]]
        link = scipy.linalg.expm(1j * np.pi * end)
    return [(0, end)] + [(j, link) for j in range(1, sites - 1)] + [(sites - 1, end)]


def string_order(state: MatrixProductState, kind: StringOrderKind | str) -> float:
    """(-1)^(N-2) <E_0 prod_{0<j<N-1} L_j E_{N-1}> with end/link operators per kind."""
    kind = StringOrderKind(kind)
    expected_dim = 2 if kind is StringOrderKind.CLUSTER_Z else 3
    if state.local_dim != expected_dim:
        raise AnalysisError(f"string order {kind.value} needs local dimension {expected_dim}")
    n = state.sites
    value = (-1) ** (n - 2) * string_expectation(state, _string_ops(kind, n))
    if abs(value.imag) > 1e-8:
        raise AnalysisError(f"string order has imaginary part {value.imag:.3e}")
    return float(value.real)


def string_order_operators(kind: StringOrderKind | str, sites: int) -> list[tuple[int, np.ndarray]]:
    return _string_ops(StringOrderKind(kind), sites)


@dataclass(frozen=True, eq=False)
class CorrelationFit:
    xi: float
    fit_quality: float
    offsets: np.ndarray
    correlations: np.ndarray


def connected_correlations(
    state: MatrixProductState,
    op_pair: tuple[np.ndarray, np.ndarray],
    offsets: Sequence[int],
    anchor: int | None = None,
) -> np.ndarray:
    """C(n) = <A_j B_{j+n}> - <A_j><B_{j+n}> from a bulk anchor j."""
    n_sites = state.sites
    anchor = n_sites // 4 if anchor is None else anchor
    offsets = np.asarray(list(offsets), dtype=int)
    if offsets.size == 0:
        raise AnalysisError("no offsets given")
    if anchor < 0 or offsets.min() < 1 or anchor + offsets.max() >= n_sites:
        raise AnalysisError(f"offsets {offsets.min()}..{offsets.max()} from {anchor} leave the chain")
    if anchor < n_sites // 4 or anchor + offsets.max() > n_sites - 1 - n_sites // 4:
        log.warning(
            "Correlation window [%d, %d] reaches within N/4 of an edge",
            anchor,
            anchor + offsets.max(),
        )
    a, b = op_pair
    joint = two_point_correlations(state, a, b, anchor, offsets)
    mean_a = local_profile(state, a)
    mean_b = mean_a if b is a else local_profile(state, b)
    return (joint - mean_a[anchor] * mean_b[anchor + offsets]).real


def correlation_length(
    state: MatrixProductState,
    op_pair: tuple[np.ndarray, np.ndarray],
    offsets: Sequence[int],
    anchor: int | None = None,
) -> CorrelationFit:
    """xi = -1/slope of log|C(n)| against n over points with |C(n)| > 1e-12."""
    offsets = np.asarray(list(offsets), dtype=int)
    corr = connected_correlations(state, op_pair, offsets, anchor)
    usable = np.abs(corr) > CORRELATION_FLOOR
    if np.count_nonzero(usable) < MIN_FIT_POINTS:
        raise AnalysisError(
            f"only {np.count_nonzero(usable)} offsets with |C(n)| > {CORRELATION_FLOOR:g}; "
            "no decay to fit"
        )
    fit = scipy.stats.linregress(offsets[usable], np.log(np.abs(corr[usable])))
    xi = float(-1.0 / fit.slope) if fit.slope < 0 else float("inf")
    return CorrelationFit(
        xi=xi, fit_quality=float(fit.rvalue**2), offsets=offsets, correlations=corr
    )


@dataclass(frozen=True, eq=False)
class EdgeProfile:
    values: np.ndarray
    localization: float


def edge_profile(state: MatrixProductState, site_operator: np.ndarray) -> EdgeProfile:
    """<O_j> on every site and the edge-minus-centre localization score.

    The score averages |<O_j>| over the 5 outermost sites at each end minus
    the average over the 5 central sites.
    """
    n = state.sites
    if n < MIN_EDGE_CHAIN:
        raise AnalysisError(f"edge profile needs N >= {MIN_EDGE_CHAIN}, got {n}")
    values = local_profile(state, site_operator)
    mags = np.abs(values)
    edges = np.concatenate([mags[:EDGE_SITES], mags[-EDGE_SITES:]])
    mid = n // 2 - EDGE_SITES // 2
    centre = mags[mid : mid + EDGE_SITES]
    return EdgeProfile(values=values, localization=float(edges.mean() - centre.mean()))


@dataclass(frozen=True)
class CentralChargeFit:
    c: float
    fit_quality: float
    poor_fit: bool


def central_charge_from_entropies(
    sites: int, cuts: Sequence[int], entropies: Sequence[float]
) -> CentralChargeFit:
    """Fit S(l) = c/6 log[(2N/pi) sin(pi l/N)] + const (open chain)."""
    cuts = np.asarray(list(cuts), dtype=float)
    entropies = np.asarray(list(entropies), dtype=float)
    if cuts.size < 3:
        raise AnalysisError("central charge fit needs at least 3 cuts")
    x = np.log(2.0 * sites / np.pi * np.sin(np.pi * cuts / sites)) / 6.0
    fit = scipy.stats.linregress(x, entropies)
    quality = float(fit.rvalue**2)
    poor = quality < GOOD_FIT_R2
    if poor:
        log.warning("Central charge fit is poor (R^2 = %.4f)", quality)
    return CentralChargeFit(c=float(fit.slope), fit_quality=quality, poor_fit=poor)


def default_cuts(sites: int) -> list[int]:
    return list(range(max(1, sites // 8), min(sites - 1, 7 * sites // 8) + 1))


def central_charge_fit(
    state: MatrixProductState, cuts: Sequence[int] | None = None
) -> CentralChargeFit:
    cuts = default_cuts(state.sites) if cuts is None else list(cuts)
    spectra = all_cut_spectra(state)
    entropies = [renyi_entropy(spectra[ell - 1], 1.0) for ell in cuts]
    return central_charge_from_entropies(state.sites, cuts, entropies)
