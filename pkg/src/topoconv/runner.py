"""Sweep execution: parallel ground states, per-point analysis, result files, oracle checks."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import re
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
import psutil
import scipy

from . import __version__
from .analysis import (
    AlphaGrid,
    AnalysisError,
    SignDiagram,
    StringOrderKind,
    SweepPoint,
    SweepResult,
    central_charge_fit,
    correlation_length,
    degeneracy_report,
    derivative_sign_diagram,
    edge_profile,
    entanglement_spectrum,
    renyi_entropy,
    string_order,
    string_order_operators,
)
from .cache import GroundStateCache
from .config import RunConfig
from .dmrg import GroundStateResult, ground_state, ground_state_for_spec
from .exact import (
    CovarianceMatrix,
    block_renyi_free_fermion,
    ed_block_spectrum,
    ed_expectation,
    ed_ground,
    ed_sector_ground,
    ed_spectrum,
    ground_covariance,
    majorana_model,
)
from .models import (
    PAULI,
    PAULI_Z,
    SPIN_ONE,
    SPIN_Z,
    ModelFamily,
    ModelSpec,
    PerturbationKind,
    PerturbationSpec,
    build_mpo,
)
from .mps import (
    BlockTooLargeError,
    MatrixProductState,
    PartitionKind,
    RdmSpectrum,
    boundary_cut_spectrum,
    compress,
    middle_block_spectrum,
    partition_spectrum,
)

log = logging.getLogger("topoconv")

ED_SITES = {ModelFamily.CLUSTER_ISING: 10, ModelFamily.LAMBDA_D: 8}
ED_TOL = 1e-8
FF_ENERGY_TOL = 1e-8  # relative
FF_ENTROPY_TOL = 1e-6
FF_ALPHAS = (0.5, 1.0, 2.0, math.inf)
FF_BLOCK = 10
ED_DEGENERATE_GAP = 1e-9


@dataclass(frozen=True, eq=False)
class PointAnalysis:
    parameter: float
    spectra: dict[str, RdmSpectrum]
    observables: dict
    compressed: dict[str, float] = field(default_factory=dict)


@dataclass(eq=False)
class RunReport:
    config: RunConfig
    sweep: SweepResult
    diagrams: dict[str, SignDiagram]
    observables: dict[float, dict]
    results: dict[float, GroundStateResult]
    failed: dict[float, str]

    @property
    def unconverged(self) -> list[float]:
        return [p for p, r in self.results.items() if not r.converged]


def _execute(
    fn: Callable, jobs: Sequence[tuple], workers: int
) -> Iterator[tuple[int, object, BaseException | None]]:
    """Yield (job index, result, error) as jobs finish; one process per worker."""
    if workers <= 1 or len(jobs) <= 1:
        for i, args in enumerate(jobs):
            try:
                yield i, fn(*args), None
            except Exception as e:  # reported per point
                yield i, None, e
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, *args): i for i, args in enumerate(jobs)}
        for future in as_completed(futures):
            i = futures[future]
            try:
                yield i, future.result(), None
            except Exception as e:
                yield i, None, e


def _finite_or_none(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def _observable_operator(spec: ModelSpec, component: str) -> np.ndarray:
    return (PAULI if spec.family is ModelFamily.CLUSTER_ISING else SPIN_ONE)[component]


def analyse_point(
    state: MatrixProductState, spec: ModelSpec, parameter: float, config: RunConfig
) -> PointAnalysis:
    """Spectra for every partition plus the requested observables at one grid point."""
    spectra: dict[str, RdmSpectrum] = {}
    compressed: dict[str, float] = {}
    for part in config.partitions:
        try:
            spectra[part.label] = partition_spectrum(state, part, config.block_cap)
        except BlockTooLargeError:
            chi = math.isqrt(config.block_cap)
            small, discarded = compress(state, chi)
            compressed[part.label] = max(discarded, default=0.0)
            log.warning(
                "%s at %s=%g: compressed to chi=%d for block spectrum (discarded weight %.2e)",
                part.label,
                config.sweep.parameter,
                parameter,
                chi,
                compressed[part.label],
            )
            spectra[part.label] = partition_spectrum(small, part, config.block_cap)

    flags = config.observables
    n = state.sites
    obs: dict = {}
    cluster = spec.family is ModelFamily.CLUSTER_ISING
    if flags.string_order:
        kinds = (
            [StringOrderKind.CLUSTER_Z]
            if cluster
            else [StringOrderKind.LAMBDA_D_X, StringOrderKind.LAMBDA_D_Z]
        )
        obs["string_order"] = {k.value: string_order(state, k) for k in kinds}
    if flags.correlation_length:
        op = _observable_operator(spec, flags.correlation_component)
        anchor = n // 4
        offsets = range(1, n - 2 * anchor)
        try:
            fit = correlation_length(state, (op, op), offsets, anchor)
            obs["correlation_length"] = {
                "xi": _finite_or_none(fit.xi),
                "fit_quality": fit.fit_quality,
            }
        except AnalysisError as e:
            obs["correlation_length"] = {"xi": None, "error": str(e)}
    if flags.edge_profile:
        try:
            profile = edge_profile(state, PAULI_Z if cluster else SPIN_Z)
            obs["edge_profile"] = {
                "values": [float(v) for v in profile.values],
                "localization": profile.localization,
            }
        except AnalysisError as e:
            obs["edge_profile"] = {"error": str(e)}
    if flags.degeneracy:
        reports = {}
        for label, spectrum in spectra.items():
            rep = degeneracy_report(entanglement_spectrum(spectrum))
            reports[label] = {
                "paired": rep.paired,
                "max_gap_within_pairs": rep.max_gap_within_pairs,
                "levels": rep.levels,
            }
        obs["degeneracy"] = reports
    if flags.central_charge:
        fit = central_charge_fit(state)
        obs["central_charge"] = {
            "c": fit.c,
            "fit_quality": fit.fit_quality,
            "poor_fit": fit.poor_fit,
        }
    return PointAnalysis(parameter, spectra, obs, compressed)


def _solve_point(spec: ModelSpec, config: RunConfig) -> GroundStateResult:
    return ground_state_for_spec(spec, config.dmrg, config.dmrg.seed)


def run(config: RunConfig) -> RunReport:
    """Solve every grid point (cache first), analyse, and write all result files."""
    grid = config.sweep.grid()
    name = config.sweep.parameter
    specs = [config.model.with_parameter(name, p) for p in grid]
    print(
        f"topoconv: {config.name}: {len(grid)} points in {name}, {config.workers} worker(s)",
        flush=True,
    )

    cache = GroundStateCache(config.cache_dir)
    seed = config.dmrg.seed
    results: dict[int, GroundStateResult] = {}
    for i, spec in enumerate(specs):
        hit = cache.get(spec, config.dmrg, seed)
        if hit is not None:
            results[i] = hit
    pending = [i for i in range(len(specs)) if i not in results]
    log.info("%d of %d points cached, solving %d", len(results), len(specs), len(pending))

    failed: dict[int, str] = {}
    jobs = [(specs[i], config) for i in pending]
    for j, result, error in _execute(_solve_point, jobs, config.workers):
        i = pending[j]
        if error is not None:
            log.warning("%s=%g failed: %s", name, grid[i], error, exc_info=error)
            failed[i] = f"{type(error).__name__}: {error}"
            continue
        cache.put(specs[i], config.dmrg, seed, result)
        results[i] = result
        print(
            f"topoconv: {name}={grid[i]:g} E={result.energy:.12f}"
            + ("" if result.converged else " (not converged)"),
            flush=True,
        )

    solved = sorted(results)
    jobs = [(results[i].state, specs[i], float(grid[i]), config) for i in solved]
    analyses: dict[int, PointAnalysis] = {}
    for j, analysis, error in _execute(analyse_point, jobs, config.workers):
        i = solved[j]
        if error is not None:
            log.warning("analysis at %s=%g failed: %s", name, grid[i], error, exc_info=error)
            failed[i] = f"{type(error).__name__}: {error}"
            continue
        analyses[i] = analysis

    kept = sorted(analyses)
    points = tuple(
        SweepPoint(
            parameter=float(grid[i]),
            energy=results[i].energy,
            spectra=analyses[i].spectra,
            converged=results[i].converged,
            diagnostics={"compressed": analyses[i].compressed},
        )
        for i in kept
    )
    sweep = SweepResult(parameter_name=name, points=points)

    xi = None
    if config.observables.correlation_length:
        xi = [
            analyses[i].observables["correlation_length"]["xi"] or math.nan for i in kept
        ]
    diagrams = {
        part.label: derivative_sign_diagram(sweep, part.label, config.alphas, config.zero_tol, xi)
        for part in config.partitions
    }
    report = RunReport(
        config=config,
        sweep=sweep,
        diagrams=diagrams,
        observables={float(grid[i]): analyses[i].observables for i in kept},
        results={float(grid[i]): results[i] for i in kept},
        failed={float(grid[i]): msg for i, msg in sorted(failed.items())},
    )
    write_outputs(report)
    for label, diagram in diagrams.items():
        counts: dict[str, int] = {}
        for v in diagram.verdicts:
            counts[v.value] = counts.get(v.value, 0) + 1
        summary = ", ".join(f"{k}={c}" for k, c in sorted(counts.items()))
        print(f"topoconv: {label}: {summary}", flush=True)
    return report


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.17g}"


_FLOAT_MARK = re.compile(r'"\\u0000([^"]*)"')


def _json_float(x: float) -> str:
    text = _fmt(x)
    return text if any(c in text for c in ".e") else text + ".0"


def _mark_floats(obj: object) -> object:
    # finite floats become NUL-prefixed strings, unquoted again after encoding
    if isinstance(obj, float):
        return "\0" + _json_float(obj) if math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: _mark_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_mark_floats(v) for v in obj]
    return obj


def _write_json(path: Path, data: object) -> None:
    """JSON with every finite float at 17 significant digits, like the CSV files."""
    text = json.dumps(_mark_floats(data), indent=2)
    path.write_text(_FLOAT_MARK.sub(lambda m: m[1], text) + "\n")


def partition_dirname(label: str) -> str:
    return label.replace("|", "-")


def write_sign_diagram(diagram: SignDiagram, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "sign_diagram.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p", "alpha", "sign"])
        for i, p in enumerate(diagram.grid):
            for j, alpha in enumerate(diagram.alphas):
                writer.writerow([_fmt(p), _fmt(alpha), int(diagram.signs[i, j])])
    with open(directory / "verdicts.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p", "verdict", "critical_adjacent"])
        for p, verdict, adjacent in zip(diagram.grid, diagram.verdicts, diagram.critical_adjacent):
            writer.writerow([_fmt(p), verdict.value, "true" if adjacent else "false"])


def write_outputs(report: RunReport) -> None:
    config = report.config
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    for label, diagram in report.diagrams.items():
        write_sign_diagram(diagram, out / partition_dirname(label))

    _write_json(
        out / "spectra.json",
        {
            "parameter": report.sweep.parameter_name,
            "points": [
                {
                    "p": pt.parameter,
                    "energy": pt.energy,
                    "converged": pt.converged,
                    "spectra": {k: [float(x) for x in s.eigenvalues] for k, s in pt.spectra.items()},
                }
                for pt in report.sweep.points
            ],
        },
    )
    _write_json(
        out / "observables.json",
        {
            "parameter": report.sweep.parameter_name,
            "points": [{"p": p, **obs} for p, obs in report.observables.items()],
        },
    )
    _write_json(
        out / "manifest.json",
        {
            "tool": "topoconv",
            "version": __version__,
            "config": config.to_dict(),
            "config_hash": config.config_hash(),
            "seeds": {"dmrg": config.dmrg.seed},
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "psutil": psutil.__version__,
            },
            "host": {
                "physical_cores": psutil.cpu_count(logical=False),
                "memory_bytes": psutil.virtual_memory().total,
            },
            "points": [
                {
                    "p": p,
                    "converged": r.converged,
                    "publication_grade": r.publication_grade,
                    "sweeps": r.sweeps,
                    "energy": r.energy,
                    "max_discarded_weight": r.max_discarded_weight,
                    "compressed": pt.diagnostics.get("compressed", {}),
                }
                for (p, r), pt in zip(report.results.items(), report.sweep.points)
            ],
            "failed": [{"p": p, "error": msg} for p, msg in report.failed.items()],
            "infinity_disagreements": {
                label: list(d.infinity_disagreements) for label, d in report.diagrams.items()
            },
        },
    )
    log.info("Results written to %s", out)


@dataclass(eq=False)
class VerifyReport:
    checks: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def add(self, name: str, parameter: float, deviation: float, tolerance: float) -> None:
        ok = bool(deviation <= tolerance)
        self.checks.append(
            {
                "check": name,
                "p": float(parameter),
                "deviation": float(deviation),
                "tolerance": tolerance,
                "passed": ok,
            }
        )
        level = logging.INFO if ok else logging.WARNING
        log.log(level, "%s at p=%g: deviation %.3e (tolerance %.0e)", name, parameter, deviation, tolerance)


def spectrum_deviation(a: RdmSpectrum, b: RdmSpectrum) -> float:
    n = max(a.eigenvalues.size, b.eigenvalues.size)
    pa = np.pad(a.eigenvalues, (0, n - a.eigenvalues.size))
    pb = np.pad(b.eigenvalues, (0, n - b.eigenvalues.size))
    return float(np.max(np.abs(pa - pb)))


def _verify_points(grid: np.ndarray) -> list[float]:
    return [float(grid[i]) for i in sorted({0, len(grid) // 2, len(grid) - 1})]


def _verify_ed(config: RunConfig, report: VerifyReport) -> None:
    n = ED_SITES[config.model.family]
    small = replace(config.model, sites=n)
    d = small.local_dim
    name = config.sweep.parameter
    kinds = (
        [StringOrderKind.CLUSTER_Z]
        if small.family is ModelFamily.CLUSTER_ISING
        else [StringOrderKind.LAMBDA_D_X, StringOrderKind.LAMBDA_D_Z]
    )
    for p in _verify_points(config.sweep.grid()):
        spec = small.with_parameter(name, p)
        result = ground_state_for_spec(spec, config.dmrg, config.dmrg.seed)
        if spec.sector_penalty is not None:
            e_exact, psi = ed_sector_ground(spec, spec.sector_penalty.target)
        else:
            e_exact, psi = ed_ground(spec)
        report.add("ed_energy", p, abs(result.energy - e_exact), ED_TOL)
        if spec.sector_penalty is None and np.diff(ed_spectrum(spec, 2))[0] < ED_DEGENERATE_GAP:
            log.info("ED ground manifold at %s=%g is degenerate; state checks skipped", name, p)
            continue
        cut = n // 2
        report.add(
            "ed_cut_spectrum",
            p,
            spectrum_deviation(boundary_cut_spectrum(result.state, cut), ed_block_spectrum(psi, range(cut), d)),
            ED_TOL,
        )
        start = n // 2 - 1
        report.add(
            "ed_block_spectrum",
            p,
            spectrum_deviation(
                middle_block_spectrum(result.state, start, 2),
                ed_block_spectrum(psi, range(start, start + 2), d),
            ),
            ED_TOL,
        )
        for kind in kinds:
            exact = (-1) ** (n - 2) * ed_expectation(psi, string_order_operators(kind, n), d).real
            report.add(f"ed_string_order_{kind.value}", p, abs(string_order(result.state, kind) - exact), ED_TOL)


def _verify_free_fermion(config: RunConfig, report: VerifyReport) -> None:
    base = config.model
    n = base.sites
    majorana = replace(
        base,
        perturbation=PerturbationSpec(
            PerturbationKind.CLUSTER_MAJORANA, base.perturbation.strength, base.perturbation.sign
        ),
    )
    blocks = sorted({ell for ell in (FF_BLOCK, n // 2) if 0 < ell < n})
    for p in _verify_points(config.sweep.grid()):
        spec = majorana.with_parameter(config.sweep.parameter, p)
        result = ground_state(build_mpo(spec), config.dmrg, config.dmrg.seed)
        cov, e_ff = ground_covariance(majorana_model(spec))
        report.add("ff_energy_relative", p, abs(result.energy - e_ff) / max(abs(e_ff), 1e-300), FF_ENERGY_TOL)
        # a degenerate Gaussian ground space is matched against its closest filling
        fillings = [cov] + [CovarianceMatrix(a) for a in cov.alternatives]
        for ell in blocks:
            spectrum = boundary_cut_spectrum(result.state, ell)
            for alpha in FF_ALPHAS:
                s = renyi_entropy(spectrum, alpha)
                deviation = min(abs(s - block_renyi_free_fermion(c, range(ell), alpha)) for c in fillings)
                report.add(f"ff_entropy_l{ell}_alpha{_fmt(alpha)}", p, deviation, FF_ENTROPY_TOL)


def verify(config: RunConfig) -> VerifyReport:
    """Compare DMRG against ED (scaled-down chain) and, for cluster-Ising, free fermions."""
    print(f"topoconv: verifying {config.name}", flush=True)
    report = VerifyReport()
    _verify_ed(config, report)
    if config.model.family is ModelFamily.CLUSTER_ISING and config.model.sites >= 3:
        _verify_free_fermion(config, report)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    _write_json(
        config.output_dir / "verify.json",
        {"config_hash": config.config_hash(), "passed": report.passed, "checks": report.checks},
    )
    worst = max(report.checks, key=lambda c: c["deviation"] / c["tolerance"], default=None)
    print(
        f"topoconv: verify {'passed' if report.passed else 'FAILED'}"
        + (f" (worst {worst['check']}: {worst['deviation']:.2e})" if worst else ""),
        flush=True,
    )
    return report


def entropy_table(spectra_path: Path | str, alphas: AlphaGrid) -> list[tuple[float, str, float, float]]:
    """Re-analyse a spectra.json: rows (p, partition, alpha, S_alpha)."""
    data = json.loads(Path(spectra_path).read_text())
    rows = []
    for point in data["points"]:
        for label, values in point["spectra"].items():
            spectrum = RdmSpectrum.from_weights(np.array(values))
            for alpha in alphas.all_values:
                rows.append((point["p"], label, alpha, renyi_entropy(spectrum, alpha)))
    return rows
