import math

import numpy as np
import pytest

from topoconv.analysis import (
    AlphaGrid,
    AnalysisError,
    StringOrderKind,
    SweepPoint,
    SweepResult,
    Verdict,
    central_charge_fit,
    central_charge_from_entropies,
    connected_correlations,
    correlation_length,
    default_cuts,
    degeneracy_report,
    derivative_sign_diagram,
    edge_profile,
    entanglement_spectrum,
    renyi_entropies,
    renyi_entropy,
    string_order,
    string_order_operators,
    verdict_for,
)
from topoconv.dmrg import DmrgConfig, ground_state
from topoconv.exact import ed_block_spectrum, ed_expectation, ed_ground
from topoconv.models import (
    PAULI_X,
    SPIN_Z,
    ModelFamily,
    ModelSpec,
    PerturbationKind,
    PerturbationSpec,
    build_mpo,
)
from topoconv.mps import MatrixProductState, RdmSpectrum, boundary_cut_spectrum


def spectrum(values):
    return RdmSpectrum.from_weights(np.asarray(values, dtype=float))


def aklt_chain(sites):
    """AKLT state with both edge spins fixed; bulk S^z correlations go as (-1/3)^n."""
    plus = np.sqrt(2 / 3) * np.array([[0, 1], [0, 0]])
    zero = -np.sqrt(1 / 3) * np.array([[1, 0], [0, -1]])
    minus = -np.sqrt(2 / 3) * np.array([[0, 0], [1, 0]])
    bulk = np.stack([plus, zero, minus], axis=1)  # [left, phys, right]
    first = bulk[:1]
    last = bulk[:, :, :1]
    return MatrixProductState((first,) + (bulk,) * (sites - 2) + (last,))


def test_renyi_limits_of_flat_spectrum():
    flat = spectrum([0.25] * 4)
    for alpha in (0.1, 0.5, 1.0, 2.0, 100.0, math.inf):
        assert renyi_entropy(flat, alpha) == pytest.approx(math.log(4))


def test_renyi_entropy_values():
    s = spectrum([0.7, 0.2, 0.1])
    x = np.array([0.7, 0.2, 0.1])
    assert renyi_entropy(s, 1.0) == pytest.approx(-(x * np.log(x)).sum())
    assert renyi_entropy(s, 2.0) == pytest.approx(-math.log((x**2).sum()))
    assert renyi_entropy(s, math.inf) == pytest.approx(-math.log(0.7))
    large = renyi_entropy(s, 1000.0)
    assert np.isfinite(large)
    assert large == pytest.approx(-1000 * math.log(0.7) / 999, rel=1e-9)
    with pytest.raises(AnalysisError):
        renyi_entropy(s, 0.0)


def test_renyi_entropies_are_monotone_in_alpha():
    rng = np.random.default_rng(2)
    s = spectrum(rng.random(30) ** 4)
    values = renyi_entropies(s, AlphaGrid.logspaced())
    assert values.shape == (41,)
    assert np.all(np.diff(values) <= 1e-12)
    assert values[-1] == pytest.approx(-math.log(s.eigenvalues[0]))


def test_entanglement_spectrum_and_pairing():
    es = entanglement_spectrum(spectrum([0.4, 0.4, 0.1, 0.1]))
    np.testing.assert_allclose(es, -np.log([0.4, 0.4, 0.1, 0.1]))
    report = degeneracy_report(es)
    assert report.paired and report.levels == 4
    assert report.max_gap_within_pairs == pytest.approx(0.0, abs=1e-12)


def test_degeneracy_report_detects_unpaired_levels():
    assert not degeneracy_report(np.array([0.5, 1.5])).paired
    assert not degeneracy_report(np.array([0.5, 0.5, 1.0])).paired
    # levels below the weight floor are ignored
    assert degeneracy_report(np.array([0.7, 0.7, 30.0])).paired
    assert not degeneracy_report(np.array([])).paired


def test_alpha_grid_parsing():
    grid = AlphaGrid.parse("2, 0.5, 1, inf")
    np.testing.assert_allclose(grid.values, [0.5, 1.0, 2.0])
    assert grid.include_infinity
    assert grid.all_values[-1] == math.inf
    spaced = AlphaGrid.parse("logspace:0.1:100:40:inf")
    assert spaced.values.size == 40 and spaced.include_infinity
    assert spaced.values[0] == pytest.approx(0.1) and spaced.values[-1] == pytest.approx(100)
    assert not AlphaGrid.parse("logspace:1:10:3").include_infinity
    for bad in ("", "0.5,-1", "abc", "logspace:0:1:3"):
        with pytest.raises(AnalysisError):
            AlphaGrid.parse(bad)


def test_verdict_for():
    assert verdict_for(np.array([1, 1, 0])) is Verdict.CONVERTIBLE_UP
    assert verdict_for(np.array([-1, 0])) is Verdict.CONVERTIBLE_DOWN
    assert verdict_for(np.array([-1, 1])) is Verdict.NON_CONVERTIBLE
    assert verdict_for(np.array([0, 0])) is Verdict.INDETERMINATE
    assert Verdict.CONVERTIBLE_DOWN.convertible and not Verdict.NON_CONVERTIBLE.convertible


def _two_level_sweep(grid):
    points = tuple(
        SweepPoint(p, -1.0, {"2|2": spectrum([0.9 - 0.1 * p, 0.1 + 0.1 * p])}) for p in grid
    )
    return SweepResult("g", points)


def test_sign_diagram_convertible_sweep():
    diagram = derivative_sign_diagram(_two_level_sweep([0.0, 0.5, 1.0, 1.5]), "2|2", AlphaGrid.logspaced(8))
    assert diagram.signs.shape == (4, 9)
    assert np.all(diagram.signs == 1)
    assert all(v is Verdict.CONVERTIBLE_UP for v in diagram.verdicts)
    assert diagram.infinity_disagreements == ()
    assert diagram.critical_adjacent == (False,) * 4


def test_sign_diagram_non_convertible_point():
    # the top eigenvalue grows (S_inf falls) while a hundred small levels grow (S_0.1 rises)
    points = []
    for p in (0.0, 0.1, 0.2):
        top, tiny = 0.6 + 0.1 * p, 1e-4 * (1 + 10 * p)
        values = [top, 1 - top - 100 * tiny] + [tiny] * 100
        points.append(SweepPoint(p, -1.0, {"a": spectrum(values)}))
    alphas = AlphaGrid(np.array([0.1]), include_infinity=True)
    diagram = derivative_sign_diagram(SweepResult("g", tuple(points)), "a", alphas)
    assert list(diagram.signs[1]) == [1, -1]
    assert diagram.verdicts[1] is Verdict.NON_CONVERTIBLE


def test_largest_finite_alpha_checked_against_top_eigenvalue():
    # x_1 creeps up while the near-top levels fall away, so S_100 rises
    # even though -log x_1 falls
    rows = (
        [0.3, 0.3, 0.3, 0.1],
        [0.301, 0.29, 0.28, 0.129],
        [0.302, 0.28, 0.26, 0.158],
    )
    sweep = SweepResult(
        "g", tuple(SweepPoint(p, -1.0, {"a": spectrum(v)}) for p, v in zip((0.0, 0.1, 0.2), rows))
    )
    for include_infinity in (True, False):
        alphas = AlphaGrid(np.array([1.0, 100.0]), include_infinity=include_infinity)
        diagram = derivative_sign_diagram(sweep, "a", alphas)
        assert list(diagram.signs[:, 1]) == [1, 1, -1]
        assert diagram.infinity_disagreements == pytest.approx((0.0, 0.1))
        assert list(diagram.signs[:, -1]) == ([-1, -1, -1] if include_infinity else [1, 1, -1])


def test_sign_diagram_zero_tolerance_and_critical_marks():
    sweep = _two_level_sweep([0.0, 0.1, 0.2, 0.3, 0.4])
    diagram = derivative_sign_diagram(
        sweep, "2|2", AlphaGrid.logspaced(4), zero_tol=10.0, correlation_lengths=[1, 2, 5, 2, 1]
    )
    assert np.all(diagram.signs == 0)
    assert all(v is Verdict.INDETERMINATE for v in diagram.verdicts)
    assert diagram.critical_adjacent == (False, True, True, True, False)


def test_sign_diagram_input_checks():
    with pytest.raises(AnalysisError):
        derivative_sign_diagram(_two_level_sweep([0.0, 1.0]), "2|2", AlphaGrid.logspaced())
    with pytest.raises(AnalysisError):
        derivative_sign_diagram(_two_level_sweep([0.0, 0.5, 1.0]), "3|3", AlphaGrid.logspaced())
    with pytest.raises(AnalysisError):
        _two_level_sweep([0.0, 1.0, 0.5])


def _cluster_state(g, sites=10):
    spec = ModelSpec(
        ModelFamily.CLUSTER_ISING,
        sites,
        g=g,
        perturbation=PerturbationSpec(PerturbationKind.CLUSTER_LOGICAL),
    )
    _, psi = ed_ground(spec)
    return MatrixProductState.from_statevector(psi, sites, 2), psi


def test_cluster_string_order():
    state, psi = _cluster_state(0.0)
    exact = ed_expectation(psi, string_order_operators(StringOrderKind.CLUSTER_Z, 10), 2).real
    value = string_order(state, "cluster_z")
    assert value == pytest.approx(exact, abs=1e-10)
    assert abs(value) == pytest.approx(1.0, abs=1e-6)
    assert abs(string_order(_cluster_state(1.8)[0], StringOrderKind.CLUSTER_Z)) < abs(value)


@pytest.mark.parametrize("kind", [StringOrderKind.LAMBDA_D_X, StringOrderKind.LAMBDA_D_Z])
def test_spin_one_string_order_matches_ed(kind):
    spec = ModelSpec(
        ModelFamily.LAMBDA_D, 7, perturbation=PerturbationSpec(PerturbationKind.SPIN_ONE_EDGE)
    )
    _, psi = ed_ground(spec)
    state = MatrixProductState.from_statevector(psi, 7, 3)
    exact = (-1) ** 5 * ed_expectation(psi, string_order_operators(kind, 7), 3)
    assert string_order(state, kind) == pytest.approx(exact.real, abs=1e-10)


def test_string_order_checks_local_dimension():
    with pytest.raises(AnalysisError):
        string_order(MatrixProductState.product([0] * 4, 2), StringOrderKind.LAMBDA_D_Z)


def test_aklt_correlation_length():
    fit = correlation_length(aklt_chain(60), (SPIN_Z, SPIN_Z), range(1, 7), anchor=20)
    assert fit.xi == pytest.approx(1 / math.log(3), rel=1e-4)
    assert fit.fit_quality == pytest.approx(1.0, abs=1e-6)
    signs = np.sign(fit.correlations)
    assert np.all(signs[1:] == -signs[:-1])


def test_connected_correlations_match_ed():
    state, psi = _cluster_state(0.6)
    values = connected_correlations(state, (PAULI_X, PAULI_X), [1, 2, 3], anchor=3)
    mean = [ed_expectation(psi, [(j, PAULI_X)], 2).real for j in range(10)]
    for value, n in zip(values, (1, 2, 3)):
        joint = ed_expectation(psi, [(3, PAULI_X), (3 + n, PAULI_X)], 2).real
        assert value == pytest.approx(joint - mean[3] * mean[3 + n], abs=1e-10)


def test_correlation_length_needs_decay():
    product = MatrixProductState.product([0] * 12, 3)
    with pytest.raises(AnalysisError):
        correlation_length(product, (SPIN_Z, SPIN_Z), range(1, 6))
    with pytest.raises(AnalysisError):
        connected_correlations(product, (SPIN_Z, SPIN_Z), [10], anchor=3)


def test_symmetric_cut_pairs_in_topological_phases():
    cluster, _ = _cluster_state(0.0)
    report = degeneracy_report(entanglement_spectrum(boundary_cut_spectrum(cluster, 5)))
    assert report.paired and report.levels == 2
    haldane = degeneracy_report(entanglement_spectrum(boundary_cut_spectrum(aklt_chain(60), 30)))
    assert haldane.paired and haldane.levels == 2


def test_symmetric_cut_unpaired_in_large_d_phase():
    spec = ModelSpec(
        ModelFamily.LAMBDA_D,
        8,
        lam=1.0,
        anisotropy=2.0,
        perturbation=PerturbationSpec(PerturbationKind.SPIN_ONE_EDGE),
    )
    _, psi = ed_ground(spec)
    report = degeneracy_report(entanglement_spectrum(ed_block_spectrum(psi, range(4), 3)))
    assert not report.paired
    assert report.max_gap_within_pairs > 1.0


def test_edge_perturbed_cluster_small_block_not_convertible():
    # 3|9 cut of a 12-site chain; the last grid point only supplies a neighbour
    perturbation = PerturbationSpec(PerturbationKind.CLUSTER_EDGE)
    points = []
    for g in np.round(np.arange(0.2, 0.551, 0.05), 12):
        spec = ModelSpec(ModelFamily.CLUSTER_ISING, 12, g=float(g), perturbation=perturbation)
        energy, psi = ed_ground(spec)
        points.append(SweepPoint(float(g), energy, {"3|9": ed_block_spectrum(psi, range(3), 2)}))
    diagram = derivative_sign_diagram(SweepResult("g", tuple(points)), "3|9", AlphaGrid.logspaced())
    assert all(v is Verdict.NON_CONVERTIBLE for v in diagram.verdicts[:-1])


def test_edge_profile_scores_edge_magnetization():
    state = MatrixProductState.product([0] + [1] * 18 + [0], 3)
    profile = edge_profile(state, SPIN_Z)
    assert profile.values[0] == pytest.approx(1.0) and profile.values[10] == pytest.approx(0.0)
    assert profile.localization == pytest.approx(0.2)
    with pytest.raises(AnalysisError):
        edge_profile(MatrixProductState.product([0] * 8, 3), SPIN_Z)


def test_central_charge_from_exact_scaling():
    sites = 100
    cuts = default_cuts(sites)
    entropies = [1.5 / 6 * math.log(2 * sites / math.pi * math.sin(math.pi * l / sites)) + 0.3 for l in cuts]
    fit = central_charge_from_entropies(sites, cuts, entropies)
    assert fit.c == pytest.approx(1.5)
    assert not fit.poor_fit
    assert cuts[0] == 12 and cuts[-1] == 87
    with pytest.raises(AnalysisError):
        central_charge_from_entropies(sites, [10, 20], [0.1, 0.2])


def test_central_charge_flags_poor_fit():
    rng = np.random.default_rng(0)
    fit = central_charge_from_entropies(40, range(5, 35), rng.random(30))
    assert fit.poor_fit


@pytest.mark.slow
def test_critical_cluster_central_charge():
    spec = ModelSpec(
        ModelFamily.CLUSTER_ISING,
        100,
        g=1.0,
        perturbation=PerturbationSpec(PerturbationKind.CLUSTER_LOGICAL),
    )
    result = ground_state(build_mpo(spec), DmrgConfig(chi_max=128))
    fit = central_charge_fit(result.state)
    assert 1.4 <= fit.c <= 1.6
