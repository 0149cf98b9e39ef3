import math

import numpy as np
import pytest

from topoconv.analysis import renyi_entropy
from topoconv.dmrg import (
    DmrgConfig,
    DmrgError,
    GroundStateResult,
    ground_state,
    ground_state_for_spec,
    ground_state_in_sector,
    sector_product_state,
)
from topoconv.exact import (
    block_renyi_free_fermion,
    ed_block_spectrum,
    ed_ground,
    ed_sector_ground,
    ground_covariance,
    majorana_model,
)
from topoconv.models import (
    ModelFamily,
    ModelSpec,
    MpoBuilder,
    PerturbationKind,
    PerturbationSpec,
    SectorPenalty,
    build_mpo,
    total_sz_mpo,
)
from topoconv.mps import (
    MatrixProductState,
    PartitionSpec,
    boundary_cut_spectrum,
    compress,
    expectation_mpo,
    is_canonical,
    partition_spectrum,
)

LOGICAL = PerturbationSpec(PerturbationKind.CLUSTER_LOGICAL)
SPIN_EDGE = PerturbationSpec(PerturbationKind.SPIN_ONE_EDGE)


def cluster(sites=10, g=0.5, perturbation=LOGICAL):
    return ModelSpec(ModelFamily.CLUSTER_ISING, sites, g=g, perturbation=perturbation)


def spin_one(sites=6, lam=1.0, d=0.3, target=None):
    return ModelSpec(
        ModelFamily.LAMBDA_D,
        sites,
        lam=lam,
        anisotropy=d,
        perturbation=SPIN_EDGE,
        sector_penalty=None if target is None else SectorPenalty(target),
    )


@pytest.mark.parametrize("g", [0.3, 1.0, 1.2])
def test_cluster_energy_and_cut_spectrum_match_ed(g):
    spec = cluster(g=g)
    result = ground_state(build_mpo(spec))
    energy, psi = ed_ground(spec)
    assert result.converged
    assert result.energy == pytest.approx(energy, abs=1e-8)
    assert is_canonical(result.state)
    spectrum = boundary_cut_spectrum(result.state, 5).eigenvalues
    exact = ed_block_spectrum(psi, range(5), 2).eigenvalues
    n = min(spectrum.size, exact.size)
    np.testing.assert_allclose(spectrum[:n], exact[:n], atol=1e-6)


def test_spin_one_energy_matches_ed():
    spec = spin_one(d=0.3)
    result = ground_state_for_spec(spec)
    assert result.converged
    assert result.energy == pytest.approx(ed_ground(spec)[0], abs=1e-8)


def test_sector_search_reports_bare_energy():
    spec = spin_one(d=0.0, target=1)
    result = ground_state_in_sector(spec, seed=3)
    energy, _ = ed_sector_ground(spec, 1)
    assert result.energy == pytest.approx(energy, abs=1e-8)
    assert expectation_mpo(result.state, total_sz_mpo(6)) == pytest.approx(1.0, abs=1e-6)


def test_sector_search_needs_penalty():
    with pytest.raises(DmrgError):
        ground_state_in_sector(spin_one())
    with pytest.raises(DmrgError):
        ground_state_in_sector(cluster())


def test_same_seed_same_history():
    op = build_mpo(cluster(sites=8, g=0.8))
    first = ground_state(op, DmrgConfig(seed=4))
    second = ground_state(op, seed=4)
    assert first.sweeps == second.sweeps
    np.testing.assert_allclose(first.energy_history, second.energy_history, rtol=0, atol=1e-12)


def test_different_seeds_reach_the_same_state():
    op = build_mpo(cluster(g=0.5))
    first = ground_state(op, DmrgConfig(seed=1))
    second = ground_state(op, DmrgConfig(seed=7))
    assert first.converged and second.converged
    assert second.energy == pytest.approx(first.energy, abs=1e-8)
    a = boundary_cut_spectrum(first.state, 5).eigenvalues
    b = boundary_cut_spectrum(second.state, 5).eigenvalues
    n = min(a.size, b.size)
    np.testing.assert_allclose(a[:n], b[:n], atol=1e-6)


def test_energy_decreases_with_bond_dimension():
    op = build_mpo(cluster(sites=20, g=1.0))
    energies = [ground_state(op, DmrgConfig(chi_max=chi)).energy for chi in (16, 32, 64)]
    assert energies[1] <= energies[0] + 1e-9
    assert energies[2] <= energies[1] + 1e-9


def test_noise_free_energy_history_is_non_increasing():
    result = ground_state(build_mpo(cluster(sites=12, g=0.8)), DmrgConfig(noise=0.0))
    assert len(result.energy_history) >= 2
    assert np.all(np.diff(result.energy_history) <= 1e-9)


def test_bond_cap_truncates():
    result = ground_state(build_mpo(cluster(sites=12, g=1.0)), DmrgConfig(chi_max=2))
    assert max(result.state.bond_dims) <= 2
    assert result.max_discarded_weight > 0


def test_single_sweep_is_not_converged():
    result = ground_state(build_mpo(cluster(sites=6)), DmrgConfig(sweeps_max=1))
    assert not result.converged
    assert not result.publication_grade
    assert result.sweeps == 1


def test_initial_state_checks():
    op = build_mpo(cluster(sites=6))
    with pytest.raises(DmrgError):
        ground_state(op, initial=MatrixProductState.random(5, 2))
    with pytest.raises(DmrgError):
        ground_state(MpoBuilder(1, 2).build())


@pytest.mark.parametrize(
    "kwargs",
    [{"chi_max": 1}, {"sweeps_max": 0}, {"energy_tol": 0.0}, {"noise": -1e-6}],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        DmrgConfig(**kwargs)


def test_bond_limit_defaults():
    assert DmrgConfig().bond_limit(2) == 64
    assert DmrgConfig().bond_limit(3) == 100
    assert DmrgConfig(chi_max=16).bond_limit(3) == 16


def test_sector_product_state():
    state = sector_product_state(5, 2)
    assert expectation_mpo(state, total_sz_mpo(5)) == pytest.approx(2.0)
    state = sector_product_state(4, -1)
    assert expectation_mpo(state, total_sz_mpo(4)) == pytest.approx(-1.0)
    with pytest.raises(DmrgError):
        sector_product_state(2, 3)


def test_publication_grade():
    state = MatrixProductState.product([0, 0], 2)
    stable = GroundStateResult(state, -1.0, (-0.9, -1.0), True, 0.0, (0.3, 0.3 + 1e-9))
    drifting = GroundStateResult(state, -1.0, (-0.9, -1.0), True, 0.0, (0.3, 0.31))
    assert stable.publication_grade
    assert not drifting.publication_grade


@pytest.mark.slow
@pytest.mark.parametrize("g", [0.2, 0.5, 0.8, 1.2, 1.6])
def test_long_cluster_chain_matches_free_fermions(g):
    spec = cluster(
        sites=100, g=g, perturbation=PerturbationSpec(PerturbationKind.CLUSTER_MAJORANA)
    )
    result = ground_state(build_mpo(spec))
    gamma, exact = ground_covariance(majorana_model(spec))
    assert result.converged
    assert abs(result.energy - exact) / abs(exact) < 1e-8
    if g > 1:
        # near-degenerate ordered doublet; block entropies are pinned at small N
        return
    for ell in (10, 50):
        spectrum = boundary_cut_spectrum(result.state, ell)
        for alpha in (0.5, 1.0, 2.0, math.inf):
            expected = block_renyi_free_fermion(gamma, range(ell), alpha)
            assert renyi_entropy(spectrum, alpha) == pytest.approx(expected, abs=1e-6)


@pytest.mark.slow
def test_compressed_wide_block_matches_full_bond_dimension():
    # the runner compresses to chi = sqrt(block_cap) = 64 before a ten-site spin-1 block
    result = ground_state_for_spec(spin_one(sites=100, d=0.2, target=1))
    partition = PartitionSpec.parse("45|10|45", 100)
    full = partition_spectrum(result.state, partition, cap=100 * 100)
    small, _ = compress(result.state, 64)
    coarse = partition_spectrum(small, partition)
    np.testing.assert_allclose(coarse.eigenvalues[:16], full.eigenvalues[:16], atol=1e-6)
    for alpha in (1.0, 2.0, math.inf):
        assert renyi_entropy(coarse, alpha) == pytest.approx(renyi_entropy(full, alpha), abs=1e-5)
