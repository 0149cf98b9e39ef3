import math

import numpy as np
import pytest

from topoconv.analysis import renyi_entropy
from topoconv.exact import (
    OracleError,
    block_occupations,
    block_renyi_free_fermion,
    build_majorana,
    ed_block_spectrum,
    ed_expectation,
    ed_ground,
    ed_sector_ground,
    ed_spectrum,
    ground_covariance,
    majorana_model,
    renyi_from_occupations,
)
from topoconv.models import (
    PAULI_X,
    PAULI_Z,
    SPIN_Z,
    ModelFamily,
    ModelSpec,
    PerturbationKind,
    PerturbationSpec,
    SectorPenalty,
    build_dense,
)

MAJORANA_EDGE = PerturbationSpec(PerturbationKind.CLUSTER_MAJORANA, 1e-3)


def cluster(sites=8, g=0.5, perturbation=MAJORANA_EDGE):
    return ModelSpec(ModelFamily.CLUSTER_ISING, sites, g=g, perturbation=perturbation)


@pytest.mark.parametrize(
    "spec",
    [cluster(g=0.5), cluster(g=1.5, perturbation=PerturbationSpec()), cluster(sites=7, g=1.0)],
    ids=["cluster_phase", "antiferromagnet", "critical"],
)
def test_free_fermion_spectrum_matches_ed(spec):
    model = majorana_model(spec)
    dense = np.linalg.eigvalsh(build_dense(spec))
    np.testing.assert_allclose(model.many_body_energies(), dense, atol=1e-10)
    assert model.ground_energy() == pytest.approx(dense[0], abs=1e-10)


def test_free_fermion_pure_ground_covariance():
    gamma, energy = ground_covariance(majorana_model(cluster(sites=10, g=0.3)))
    assert not gamma.degenerate
    assert gamma.sites == 10
    np.testing.assert_allclose(gamma.gamma, -gamma.gamma.T, atol=1e-12)
    np.testing.assert_allclose(gamma.gamma @ gamma.gamma, -np.eye(20), atol=1e-10)
    assert energy == pytest.approx(-0.5 * majorana_model(cluster(sites=10, g=0.3)).single_particle_energies().sum())


def test_fixed_point_has_edge_zero_modes():
    gamma, energy = ground_covariance(build_majorana(6, 0.0))
    assert gamma.degenerate
    assert len(gamma.alternatives) == 3
    assert energy == pytest.approx(-4.0)


@pytest.mark.parametrize("g", [0.5, 1.2, 1.6])
@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, math.inf])
def test_block_entropies_match_ed(g, alpha):
    spec = cluster(sites=10, g=g)
    gamma, _ = ground_covariance(majorana_model(spec))
    assert not gamma.degenerate
    _, psi = ed_ground(spec)
    for ell in range(1, 6):
        exact = renyi_entropy(ed_block_spectrum(psi, range(ell), 2), alpha)
        assert block_renyi_free_fermion(gamma, range(ell), alpha) == pytest.approx(exact, abs=1e-9)


def test_free_fermion_entropy_decreases_with_alpha():
    gamma, _ = ground_covariance(majorana_model(cluster(sites=40, g=0.8)))
    alphas = np.concatenate([np.logspace(-1, 2, 25), [math.inf]])
    values = [block_renyi_free_fermion(gamma, range(20), a) for a in alphas]
    assert np.all(np.diff(values) <= 1e-12)


def test_renyi_from_occupations_limits():
    assert renyi_from_occupations(np.array([0.0]), 2.0) == pytest.approx(math.log(2))
    assert renyi_from_occupations(np.array([0.0, 0.0]), math.inf) == pytest.approx(2 * math.log(2))
    assert renyi_from_occupations(np.array([1.0]), 1.0) == pytest.approx(0.0)
    assert renyi_from_occupations(np.array([1.0]), 0.5) == pytest.approx(0.0)
    with pytest.raises(OracleError):
        renyi_from_occupations(np.array([0.5]), 0.0)


def test_block_occupations_rejects_bad_blocks():
    gamma, _ = ground_covariance(build_majorana(6, 0.4, MAJORANA_EDGE))
    assert block_occupations(gamma, range(2, 4)).shape == (2,)
    with pytest.raises(OracleError):
        block_occupations(gamma, range(0, 6, 2))
    with pytest.raises(OracleError):
        block_occupations(gamma, range(4, 7))


def test_majorana_oracle_domain():
    with pytest.raises(OracleError):
        build_majorana(2, 0.5)
    with pytest.raises(OracleError):
        build_majorana(6, 0.5, PerturbationSpec(PerturbationKind.CLUSTER_LOGICAL))
    with pytest.raises(OracleError):
        majorana_model(ModelSpec(ModelFamily.LAMBDA_D, 4))


def test_ed_ground_and_spectrum():
    spec = cluster(sites=6, g=0.7)
    energy, psi = ed_ground(spec)
    h = build_dense(spec)
    assert energy == pytest.approx(np.linalg.eigvalsh(h)[0])
    assert np.linalg.norm(h @ psi - energy * psi) < 1e-10
    np.testing.assert_allclose(ed_spectrum(spec, 5), np.linalg.eigvalsh(h)[:5], atol=1e-12)


def test_ed_ground_is_deterministic_when_degenerate():
    spec = cluster(sites=6, g=0.0, perturbation=PerturbationSpec())
    _, first = ed_ground(spec)
    _, second = ed_ground(spec)
    np.testing.assert_allclose(first, second)


def test_sector_ground():
    spec = ModelSpec(ModelFamily.LAMBDA_D, 4, lam=1.0, anisotropy=0.2)
    energy, psi = ed_sector_ground(spec, 1)
    sz_tot = sum(ed_expectation(psi, [(j, SPIN_Z)], 3).real for j in range(4))
    assert sz_tot == pytest.approx(1.0)
    penalised = ModelSpec(
        ModelFamily.LAMBDA_D, 4, lam=1.0, anisotropy=0.2, sector_penalty=SectorPenalty(1)
    )
    assert ed_ground(penalised)[0] == pytest.approx(energy, abs=1e-10)
    with pytest.raises(OracleError):
        ed_sector_ground(cluster(), 1)


def test_ed_block_spectrum():
    bell = np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2)
    np.testing.assert_allclose(ed_block_spectrum(bell, [0], 2).eigenvalues, [0.5, 0.5])
    product = np.kron([1.0, 0.0], [0.0, 1.0])
    np.testing.assert_allclose(ed_block_spectrum(product, [1], 2).eigenvalues[0], 1.0)
    with pytest.raises(OracleError):
        ed_block_spectrum(bell, [2], 2)


def test_ed_expectation():
    up_down = np.kron([1.0, 0.0], [0.0, 1.0])
    assert ed_expectation(up_down, [(0, PAULI_Z), (1, PAULI_Z)], 2) == pytest.approx(-1.0)
    assert ed_expectation(up_down, [(0, PAULI_X)], 2) == pytest.approx(0.0)
    assert ed_expectation(up_down, [], 2) == pytest.approx(1.0)
    with pytest.raises(OracleError):
        ed_expectation(up_down, [(0, PAULI_Z), (0, PAULI_X)], 2)
    with pytest.raises(OracleError):
        ed_expectation(np.ones(6), [(0, PAULI_Z)], 2)


def test_sparse_ed_matches_free_fermions():
    # 2^12 states goes through the ARPACK path
    spec = cluster(sites=12, g=0.5)
    energy, psi = ed_ground(spec)
    assert energy == pytest.approx(majorana_model(spec).ground_energy(), abs=1e-9)
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    np.testing.assert_allclose(ed_spectrum(spec, 3), majorana_model(spec).many_body_energies()[:3], atol=1e-9)
