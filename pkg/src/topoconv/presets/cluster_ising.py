"""Cluster-Ising sweeps in g across the transition at g = 1."""

from __future__ import annotations

from ..config import ObservableFlags
from ..models import ModelFamily, ModelSpec, PerturbationKind, PerturbationSpec
from .base import SITES, FigurePreset


class ClusterIsingPreset(FigurePreset):
    parameter = "g"
    start = 0.0
    stop = 2.0
    step = 0.05
    observables = ObservableFlags(correlation_length=True)

    def model(self) -> ModelSpec:
        # X_0 Z_1 +- Z_{N-2} X_{N-1}; splits the edge manifold once g > 0
        return ModelSpec(
            family=ModelFamily.CLUSTER_ISING,
            sites=SITES,
            g=self.start,
            perturbation=PerturbationSpec(PerturbationKind.CLUSTER_EDGE),
        )


class SymmetricCutPreset(ClusterIsingPreset):
    name = "fig1_a"
    description = "cluster-Ising, symmetric bipartition 50|50"
    partitions = ("50|50",)


class AsymmetricCutPreset(ClusterIsingPreset):
    name = "fig1_b"
    description = "cluster-Ising, asymmetric bipartition 3|97"
    partitions = ("3|97",)


class MiddleBlockPreset(ClusterIsingPreset):
    name = "fig1_c"
    description = "cluster-Ising, three-site middle block 48|3|49"
    partitions = ("48|3|49",)


class ClusterObservablesPreset(ClusterIsingPreset):
    name = "figA1"
    description = "cluster-Ising string order, correlation length and edge profile"
    partitions = ("50|50",)
    observables = ObservableFlags(
        string_order=True, correlation_length=True, edge_profile=True, degeneracy=True
    )
