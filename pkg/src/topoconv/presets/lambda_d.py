"""Spin-1 lambda-D sweeps: D at lambda = 1, and lambda at D = 0."""

from __future__ import annotations

from ..config import ObservableFlags
from ..models import ModelFamily, ModelSpec, PerturbationKind, PerturbationSpec, SectorPenalty
from .base import SITES, FigurePreset


class LambdaDPreset(FigurePreset):
    # D in [-1, 1] at lambda = 1
    parameter = "D"
    start = -1.0
    stop = 1.0
    step = 0.05
    sector_target: int | None = None
    observables = ObservableFlags(correlation_length=True)

    def model(self) -> ModelSpec:
        penalty = SectorPenalty(self.sector_target) if self.sector_target is not None else None
        fixed = {"anisotropy": 0.0, "lam": 1.0}
        fixed["anisotropy" if self.parameter == "D" else "lam"] = self.start
        return ModelSpec(
            family=ModelFamily.LAMBDA_D,
            sites=SITES,
            perturbation=PerturbationSpec(PerturbationKind.SPIN_ONE_EDGE),
            sector_penalty=penalty,
            **fixed,
        )


class LambdaSweepPreset(LambdaDPreset):
    # lambda in [0, 1.5] at D = 0
    parameter = "lambda"
    start = 0.0
    stop = 1.5


class AnisotropySymmetricPreset(LambdaDPreset):
    name = "fig3_a"
    description = "lambda-D, D sweep at lambda=1, symmetric bipartition 50|50"
    partitions = ("50|50",)


class AnisotropyEdgePreset(LambdaDPreset):
    name = "fig3_b"
    description = "lambda-D, D sweep at lambda=1, asymmetric bipartition 96|4"
    partitions = ("96|4",)


class AnisotropyBlockPreset(LambdaDPreset):
    name = "fig4"
    description = "lambda-D, D sweep at lambda=1, middle block 48|4|48 in the Sz=1 sector"
    partitions = ("48|4|48",)
    sector_target = 1


class ExchangeBlockPreset(LambdaSweepPreset):
    name = "fig5"
    description = "lambda-D, lambda sweep at D=0, middle block 48|4|48 in the Sz=1 sector"
    partitions = ("48|4|48",)
    sector_target = 1


class SpinOneObservablesPreset(LambdaDPreset):
    name = "figA2"
    description = "lambda-D string orders, correlation length and edge profile (Sz=1 sector)"
    partitions = ("50|50",)
    sector_target = 1
    observables = ObservableFlags(
        string_order=True, correlation_length=True, edge_profile=True, degeneracy=True
    )
