"""Larger subsystems: ten-site middle blocks and the 90|10 large-alpha check."""

from __future__ import annotations

from .cluster_ising import ClusterIsingPreset
from .lambda_d import LambdaDPreset, LambdaSweepPreset


class ClusterWideBlockPreset(ClusterIsingPreset):
    name = "appc_cluster"
    description = "cluster-Ising, ten-site middle block 45|10|45"
    partitions = ("45|10|45",)


class AnisotropyWideBlockPreset(LambdaDPreset):
    name = "appc_sweep1"
    description = "lambda-D, D sweep at lambda=1, ten-site middle block 45|10|45 (Sz=1 sector)"
    partitions = ("45|10|45",)
    sector_target = 1


class ExchangeWideBlockPreset(LambdaSweepPreset):
    name = "appc_sweep2"
    description = "lambda-D, lambda sweep at D=0, ten-site middle block 45|10|45 (Sz=1 sector)"
    partitions = ("45|10|45",)
    sector_target = 1


class LargeAlphaPreset(ClusterIsingPreset):
    name = "appd_cluster"
    description = "cluster-Ising, bipartition 90|10; alpha=inf column against -d log x_1"
    partitions = ("90|10",)
