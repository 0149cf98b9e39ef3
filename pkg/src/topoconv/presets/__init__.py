from .appendix import (
    AnisotropyWideBlockPreset,
    ClusterWideBlockPreset,
    ExchangeWideBlockPreset,
    LargeAlphaPreset,
)
from .base import FigurePreset
from .cluster_ising import (
    AsymmetricCutPreset,
    ClusterObservablesPreset,
    MiddleBlockPreset,
    SymmetricCutPreset,
)
from .lambda_d import (
    AnisotropyBlockPreset,
    AnisotropyEdgePreset,
    AnisotropySymmetricPreset,
    ExchangeBlockPreset,
    SpinOneObservablesPreset,
)

ALL_PRESETS: dict[str, FigurePreset] = {
    p.name: p
    for p in (
        SymmetricCutPreset(),
        AsymmetricCutPreset(),
        MiddleBlockPreset(),
        AnisotropySymmetricPreset(),
        AnisotropyEdgePreset(),
        AnisotropyBlockPreset(),
        ExchangeBlockPreset(),
        ClusterObservablesPreset(),
        SpinOneObservablesPreset(),
        ClusterWideBlockPreset(),
        AnisotropyWideBlockPreset(),
        ExchangeWideBlockPreset(),
        LargeAlphaPreset(),
    )
}


def get_preset(name: str) -> FigurePreset:
    try:
        return ALL_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(ALL_PRESETS)}") from None
