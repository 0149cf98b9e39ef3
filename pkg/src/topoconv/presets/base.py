"""Base preset class: a named, fully populated run configuration."""

from __future__ import annotations

from pathlib import Path

from ..analysis import AlphaGrid
from ..config import CACHE_DIR, ObservableFlags, RunConfig, SweepSpec, default_workers
from ..dmrg import DmrgConfig
from ..models import ModelSpec
from ..mps import PartitionSpec

SITES = 100
RESULTS_DIR = Path("results")


class FigurePreset:
    """Base class for built-in sweeps; subclasses fill in the model and the partitions."""

    name: str = ""
    description: str = ""
    parameter: str = ""
    start: float = 0.0
    stop: float = 0.0
    step: float = 0.05
    partitions: tuple[str, ...] = ()
    observables: ObservableFlags = ObservableFlags()

    def model(self) -> ModelSpec:
        """Override to return the model template at the start of the sweep."""
        raise NotImplementedError

    def config(self) -> RunConfig:
        model = self.model()
        return RunConfig(
            name=self.name,
            model=model,
            sweep=SweepSpec(self.parameter, self.start, self.stop, self.step),
            partitions=tuple(PartitionSpec.parse(p, model.sites) for p in self.partitions),
            alphas=AlphaGrid.logspaced(),
            dmrg=DmrgConfig(),
            observables=self.observables,
            output_dir=RESULTS_DIR / self.name,
            workers=default_workers(),
            cache_dir=CACHE_DIR,
        )

    def to_ini(self) -> str:
        return self.config().to_ini()
