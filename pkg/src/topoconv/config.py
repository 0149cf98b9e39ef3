"""Run configuration: INI files with line-numbered validation errors."""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import psutil

from .analysis import ZERO_TOL, AlphaGrid
from .dmrg import DmrgConfig
from .models import (
    ModelError,
    ModelFamily,
    ModelSpec,
    PerturbationKind,
    PerturbationSpec,
    SectorPenalty,
)
from .mps import BLOCK_CAP, MpsError, PartitionSpec

log = logging.getLogger("topoconv")

CACHE_DIR = Path.home() / ".cache" / "topoconv" / "ground_states"
MIN_GRID_POINTS = 3

_KEYS = {
    "model": {
        "family",
        "sites",
        "g",
        "lambda",
        "D",
        "perturbation",
        "perturbation_strength",
        "perturbation_sign",
        "sector_target",
        "sector_strength",
    },
    "sweep": {"parameter", "start", "stop", "step"},
    "partitions": {"list"},
    "alpha": {"count", "min", "max", "include_infinity"},
    "dmrg": {"chi_max", "sweeps_max", "energy_tol", "truncation_tol", "noise", "seed"},
    "observables": {
        "string_order",
        "correlation_length",
        "edge_profile",
        "degeneracy",
        "central_charge",
        "correlation_component",
        "zero_tol",
    },
    "output": {"dir", "workers", "cache_dir", "block_cap"},
}
_REQUIRED = {"model": {"family", "sites"}, "sweep": {"parameter", "start", "stop", "step"}}
_DEFAULT_PERTURBATION = {
    ModelFamily.CLUSTER_ISING: PerturbationKind.CLUSTER_LOGICAL,
    ModelFamily.LAMBDA_D: PerturbationKind.SPIN_ONE_EDGE,
}


class ConfigError(ValueError):
    """Raised when a run configuration is invalid; names section, field and line."""

    def __init__(
        self, message: str, section: str | None = None, field: str | None = None, line: int | None = None
    ) -> None:
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]" + (f" {field}" if field else ""))
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.section = section
        self.field = field
        self.line = line


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    step: float

    def grid(self) -> np.ndarray:
        """Points start, start + step, ... up to and including stop."""
        count = math.floor((self.stop - self.start) / self.step + 1e-9) + 1
        return np.round(self.start + self.step * np.arange(count), 12)


@dataclass(frozen=True)
class ObservableFlags:
    string_order: bool = False
    correlation_length: bool = False
    edge_profile: bool = False
    degeneracy: bool = True
    central_charge: bool = False
    correlation_component: str = "x"


@dataclass(frozen=True, eq=False)
class RunConfig:
    name: str
    model: ModelSpec
    sweep: SweepSpec
    partitions: tuple[PartitionSpec, ...]
    alphas: AlphaGrid = field(default_factory=AlphaGrid.logspaced)
    dmrg: DmrgConfig = field(default_factory=DmrgConfig)
    observables: ObservableFlags = field(default_factory=ObservableFlags)
    zero_tol: float = ZERO_TOL
    output_dir: Path = Path("results")
    workers: int = 1
    cache_dir: Path = CACHE_DIR
    block_cap: int = BLOCK_CAP

    def to_dict(self) -> dict:
        """Physics content of the run (no paths or worker counts)."""
        return {
            "name": self.name,
            "model": self.model.to_dict(),
            "sweep": {
                "parameter": self.sweep.parameter,
                "start": self.sweep.start,
                "stop": self.sweep.stop,
                "step": self.sweep.step,
            },
            "partitions": [p.label for p in self.partitions],
            "alpha": {
                "values": [float(a) for a in self.alphas.values],
                "include_infinity": self.alphas.include_infinity,
            },
            "dmrg": self.dmrg.to_dict(),
            "observables": {
                "string_order": self.observables.string_order,
                "correlation_length": self.observables.correlation_length,
                "edge_profile": self.observables.edge_profile,
                "degeneracy": self.observables.degeneracy,
                "central_charge": self.observables.central_charge,
                "correlation_component": self.observables.correlation_component,
                "zero_tol": self.zero_tol,
            },
            "block_cap": self.block_cap,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_ini(self) -> str:
        """Render as an INI file that load_config reads back to the same run."""
        m = self.model
        model = {"family": m.family.value, "sites": str(m.sites)}
        if m.family is ModelFamily.CLUSTER_ISING:
            model["g"] = repr(m.g)
        else:
            model["lambda"] = repr(m.lam)
            model["D"] = repr(m.anisotropy)
        model["perturbation"] = m.perturbation.kind.value
        model["perturbation_strength"] = repr(m.perturbation.strength)
        model["perturbation_sign"] = str(m.perturbation.sign)
        if m.sector_penalty is not None:
            model["sector_target"] = str(m.sector_penalty.target)
            model["sector_strength"] = repr(m.sector_penalty.strength)
        values = self.alphas.values
        dmrg = {
            k: repr(v)
            for k, v in self.dmrg.to_dict().items()
            if k in _KEYS["dmrg"] and v is not None
        }
        obs = self.observables
        sections = {
            "model": model,
            "sweep": {
                "parameter": self.sweep.parameter,
                "start": repr(self.sweep.start),
                "stop": repr(self.sweep.stop),
                "step": repr(self.sweep.step),
            },
            "partitions": {"list": ", ".join(p.label for p in self.partitions)},
            "alpha": {
                "count": str(values.size),
                "min": f"{values[0]:.12g}",
                "max": f"{values[-1]:.12g}",
                "include_infinity": "yes" if self.alphas.include_infinity else "no",
            },
            "dmrg": dmrg,
            "observables": {
                "string_order": _yes(obs.string_order),
                "correlation_length": _yes(obs.correlation_length),
                "edge_profile": _yes(obs.edge_profile),
                "degeneracy": _yes(obs.degeneracy),
                "central_charge": _yes(obs.central_charge),
                "correlation_component": obs.correlation_component,
                "zero_tol": repr(self.zero_tol),
            },
            "output": {"dir": str(self.output_dir), "block_cap": str(self.block_cap)},
        }
        lines = [f"# topoconv run configuration: {self.name}"]
        for section, entries in sections.items():
            lines.append(f"\n[{section}]")
            lines.extend(f"{k} = {v}" for k, v in entries.items())
        return "\n".join(lines) + "\n"


def _yes(flag: bool) -> str:
    return "yes" if flag else "no"


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to the 1-based line where the key is set."""
    lines: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if m:
            section = m[1].strip()
            lines[(section, "")] = lineno
            continue
        if section is not None:
            key = re.split(r"[=:]", stripped, maxsplit=1)[0].strip()
            lines[(section, key)] = lineno
    return lines


class _Reader:
    """Typed access to a parsed INI file, raising ConfigError with positions."""

    def __init__(self, parser: configparser.ConfigParser, lines: dict[tuple[str, str], int]) -> None:
        self._p = parser
        self._lines = lines

    def error(self, message: str, section: str, key: str | None = None) -> ConfigError:
        line = self._lines.get((section, key or ""))
        return ConfigError(message, section=section, field=key, line=line)

    def has(self, section: str, key: str) -> bool:
        return self._p.has_option(section, key)

    def raw(self, section: str, key: str, default: str | None = None) -> str:
        if self.has(section, key):
            return self._p.get(section, key).strip()
        if default is None:
            raise self.error(f"missing required key {key!r}", section)
        return default

    def _convert(self, section: str, key: str, default: object, kind: type, label: str):
        if not self.has(section, key):
            return default
        text = self.raw(section, key)
        try:
            return kind(text)
        except ValueError:
            raise self.error(f"expected {label}, got {text!r}", section, key) from None

    def integer(self, section: str, key: str, default: int | None = None) -> int | None:
        return self._convert(section, key, default, int, "an integer")

    def real(self, section: str, key: str, default: float | None = None) -> float | None:
        value = self._convert(section, key, default, float, "a number")
        if value is not None and not math.isfinite(value):
            raise self.error(f"expected a finite number, got {value}", section, key)
        return value

    def boolean(self, section: str, key: str, default: bool) -> bool:
        if not self.has(section, key):
            return default
        try:
            return self._p.getboolean(section, key)
        except ValueError:
            raise self.error(
                f"expected yes/no, got {self.raw(section, key)!r}", section, key
            ) from None


def _read_model(r: _Reader) -> ModelSpec:
    try:
        family = ModelFamily(r.raw("model", "family"))
    except ValueError:
        raise r.error("family must be cluster_ising or lambda_d", "model", "family") from None
    sites = r.integer("model", "sites")
    kind_text = r.raw("model", "perturbation", _DEFAULT_PERTURBATION[family].value)
    try:
        kind = PerturbationKind(kind_text)
    except ValueError:
        raise r.error(f"unknown perturbation {kind_text!r}", "model", "perturbation") from None
    sign = r.integer("model", "perturbation_sign", 1)
    try:
        perturbation = PerturbationSpec(
            kind=kind, strength=r.real("model", "perturbation_strength", 1e-3), sign=sign
        )
    except ModelError as e:
        raise r.error(str(e), "model", "perturbation") from None
    penalty = None
    if r.has("model", "sector_target"):
        try:
            penalty = SectorPenalty(
                target=r.integer("model", "sector_target"),
                strength=r.real("model", "sector_strength", 10.0),
            )
        except ModelError as e:
            raise r.error(str(e), "model", "sector_strength") from None
    for key, wrong in (("g", ModelFamily.LAMBDA_D), ("lambda", ModelFamily.CLUSTER_ISING), ("D", ModelFamily.CLUSTER_ISING)):
        if family is wrong and r.has("model", key):
            raise r.error(f"{key} does not apply to {family.value}", "model", key)
    try:
        return ModelSpec(
            family=family,
            sites=sites,
            g=r.real("model", "g", 0.0),
            lam=r.real("model", "lambda", 1.0),
            anisotropy=r.real("model", "D", 0.0),
            perturbation=perturbation,
            sector_penalty=penalty,
        )
    except ModelError as e:
        raise r.error(str(e), "model") from None


def _read_sweep(r: _Reader, model: ModelSpec) -> SweepSpec:
    parameter = r.raw("sweep", "parameter")
    try:
        model.with_parameter(parameter, 0.0)
    except ModelError as e:
        raise r.error(str(e), "sweep", "parameter") from None
    sweep = SweepSpec(
        parameter=parameter,
        start=r.real("sweep", "start"),
        stop=r.real("sweep", "stop"),
        step=r.real("sweep", "step"),
    )
    if sweep.step <= 0:
        raise r.error("step must be > 0", "sweep", "step")
    if sweep.start >= sweep.stop:
        raise r.error("start must be below stop", "sweep", "start")
    if sweep.grid().size < MIN_GRID_POINTS:
        raise r.error(
            f"fewer than {MIN_GRID_POINTS} grid points ({sweep.grid().size})", "sweep", "step"
        )
    return sweep


def _read_partitions(r: _Reader, sites: int) -> tuple[PartitionSpec, ...]:
    labels = [t.strip() for t in r.raw("partitions", "list").split(",") if t.strip()]
    if not labels:
        raise r.error("at least one partition is required", "partitions", "list")
    out = []
    for label in labels:
        try:
            out.append(PartitionSpec.parse(label, sites))
        except MpsError as e:
            raise r.error(str(e), "partitions", "list") from None
    if len({p.label for p in out}) != len(out):
        raise r.error("duplicate partitions", "partitions", "list")
    return tuple(out)


def _read_dmrg(r: _Reader) -> DmrgConfig:
    defaults = DmrgConfig()
    try:
        return DmrgConfig(
            chi_max=r.integer("dmrg", "chi_max", defaults.chi_max),
            sweeps_max=r.integer("dmrg", "sweeps_max", defaults.sweeps_max),
            energy_tol=r.real("dmrg", "energy_tol", defaults.energy_tol),
            truncation_tol=r.real("dmrg", "truncation_tol", defaults.truncation_tol),
            noise=r.real("dmrg", "noise", defaults.noise),
            seed=r.integer("dmrg", "seed", defaults.seed),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise r.error(str(e), "dmrg") from None


def default_workers() -> int:
    return max(1, psutil.cpu_count(logical=False) or 1)


def parse_config(
    text: str, name: str = "run", env: dict[str, str] | None = None
) -> RunConfig:
    env = dict(os.environ) if env is None else env
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#", ";"), interpolation=None, strict=True
    )
    parser.optionxform = str  # keys are case sensitive ("D")
    try:
        parser.read_string(text)
    except configparser.Error as e:
        line = getattr(e, "lineno", None)
        raise ConfigError(f"malformed config: {e.message}", line=line) from None
    lines = _key_lines(text)
    r = _Reader(parser, lines)

    for section in parser.sections():
        if section not in _KEYS:
            raise r.error("unknown section", section)
        for key in parser.options(section):
            if key not in _KEYS[section]:
                raise r.error("unknown key", section, key)
    for section, keys in _REQUIRED.items():
        if not parser.has_section(section):
            raise ConfigError("missing required section", section=section)
        for key in sorted(keys):
            if not parser.has_option(section, key):
                raise r.error(f"missing required key {key!r}", section)
    if not parser.has_section("partitions"):
        raise ConfigError("missing required section", section="partitions")

    model = _read_model(r)
    sweep = _read_sweep(r, model)
    partitions = _read_partitions(r, model.sites)
    alpha_args = (
        r.integer("alpha", "count", 40),
        r.real("alpha", "min", 0.1),
        r.real("alpha", "max", 100.0),
        r.boolean("alpha", "include_infinity", True),
    )
    try:
        alphas = AlphaGrid.logspaced(*alpha_args)
    except ValueError as e:
        raise r.error(str(e), "alpha") from None
    dmrg = _read_dmrg(r)

    component = r.raw("observables", "correlation_component", "x")
    if component not in ("x", "y", "z"):
        raise r.error("must be x, y or z", "observables", "correlation_component")
    observables = ObservableFlags(
        string_order=r.boolean("observables", "string_order", False),
        correlation_length=r.boolean("observables", "correlation_length", False),
        edge_profile=r.boolean("observables", "edge_profile", False),
        degeneracy=r.boolean("observables", "degeneracy", True),
        central_charge=r.boolean("observables", "central_charge", False),
        correlation_component=component,
    )
    zero_tol = r.real("observables", "zero_tol", ZERO_TOL)
    if zero_tol <= 0:
        raise r.error("must be > 0", "observables", "zero_tol")

    workers = r.integer("output", "workers", None)
    if "TOPOCONV_WORKERS" in env:
        try:
            workers = int(env["TOPOCONV_WORKERS"])
        except ValueError:
            raise ConfigError(
                f"TOPOCONV_WORKERS must be an integer, got {env['TOPOCONV_WORKERS']!r}"
            ) from None
    if workers is None:
        workers = default_workers()
    if workers < 1:
        raise r.error("workers must be >= 1", "output", "workers")
    cache_dir = Path(
        env.get("TOPOCONV_CACHE_DIR") or r.raw("output", "cache_dir", str(CACHE_DIR))
    ).expanduser()
    block_cap = r.integer("output", "block_cap", BLOCK_CAP)
    if block_cap < 1:
        raise r.error("must be >= 1", "output", "block_cap")

    return RunConfig(
        name=name,
        model=model,
        sweep=sweep,
        partitions=partitions,
        alphas=alphas,
        dmrg=dmrg,
        observables=observables,
        zero_tol=zero_tol,
        output_dir=Path(r.raw("output", "dir", f"results/{name}")).expanduser(),
        workers=workers,
        cache_dir=cache_dir,
        block_cap=block_cap,
    )


def load_config(path: Path | str, env: dict[str, str] | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    return parse_config(text, name=path.stem, env=env)


def with_environment(config: RunConfig, env: dict[str, str] | None = None) -> RunConfig:
    """Apply TOPOCONV_WORKERS / TOPOCONV_CACHE_DIR to a programmatic config."""
    env = dict(os.environ) if env is None else env
    changes: dict = {}
    if "TOPOCONV_WORKERS" in env:
        try:
            changes["workers"] = max(1, int(env["TOPOCONV_WORKERS"]))
        except ValueError:
            raise ConfigError(
                f"TOPOCONV_WORKERS must be an integer, got {env['TOPOCONV_WORKERS']!r}"
            ) from None
    if env.get("TOPOCONV_CACHE_DIR"):
        changes["cache_dir"] = Path(env["TOPOCONV_CACHE_DIR"]).expanduser()
    return replace(config, **changes) if changes else config
