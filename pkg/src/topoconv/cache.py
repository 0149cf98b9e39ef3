"""Ground-state cache: DMRG results keyed by a hash of model point and solver settings."""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import zipfile
from pathlib import Path

from .dmrg import DmrgConfig, GroundStateResult
from .models import ModelSpec
from .mps import MpsError, load_mps, save_mps

log = logging.getLogger("topoconv")


def point_key(spec: ModelSpec, cfg: DmrgConfig, seed: int) -> str:
    blob = json.dumps(
        {"model": spec.to_dict(), "dmrg": cfg.to_dict(), "seed": seed}, sort_keys=True
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class GroundStateCache:
    """Store converged (or flagged) ground states as .npz files plus a meta.json index."""

    def __init__(self, directory: Path | str) -> None:
        self._dir = Path(directory)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._meta_path = self._dir / "meta.json"
        self._lock = threading.Lock()
        self._meta: dict = self._load_meta()

    @property
    def directory(self) -> Path:
        return self._dir

    def _load_meta(self) -> dict:
        if self._meta_path.exists():
            try:
                return json.loads(self._meta_path.read_text())
            except (json.JSONDecodeError, OSError):
                log.warning("Cache index %s unreadable; starting empty", self._meta_path)
        return {"points": {}}

    def _save_meta(self) -> None:
        tmp = self._meta_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self._meta, indent=2, sort_keys=True))
        tmp.replace(self._meta_path)

    @property
    def count(self) -> int:
        with self._lock:
            return len(self._meta["points"])

    def _drop(self, key: str) -> None:
        """Remove an entry and its file. Caller must hold _lock."""
        self._meta["points"].pop(key, None)
        (self._dir / f"{key}.npz").unlink(missing_ok=True)
        self._save_meta()

    def get(self, spec: ModelSpec, cfg: DmrgConfig, seed: int) -> GroundStateResult | None:
        key = point_key(spec, cfg, seed)
        with self._lock:
            entry = self._meta["points"].get(key)
        if entry is None:
            log.debug("Cache miss %s", key)
            return None
        path = self._dir / f"{key}.npz"
        try:
            state = load_mps(path)
        except (OSError, ValueError, KeyError, zipfile.BadZipFile, MpsError):
            log.warning("Cached state %s missing or corrupt; removing entry", key)
            with self._lock:
                self._drop(key)
            return None
        log.debug("Cache hit %s", key)
        return GroundStateResult(
            state=state,
            energy=entry["energy"],
            energy_history=tuple(entry["energy_history"]),
            converged=entry["converged"],
            max_discarded_weight=entry["max_discarded_weight"],
            entropy_history=tuple(entry["entropy_history"]),
        )

    def put(self, spec: ModelSpec, cfg: DmrgConfig, seed: int, result: GroundStateResult) -> str:
        key = point_key(spec, cfg, seed)
        save_mps(result.state, self._dir / f"{key}.npz")
        with self._lock:
            self._meta["points"][key] = {
                "model": spec.to_dict(),
                "seed": seed,
                "energy": result.energy,
                "energy_history": list(result.energy_history),
                "converged": result.converged,
                "max_discarded_weight": result.max_discarded_weight,
                "entropy_history": list(result.entropy_history),
            }
            self._save_meta()
        log.debug("Cached ground state %s (E=%.12f)", key, result.energy)
        return key
