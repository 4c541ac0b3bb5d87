"""Scenario files: the single serializable description of an experiment.

A scenario plus its seed determines every number a runner produces.
Loading is strict: unknown keys anywhere are a hard error so config typos
cannot silently change an experiment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .errors import ConfigError
from .rise import BlockPartition, block_partition
from .symkernel import SymMatrix, symmetrize

SCHEMA_VERSION = 1

_SCENARIO_KEYS = {
    "schema_version",
    "dim",
    "seed",
    "spectrum",
    "rotation_seed",
    "gradient",
    "q",
    "mu",
    "eta",
    "partition",
    "trials",
    "checkpoints",
    "q_grid",
    "rho",
    "consolidation_epsilon",
    "stream",
}
_SPECTRUM_KEYS = {
    "explicit": {"kind", "values"},
    "linear_ramp": {"kind", "lo", "hi"},
    "two_cluster": {"kind", "lo", "hi", "hi_count"},
}
_GRADIENT_KEYS = {
    "eigen_aligned": {"kind", "index"},
    "random": {"kind"},
    "angle_sweep": {"kind", "count"},
}
_PARTITION_KEYS = {"sizes", "queries"}
_STREAM_KEYS = {
    "kind",
    "tasks",
    "steps_per_task",
    "seeds",
    "methods",
    "hot_count",
    "hot_curvature",
    "cold_curvature",
    "displacement_decay",
}
STREAM_KINDS = ("hot", "cold")
STREAM_METHODS = (
    "raw_fo",
    "scaled_fo",
    "iso_noise",
    "cov_matched_noise",
    "finite_diff_zo",
    "rise",
)


def _check_keys(d: dict, allowed: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


@dataclass(frozen=True)
class StreamSpec:
    kind: str
    tasks: int = 7
    steps_per_task: int = 10
    seeds: int = 64
    methods: tuple = STREAM_METHODS
    hot_count: int = 4
    hot_curvature: float = 6.0
    cold_curvature: float = 0.5
    displacement_decay: Optional[float] = None

    def decay(self) -> float:
        if self.displacement_decay is not None:
            return self.displacement_decay
        # Hot streams shrink task displacements so late tasks re-consolidate
        # the shared curved directions; cold streams keep them constant so
        # weakly-curved noise keeps accumulating.
        return 0.6 if self.kind == "hot" else 1.0


@dataclass(frozen=True)
class Scenario:
    dim: int
    seed: int
    spectrum: Optional[dict] = None
    rotation_seed: Optional[int] = None
    gradient: Optional[dict] = None
    q: int = 4
    mu: float = 0.0
    eta: float = 1.0
    partition: Optional[dict] = None
    trials: int = 20000
    checkpoints: Optional[tuple] = None
    q_grid: Optional[tuple] = None
    rho: Optional[float] = None
    consolidation_epsilon: Optional[float] = None
    stream: Optional[StreamSpec] = None

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "dim": self.dim,
            "seed": self.seed,
            "q": self.q,
            "mu": self.mu,
            "eta": self.eta,
            "trials": self.trials,
        }
        if self.spectrum is not None:
            out["spectrum"] = dict(self.spectrum)
        if self.rotation_seed is not None:
            out["rotation_seed"] = self.rotation_seed
        if self.gradient is not None:
            out["gradient"] = dict(self.gradient)
        if self.partition is not None:
            out["partition"] = dict(self.partition)
        if self.checkpoints is not None:
            out["checkpoints"] = list(self.checkpoints)
        if self.q_grid is not None:
            out["q_grid"] = list(self.q_grid)
        if self.rho is not None:
            out["rho"] = self.rho
        if self.consolidation_epsilon is not None:
            out["consolidation_epsilon"] = self.consolidation_epsilon
        if self.stream is not None:
            s = self.stream
            out["stream"] = {
                "kind": s.kind,
                "tasks": s.tasks,
                "steps_per_task": s.steps_per_task,
                "seeds": s.seeds,
                "methods": list(s.methods),
                "hot_count": s.hot_count,
                "hot_curvature": s.hot_curvature,
                "cold_curvature": s.cold_curvature,
            }
            if s.displacement_decay is not None:
                out["stream"]["displacement_decay"] = s.displacement_decay
        return out


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a JSON object")
    _check_keys(raw, _SCENARIO_KEYS, "scenario")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"scenario schema_version {version!r} not supported (expected {SCHEMA_VERSION})"
        )
    for key in ("dim", "seed"):
        if key not in raw:
            raise ConfigError(f"scenario is missing required key {key!r}")
    dim = int(raw["dim"])
    if dim < 2:
        raise ConfigError(f"dim must be at least 2, got {dim}")

    spectrum = raw.get("spectrum")
    if spectrum is not None:
        kind = spectrum.get("kind")
        if kind not in _SPECTRUM_KEYS:
            raise ConfigError(f"unknown spectrum kind {kind!r}")
        _check_keys(spectrum, _SPECTRUM_KEYS[kind], f"spectrum[{kind}]")

    gradient = raw.get("gradient")
    if gradient is not None:
        kind = gradient.get("kind")
        if kind not in _GRADIENT_KEYS:
            raise ConfigError(f"unknown gradient kind {kind!r}")
        _check_keys(gradient, _GRADIENT_KEYS[kind], f"gradient[{kind}]")

    partition = raw.get("partition")
    if partition is not None:
        _check_keys(partition, _PARTITION_KEYS, "partition")
        if "sizes" not in partition:
            raise ConfigError("partition requires sizes")

    stream_spec = None
    stream = raw.get("stream")
    if stream is not None:
        _check_keys(stream, _STREAM_KEYS, "stream")
        kind = stream.get("kind")
        if kind not in STREAM_KINDS:
            raise ConfigError(f"unknown stream kind {kind!r}")
        methods = tuple(stream.get("methods", STREAM_METHODS))
        bad = [m for m in methods if m not in STREAM_METHODS]
        if bad:
            raise ConfigError(f"unknown stream methods {bad}")
        stream_spec = StreamSpec(
            kind=kind,
            tasks=int(stream.get("tasks", 7)),
            steps_per_task=int(stream.get("steps_per_task", 10)),
            seeds=int(stream.get("seeds", 64)),
            methods=methods,
            hot_count=int(stream.get("hot_count", 4)),
            hot_curvature=float(stream.get("hot_curvature", 6.0)),
            cold_curvature=float(stream.get("cold_curvature", 0.5)),
            displacement_decay=(
                float(stream["displacement_decay"])
                if "displacement_decay" in stream
                else None
            ),
        )

    return Scenario(
        dim=dim,
        seed=int(raw["seed"]),
        spectrum=spectrum,
        rotation_seed=(int(raw["rotation_seed"]) if raw.get("rotation_seed") is not None else None),
        gradient=gradient,
        q=int(raw.get("q", 4)),
        mu=float(raw.get("mu", 0.0)),
        eta=float(raw.get("eta", 1.0)),
        partition=partition,
        trials=int(raw.get("trials", 20000)),
        checkpoints=(tuple(int(c) for c in raw["checkpoints"]) if raw.get("checkpoints") else None),
        q_grid=(tuple(int(q) for q in raw["q_grid"]) if raw.get("q_grid") else None),
        rho=(float(raw["rho"]) if raw.get("rho") is not None else None),
        consolidation_epsilon=(
            float(raw["consolidation_epsilon"])
            if raw.get("consolidation_epsilon") is not None
            else None
        ),
        stream=stream_spec,
    )


def load_scenario_file(path: str) -> tuple[Scenario, Optional[int]]:
    """Load a scenario JSON file; report files re-run from their metadata.

    Returns (scenario, embedded_seed) where embedded_seed is non-None when
    the file is a previously written report.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if isinstance(raw, dict) and "metadata" in raw and "payload" in raw:
        meta = raw["metadata"]
        if "scenario" not in meta:
            raise ConfigError(f"report file {path} has no embedded scenario")
        return scenario_from_dict(meta["scenario"]), meta.get("seed")
    return scenario_from_dict(raw), None


def build_spectrum(sc: Scenario) -> np.ndarray:
    """Eigenvalue array (ascending construction order) from the spectrum spec."""
    if sc.spectrum is None:
        raise ConfigError("scenario has no spectrum section")
    kind = sc.spectrum["kind"]
    if kind == "explicit":
        values = np.asarray(sc.spectrum["values"], dtype=np.float64)
        if values.shape != (sc.dim,):
            raise ConfigError(
                f"explicit spectrum has {values.size} values for dim {sc.dim}"
            )
        return values
    if kind == "linear_ramp":
        return np.linspace(float(sc.spectrum["lo"]), float(sc.spectrum["hi"]), sc.dim)
    if kind == "two_cluster":
        hi_count = int(sc.spectrum["hi_count"])
        if not (1 <= hi_count < sc.dim):
            raise ConfigError(f"hi_count {hi_count} must lie in [1, dim)")
        lam = np.full(sc.dim, float(sc.spectrum["lo"]))
        lam[-hi_count:] = float(sc.spectrum["hi"])
        return lam
    raise ConfigError(f"unknown spectrum kind {kind!r}")


def random_orthogonal(d: int, seed: int, stream: tuple = ("rotation",)) -> np.ndarray:
    """Haar-distributed orthogonal matrix from a named stream."""
    z = rng.normals(seed, stream, (d, d))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))


def build_basis(sc: Scenario) -> Optional[np.ndarray]:
    """Eigenbasis columns, or None when the spectrum sits on the axes."""
    if sc.rotation_seed is None:
        return None
    return random_orthogonal(sc.dim, sc.rotation_seed)


def build_curvature(sc: Scenario) -> tuple[SymMatrix, np.ndarray, Optional[np.ndarray]]:
    """Assemble (H, eigenvalues, basis) for the scenario."""
    lam = build_spectrum(sc)
    basis = build_basis(sc)
    if basis is None:
        return SymMatrix(np.diag(lam)), lam, None
    return symmetrize((basis * lam) @ basis.T), lam, basis


def build_gradient(sc: Scenario, lam: np.ndarray, basis: Optional[np.ndarray]) -> np.ndarray:
    """Unit gradient vector for single-gradient runners."""
    spec = sc.gradient or {"kind": "random"}
    kind = spec["kind"]
    if kind == "eigen_aligned":
        index = int(spec["index"])
        if not (-sc.dim <= index < sc.dim):
            raise ConfigError(f"eigen index {index} out of range for dim {sc.dim}")
        g = np.zeros(sc.dim)
        g[index] = 1.0
        return basis @ g if basis is not None else g
    if kind == "random":
        g = rng.normals(sc.seed, ("gradient",), (sc.dim,))
        return g / np.linalg.norm(g)
    raise ConfigError(f"gradient kind {kind!r} needs a sweep-aware runner")


def build_partition(sc: Scenario) -> BlockPartition:
    if sc.partition is None:
        raise ConfigError("scenario has no partition section")
    queries = sc.partition.get("queries", sc.q)
    part = block_partition(sc.partition["sizes"], queries)
    if part.dim != sc.dim:
        raise ConfigError(f"partition total {part.dim} != dim {sc.dim}")
    return part
