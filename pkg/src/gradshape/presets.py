"""Default scenario dictionaries for the reference experiments.

These are the configurations the acceptance suite runs; the CLI accepts
them as plain scenario files (see the scenarios/ directory in the repo).
"""

from __future__ import annotations

from .scenario import SCHEMA_VERSION


def operator_default() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "dim": 64,
        "seed": 20240807,
        "spectrum": {"kind": "linear_ramp", "lo": 0.25, "hi": 4.0},
        "rotation_seed": 11,
        "gradient": {"kind": "random"},
        "q": 4,
        "eta": 1.0,
        "trials": 24000,
        "checkpoints": [100, 1000, 10000, 24000],
    }


def gap_sweep_default() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "dim": 32,
        "seed": 20240808,
        "spectrum": {"kind": "two_cluster", "lo": 0.25, "hi": 4.0, "hi_count": 8},
        "rotation_seed": 5,
        "gradient": {"kind": "angle_sweep", "count": 9},
        "q": 4,
        "eta": 1.0,
        "trials": 200000,
    }


def variance_default() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "dim": 256,
        "seed": 20240809,
        "spectrum": {"kind": "two_cluster", "lo": 0.5, "hi": 16.0, "hi_count": 8},
        "rotation_seed": 42,
        "gradient": {"kind": "eigen_aligned", "index": -1},
        "eta": 1.0,
        "partition": {"sizes": [16] * 16},
        "q_grid": [1, 2, 4, 8],
        "trials": 16000,
    }


def variance_trend_default() -> dict:
    """Noise-dominated variant where both deviation curves shrink with q."""
    return {
        "schema_version": SCHEMA_VERSION,
        "dim": 256,
        "seed": 20240810,
        "spectrum": {"kind": "linear_ramp", "lo": 0.05, "hi": 2.0},
        "rotation_seed": None,
        "gradient": {"kind": "random"},
        "eta": 1.0,
        "partition": {"sizes": [16] * 16},
        "q_grid": [1, 2, 4, 8],
        "trials": 16000,
    }


def stream_default(kind: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "dim": 8,
        "seed": 20240811,
        "q": 2,
        "mu": 0.5,
        "eta": 0.12,
        "partition": {"sizes": [2, 2, 2, 2]},
        "consolidation_epsilon": 0.0,
        "stream": {
            "kind": kind,
            "tasks": 7,
            "steps_per_task": 10,
            "seeds": 64,
            "methods": [
                "raw_fo",
                "scaled_fo",
                "iso_noise",
                "cov_matched_noise",
                "finite_diff_zo",
                "rise",
            ],
            "hot_count": 4,
            "hot_curvature": 6.0,
            "cold_curvature": 0.5,
        },
    }


def exposure_default() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "dim": 4,
        "seed": 20240812,
        "q": 4,
        "eta": 1.0,
        "trials": 1000,
    }


def blocks_default() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "dim": 8,
        "seed": 20240813,
        "spectrum": {"kind": "linear_ramp", "lo": 0.5, "hi": 4.0},
        "rotation_seed": 3,
        "gradient": {"kind": "random"},
        "q": 2,
        "eta": 1.0,
        "rho": 0.1,
        "partition": {"sizes": [4, 4]},
        "trials": 200000,
    }


ALL_PRESETS = {
    "operator": operator_default,
    "gap-sweep": gap_sweep_default,
    "variance": variance_default,
    "variance-trend": variance_trend_default,
    "stream-hot": lambda: stream_default("hot"),
    "stream-cold": lambda: stream_default("cold"),
    "exposure": exposure_default,
    "blocks": blocks_default,
}
