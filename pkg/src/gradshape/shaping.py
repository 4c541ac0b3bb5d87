"""Gaussian direction sampling, the raw and norm-matched shapes, and the
two-point finite-difference estimator with its smoothing-residual split."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rng
from .errors import (
    BadDimension,
    DimensionMismatch,
    NonFiniteFunctionValue,
    NotPD,
    ZeroGradient,
)
from .symkernel import SymMatrix, eig_sym, inv_sqrt, symmetrize, trace


def calibration_constants(d: int, q: int) -> tuple[float, float, float]:
    """Return (kappa, tau, shrink) for dimension d and query count q.

    kappa = (q+d+1)/q is the raw squared-norm inflation factor,
    tau = d/(q+d+1) the isotropic mixing weight, and
    shrink = kappa**-0.5 = sqrt(q/(q+d+1)) the norm-matched mean shrinkage.
    """
    if d < 2 or q < 1:
        raise BadDimension(f"need d >= 2 and q >= 1, got d={d} q={q}")
    kappa = (q + d + 1) / q
    tau = d / (q + d + 1)
    return kappa, tau, 1.0 / np.sqrt(kappa)


@dataclass(frozen=True)
class DirectionBatch:
    """q i.i.d. standard-normal directions of length d from a named stream."""

    dim: int
    count: int
    directions: np.ndarray  # shape (q, d)

    def __post_init__(self):
        z = np.asarray(self.directions, dtype=np.float64)
        if z.shape != (self.count, self.dim):
            raise DimensionMismatch(f"directions shape {z.shape} != ({self.count}, {self.dim})")
        object.__setattr__(self, "directions", z)


def sample_directions(d: int, q: int, seed: int, stream: tuple = ()) -> DirectionBatch:
    if d < 2 or q < 1:
        raise BadDimension(f"need d >= 2 and q >= 1, got d={d} q={q}")
    z = rng.normals(seed, stream, (q, d))
    return DirectionBatch(dim=d, count=q, directions=z)


@dataclass(frozen=True)
class ShapeSample:
    """One sampled shape: direction batch, raw matrix Z, and its constants."""

    batch: DirectionBatch
    raw_z: SymMatrix
    kappa: float
    tau: float

    @property
    def dim(self) -> int:
        return self.batch.dim

    @property
    def shrink(self) -> float:
        return 1.0 / np.sqrt(self.kappa)


def shape_from_directions(batch: DirectionBatch) -> ShapeSample:
    z = batch.directions
    raw = z.T @ z / batch.count
    kappa, tau, _ = calibration_constants(batch.dim, batch.count)
    return ShapeSample(batch=batch, raw_z=symmetrize(raw), kappa=kappa, tau=tau)


def sample_shape(d: int, q: int, seed: int, stream: tuple = ()) -> ShapeSample:
    """Sample the raw shape Z = q^-1 sum_r z_r z_r^T from a named stream."""
    return shape_from_directions(sample_directions(d, q, seed, stream))


def _check_gradient(s: ShapeSample, g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (s.dim,):
        raise DimensionMismatch(f"gradient shape {g.shape} != ({s.dim},)")
    if not np.any(g):
        raise ZeroGradient("gradient must be nonzero")
    return g


def apply_raw(s: ShapeSample, g: np.ndarray) -> np.ndarray:
    """Raw shaped gradient Z g; mean-aligned with g, norm-inflated by kappa."""
    g = _check_gradient(s, g)
    return s.raw_z.a @ g


def apply_norm_matched(s: ShapeSample, g: np.ndarray) -> np.ndarray:
    """Norm-matched shaped gradient kappa**-0.5 Z g."""
    g = _check_gradient(s, g)
    return s.shrink * (s.raw_z.a @ g)


@dataclass(frozen=True)
class SmoothedEstimate:
    """Two-point estimate split into Z g plus the smoothing residual.

    The split needs the true gradient; for a black-box objective only
    ``estimate`` is populated and the residual is unavailable (None).
    """

    estimate: np.ndarray
    raw_part: Optional[np.ndarray]
    residual: Optional[np.ndarray]
    mu: float


def two_point_estimate(
    f: Callable[[np.ndarray], float],
    theta: np.ndarray,
    mu: float,
    batch: DirectionBatch,
    grad: Optional[np.ndarray] = None,
    noise_std: float = 0.0,
    noise_seed: int = 0,
    noise_stream: tuple = (),
) -> SmoothedEstimate:
    """Symmetric-difference gradient estimate along the batch directions.

    Each direction contributes ((f(theta+mu z) - f(theta-mu z)) / (2 mu)) z.
    Optional additive Gaussian observation noise of std ``noise_std`` is
    applied independently per function evaluation; default off.
    """
    if mu <= 0.0:
        raise BadDimension(f"smoothing radius must be positive, got {mu}")
    theta = np.asarray(theta, dtype=np.float64)
    z = batch.directions
    q = batch.count
    plus = np.empty(q)
    minus = np.empty(q)
    for r in range(q):
        plus[r] = f(theta + mu * z[r])
        minus[r] = f(theta - mu * z[r])
    if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
        raise NonFiniteFunctionValue("objective returned NaN or Inf at a query point")
    if noise_std > 0.0:
        xi = noise_std * rng.normals(noise_seed, noise_stream, (2, q))
        plus = plus + xi[0]
        minus = minus + xi[1]
    coeff = (plus - minus) / (2.0 * mu)
    estimate = coeff @ z / q
    if grad is None:
        return SmoothedEstimate(estimate=estimate, raw_part=None, residual=None, mu=mu)
    grad = np.asarray(grad, dtype=np.float64)
    # Per-row dot products so the raw part follows the exact contraction
    # order of the estimate; the residual then cancels bit-for-bit when the
    # objective is free of curvature along the queried segments.
    align = np.array([z[r] @ grad for r in range(q)])
    raw_part = align @ z / q
    return SmoothedEstimate(
        estimate=estimate, raw_part=raw_part, residual=estimate - raw_part, mu=mu
    )


def whitening_reference(h: SymMatrix, o: Optional[np.ndarray] = None) -> np.ndarray:
    """Full-information reference operator sqrt(mean_curv) * h**-0.5 @ o.

    Conjugating h by the result yields mean_curv * I: the isotropic
    exposure a curvature-aware whitener would realize.  Requires h
    strictly positive definite; ``o`` defaults to the identity.
    """
    root = inv_sqrt(h)  # raises NotPD on sign failure
    lam_bar = trace(h) / h.dim
    op = np.sqrt(lam_bar) * root.a
    if o is not None:
        o = np.asarray(o, dtype=np.float64)
        if o.shape != (h.dim, h.dim):
            raise DimensionMismatch(f"orthogonal action shape {o.shape} != {(h.dim, h.dim)}")
        op = op @ o
    return op
