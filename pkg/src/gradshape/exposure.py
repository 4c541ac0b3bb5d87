"""Second-moment exposure analysis under a fixed norm budget.

The worst-case curvature with a fixed trace concentrates on the most
exposed direction of a second moment, so the curvature-agnostic optimum is
isotropic; the norm-matched shape sits a fixed fraction of the way there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadAlpha, BadDimension, DegenerateDimension, NotPSD, ZeroGradient
from .shaping import calibration_constants
from .symkernel import SymMatrix, eig_sym, psd_check, symmetrize

_PSD_TOL = 1e-10
_TRACE_TOL = 1e-10


@dataclass(frozen=True)
class ExposureMoment:
    """PSD second moment with trace pinned to the squared-norm budget."""

    m: SymMatrix
    trace_budget: float

    def __post_init__(self):
        if not psd_check(self.m, _PSD_TOL):
            raise NotPSD("second moment must be PSD")
        tr = float(np.trace(self.m.a))
        if abs(tr - self.trace_budget) > _TRACE_TOL * abs(self.trace_budget):
            raise BadDimension(
                f"trace {tr!r} does not match budget {self.trace_budget!r}"
            )

    @property
    def dim(self) -> int:
        return self.m.dim


def _gradient(g) -> tuple[np.ndarray, float]:
    g = np.asarray(g, dtype=np.float64)
    if not np.any(g):
        raise ZeroGradient("gradient must be nonzero")
    return g, float(g @ g)


def fo_exposure(g) -> ExposureMoment:
    """Rank-one exposure g g' of the unshaped step."""
    g, g_sq = _gradient(g)
    return ExposureMoment(m=symmetrize(np.outer(g, g)), trace_budget=g_sq)


def isotropic_optimum(g) -> ExposureMoment:
    """The blind-optimal isotropic exposure (|g|^2/d) I."""
    g, g_sq = _gradient(g)
    d = g.shape[0]
    return ExposureMoment(m=SymMatrix(g_sq / d * np.eye(d)), trace_budget=g_sq)


def worst_case_exposure(m: ExposureMoment, lambda_bar: float, eta: float, d: int) -> float:
    """Worst mean damage over PSD curvatures with trace d*lambda_bar.

    The adversary spikes all its trace on the top eigenvector of the
    moment, giving (eta^2/2) d lambda_bar lambda_max(m).
    """
    if lambda_bar <= 0.0:
        raise BadDimension(f"mean curvature scale must be positive, got {lambda_bar}")
    if d != m.dim:
        raise BadDimension(f"dimension {d} does not match moment dimension {m.dim}")
    lam_max = float(eig_sym(m.m).eigenvalues[-1])
    return 0.5 * eta**2 * d * lambda_bar * lam_max


def zo_exposure(g, q: int) -> ExposureMoment:
    """Second moment of the norm-matched shaped gradient.

    Closed form (1-tau) g g' + tau (|g|^2/d) I: the convex combination of
    the rank-one exposure and the isotropic optimum with weight tau.
    """
    g, g_sq = _gradient(g)
    d = g.shape[0]
    _, tau, _ = calibration_constants(d, q)
    m = (1.0 - tau) * np.outer(g, g) + tau * g_sq / d * np.eye(d)
    return ExposureMoment(m=symmetrize(m), trace_budget=g_sq)


def gap_closing_factor(g, q: int, lambda_bar: float, eta: float) -> float:
    """Measured fraction of the rank-one-to-isotropic exposure gap left open.

    Computed from the three worst-case exposures; equals
    (1-tau) = (q+1)/(q+d+1) up to eigensolver precision.
    """
    g, _ = _gradient(g)
    d = g.shape[0]
    if d < 2:
        raise DegenerateDimension("need d >= 2 for a nonzero exposure gap")
    r_fo = worst_case_exposure(fo_exposure(g), lambda_bar, eta, d)
    r_star = worst_case_exposure(isotropic_optimum(g), lambda_bar, eta, d)
    r_zo = worst_case_exposure(zo_exposure(g, q), lambda_bar, eta, d)
    return (r_zo - r_star) / (r_fo - r_star)


def aligned_benchmark(g, alpha: float, lambda_bar: float, eta: float):
    """Minimax exposure when the mean must stay alpha-aligned with g.

    Returns ``(value, moment)`` with value
    (eta^2/2) d lambda_bar |g|^2 max(alpha^2, 1/d).  Below alpha^2 = 1/d the
    isotropic optimum is still feasible; above it the moment spikes
    alpha^2 g g' and spreads the remaining trace over the orthogonal
    complement.
    """
    if not (0.0 <= alpha <= 1.0):
        raise BadAlpha(f"alignment must lie in [0,1], got {alpha}")
    g, g_sq = _gradient(g)
    d = g.shape[0]
    if d < 2:
        raise DegenerateDimension("need d >= 2")
    value = 0.5 * eta**2 * d * lambda_bar * g_sq * max(alpha**2, 1.0 / d)
    if alpha**2 <= 1.0 / d:
        moment = isotropic_optimum(g)
    else:
        ghat = np.outer(g, g) / g_sq
        perp = np.eye(d) - ghat
        m = alpha**2 * np.outer(g, g) + (1.0 - alpha**2) * g_sq / (d - 1) * perp
        moment = ExposureMoment(m=symmetrize(m), trace_budget=g_sq)
    return value, moment


def centered_covariance(g, q: int) -> SymMatrix:
    """Covariance of the norm-matched shaped gradient around its mean.

    Closed form (g g' + |g|^2 I) / (q+d+1); adding back the mean outer
    product recovers the full second moment.
    """
    g, g_sq = _gradient(g)
    d = g.shape[0]
    denom = q + d + 1
    return symmetrize((np.outer(g, g) + g_sq * np.eye(d)) / denom)
