"""Quadratic forgetting damage and the zero-smoothing mean identities.

Everything here is closed form: shaped damage, the expected shaped
curvature, its equalized spectrum, the first-order/shaped mean damage gap,
and the relative reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NonPositiveDirectionalCurvature,
    NotPSD,
    ZeroGradient,
)
from .shaping import calibration_constants
from .symkernel import SymMatrix, eig_sym, psd_check, symmetrize, trace

_PSD_TOL = 1e-10


@dataclass(frozen=True)
class DamageContext:
    """Curvature, incoming gradient, and step size, with cached summaries.

    ``lambda_dir`` is the directional curvature g'Hg/|g|^2 and
    ``lambda_bar`` the mean curvature tr(H)/d; both are fixed at
    construction so every downstream identity sees one consistent pair.
    """

    h: SymMatrix
    g: np.ndarray
    eta: float
    lambda_dir: float
    lambda_bar: float

    @property
    def dim(self) -> int:
        return self.h.dim

    @property
    def g_sq(self) -> float:
        return float(self.g @ self.g)


def damage_context(h: SymMatrix, g, eta: float) -> DamageContext:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (h.dim,):
        raise DimensionMismatch(f"gradient shape {g.shape} != ({h.dim},)")
    g_sq = float(g @ g)
    if g_sq == 0.0:
        raise ZeroGradient("incoming gradient must be nonzero")
    if eta <= 0.0:
        raise DimensionMismatch(f"learning rate must be positive, got {eta}")
    g = g.copy()
    g.setflags(write=False)
    return DamageContext(
        h=h,
        g=g,
        eta=float(eta),
        lambda_dir=float(g @ (h.a @ g)) / g_sq,
        lambda_bar=trace(h) / h.dim,
    )


def quadratic_damage(ctx: DamageContext, delta) -> float:
    """Quadratic damage (1/2) delta' H delta of a displacement."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (ctx.dim,):
        raise DimensionMismatch(f"displacement shape {delta.shape} != ({ctx.dim},)")
    return 0.5 * float(delta @ (ctx.h.a @ delta))


def fo_damage(ctx: DamageContext) -> float:
    """Damage of the unshaped step -eta g: (eta^2/2) |g|^2 lambda_dir."""
    return 0.5 * ctx.eta**2 * ctx.g_sq * ctx.lambda_dir


def expected_shaped_curvature(h: SymMatrix, q: int) -> SymMatrix:
    """Mean curvature exposed by the norm-matched shape.

    Closed form (1 - tau) H + tau lambda_bar I with tau = d/(q+d+1): the
    isotropic component is preserved and the anisotropic part contracts.
    Holds for any symmetric H; positive semidefiniteness is not needed.
    """
    _, tau, _ = calibration_constants(h.dim, q)
    lam_bar = trace(h) / h.dim
    out = (1.0 - tau) * h.a + (tau * lam_bar) * np.eye(h.dim)
    return symmetrize(out)


def equalized_spectrum(h: SymMatrix, q: int) -> np.ndarray:
    """Eigenvalues of the expected shaped curvature, in eig_sym order.

    Each eigenvalue moves toward the mean, lambda_i -> (1-tau) lambda_i +
    tau lambda_bar, so the mean eigenvalue is preserved exactly.
    """
    _, tau, _ = calibration_constants(h.dim, q)
    lam = eig_sym(h).eigenvalues
    lam_bar = trace(h) / h.dim
    return (1.0 - tau) * lam + tau * lam_bar


def zo_mean_damage(ctx: DamageContext, q: int) -> float:
    """Mean shaped damage (eta^2/2)|g|^2((1-tau) lambda_dir + tau lambda_bar)."""
    _, tau, _ = calibration_constants(ctx.dim, q)
    mix = (1.0 - tau) * ctx.lambda_dir + tau * ctx.lambda_bar
    return 0.5 * ctx.eta**2 * ctx.g_sq * mix


def mean_gap(ctx: DamageContext, q: int) -> float:
    """Mean damage saved by shaping: (eta^2/2) tau |g|^2 (lambda_dir - lambda_bar).

    Positive exactly when the gradient crosses above-average curvature.
    """
    _, tau, _ = calibration_constants(ctx.dim, q)
    return 0.5 * ctx.eta**2 * tau * ctx.g_sq * (ctx.lambda_dir - ctx.lambda_bar)


def relative_reduction(ctx: DamageContext, q: int) -> float:
    """Fraction of first-order damage removed: tau (1 - lambda_bar/lambda_dir).

    Requires PSD curvature (damage reading) and positive directional
    curvature.
    """
    if not psd_check(ctx.h, _PSD_TOL):
        raise NotPSD("curvature must be PSD to read the quadratic form as damage")
    if ctx.lambda_dir <= 0.0:
        raise NonPositiveDirectionalCurvature(
            f"directional curvature {ctx.lambda_dir:.3e} must be positive"
        )
    _, tau, _ = calibration_constants(ctx.dim, q)
    return tau * (1.0 - ctx.lambda_bar / ctx.lambda_dir)
