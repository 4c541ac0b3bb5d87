"""Closed-form identity self-test.

Every row recomputes one exact identity from an independent arithmetic
route and reports the residual against a fixed tolerance.  A corrupted
constant or a broken formula shows up as the first failing row.
"""

from __future__ import annotations

import numpy as np

from . import rng
from .exposure import centered_covariance, gap_closing_factor, zo_exposure
from .retention import (
    damage_context,
    equalized_spectrum,
    expected_shaped_curvature,
    fo_damage,
    mean_gap,
    relative_reduction,
    zo_mean_damage,
)
from .rise import BlockCurvatureView, block_partition, block_scores, blockwise_mean_gap
from .shaping import calibration_constants
from .symkernel import SymMatrix, eig_sym, symmetrize


def _rand_sym(d: int, seed: int) -> SymMatrix:
    a = rng.normals(seed, ("selftest", d), (d, d))
    return symmetrize(a + a.T)


def _rand_unit(d: int, seed: int) -> np.ndarray:
    g = rng.normals(seed, ("selftest-g", d), (d,))
    return g / np.linalg.norm(g)


def run_selftest() -> list:
    """Return the identity residual table: one dict per identity."""
    rows = []

    # shape calibration constants over a (d, q) grid
    res = 0.0
    for d in (2, 3, 8, 16, 64, 128):
        for q in (1, 2, 4, 16, 64):
            kappa, tau, shrink = calibration_constants(d, q)
            res = max(res, abs(kappa - (q + d + 1) / q))
            res = max(res, abs(tau - d / (q + d + 1)))
            res = max(res, abs(kappa * (1.0 - tau) - (q + 1) / q))
            res = max(res, abs(tau * kappa - d / q))
            res = max(res, abs(shrink**2 - (1.0 - tau)))
    rows.append({"identity": "shape-calibration-constants", "residual": res, "tolerance": 1e-13})

    # expected-curvature identity: mixing route vs raw-moment route
    res = 0.0
    for d, q, seed in ((6, 2, 1), (10, 5, 2)):
        h = _rand_sym(d, seed)
        mixed = expected_shaped_curvature(h, q)
        raw = ((q + 1) * h.a + np.trace(h.a) * np.eye(d)) / (q + d + 1)
        res = max(res, float(np.abs(mixed.a - raw).max()))
        # isotropic floor preserved, anisotropic excess contracted
        g = _rand_unit(d, seed)
        _, tau, _ = calibration_constants(d, q)
        lam_bar = np.trace(h.a) / d
        lhs = float(g @ (mixed.a @ g)) - lam_bar
        rhs = (1.0 - tau) * (float(g @ (h.a @ g)) - lam_bar)
        res = max(res, abs(lhs - rhs))
    rows.append({"identity": "expected-curvature-identity", "residual": res, "tolerance": 1e-12})

    # spectral equalization: eigenvalue map and trace preservation
    res = 0.0
    for d, q, seed in ((6, 3, 3), (12, 1, 4)):
        h = _rand_sym(d, seed)
        lam = eig_sym(h).eigenvalues
        _, tau, _ = calibration_constants(d, q)
        eq = equalized_spectrum(h, q)
        res = max(res, float(np.abs(eq - ((1 - tau) * lam + tau * lam.mean())).max()))
        res = max(res, abs(eq.sum() - lam.sum()) / max(1.0, abs(lam.sum())))
    rows.append({"identity": "spectral-equalization", "residual": res, "tolerance": 1e-10})

    # mean damage gap: difference route vs direct formula vs relative form
    res = 0.0
    for d, q, seed in ((5, 2, 5), (9, 4, 6)):
        h = _rand_sym(d, seed)
        shifted = symmetrize(h.a + (2.0 + abs(eig_sym(h).eigenvalues[0])) * np.eye(d))
        g = _rand_unit(d, seed + 10)
        ctx = damage_context(shifted, g, 0.7)
        res = max(res, abs((fo_damage(ctx) - zo_mean_damage(ctx, q)) - mean_gap(ctx, q)))
        res = max(res, abs(relative_reduction(ctx, q) * fo_damage(ctx) - mean_gap(ctx, q)))
    rows.append({"identity": "mean-damage-gap", "residual": res, "tolerance": 1e-12})

    # exposure interpolation: measured closing factor and top eigenvalue
    res = 0.0
    for d, q in ((4, 1), (8, 4), (16, 2)):
        g = 2.0 * _rand_unit(d, d + q)
        _, tau, _ = calibration_constants(d, q)
        res = max(res, abs(gap_closing_factor(g, q, 1.3, 0.9) - (1.0 - tau)))
        top = eig_sym(zo_exposure(g, q).m).eigenvalues[-1]
        g_sq = float(g @ g)
        res = max(res, abs(top - g_sq * (1.0 - tau + tau / d)) / g_sq)
    rows.append({"identity": "exposure-interpolation", "residual": res, "tolerance": 1e-11})

    # covariance consistency: moment = covariance + mean outer product
    res = 0.0
    for d, q in ((4, 2), (8, 1)):
        g = _rand_unit(d, 3 * d + q)
        _, tau, shrink = calibration_constants(d, q)
        cov = centered_covariance(g, q)
        recomposed = cov.a + shrink**2 * np.outer(g, g)
        res = max(res, float(np.abs(recomposed - zo_exposure(g, q).m.a).max()))
        g_sq = float(g @ g)
        res = max(res, abs(np.trace(cov.a) - (d + 1) * g_sq / (q + d + 1)))
        # squared mean plus covariance trace recovers the norm budget
        res = max(res, abs(shrink**2 * g_sq + np.trace(cov.a) - g_sq))
    rows.append({"identity": "covariance-consistency", "residual": res, "tolerance": 1e-12})

    # blockwise gap: score sum equals the within-block part
    res = 0.0
    for sizes, q, seed in (((3, 5), 2, 8), ((2, 2, 4), 1, 9)):
        d = sum(sizes)
        h = _rand_sym(d, seed)
        g = _rand_unit(d, seed + 20)
        part = block_partition(sizes, q)
        view = BlockCurvatureView.from_matrix(h, part)
        gap = blockwise_mean_gap(g, view, part, 0.8)
        shift = float(np.abs(h.a).sum())
        damped = block_scores(g, view, part, rho=shift, eta=0.8)
        res = max(res, abs(float(np.sum(damped.s_rise)) - float(np.sum(gap.within))))
    rows.append({"identity": "blockwise-gap-consistency", "residual": res, "tolerance": 1e-12})

    for row in rows:
        row["passed"] = bool(row["residual"] <= row["tolerance"])
    return rows
