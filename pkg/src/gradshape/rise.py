"""Blockwise norm-matched shaping of exact gradients, with its support
theory: blockwise expected curvature and mean gap, deviation accounting,
mean/residual decomposition, block scores, coupling, and the matched
control adaptations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import rng
from .deviation import psi_q
from .errors import (
    BadDimension,
    DimensionMismatch,
    MissingCrossBlocks,
    NotPD,
    NotPDWithDamping,
    PartitionMismatch,
    TooFewTrials,
    ZeroGradient,
)
from .shaping import calibration_constants
from .symkernel import SymMatrix, eig_sym, inv_sqrt, sqrt_pd, symmetrize

CONTROL_KINDS = ("raw_fo", "scaled_fo", "iso_noise", "cov_matched_noise")


@dataclass(frozen=True)
class BlockPartition:
    """Ordered contiguous blocks with per-block query counts.

    Derived constants per block: kappa_b = (q_b+d_b+1)/q_b,
    tau_b = d_b/(q_b+d_b+1), shrink a_b = sqrt(q_b/(q_b+d_b+1)).
    """

    sizes: tuple
    queries: tuple
    kappas: np.ndarray
    taus: np.ndarray
    shrinks: np.ndarray
    offsets: tuple

    @property
    def dim(self) -> int:
        return self.offsets[-1]

    @property
    def count(self) -> int:
        return len(self.sizes)

    def block_slice(self, b: int) -> slice:
        return slice(self.offsets[b], self.offsets[b + 1])

    def split(self, g: np.ndarray) -> list:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.dim,):
            raise PartitionMismatch(f"vector length {g.shape} != partition total {self.dim}")
        return [g[self.block_slice(b)] for b in range(self.count)]


def block_partition(sizes: Sequence[int], queries) -> BlockPartition:
    sizes = tuple(int(s) for s in sizes)
    if not sizes or any(s < 1 for s in sizes):
        raise BadDimension(f"block sizes must be positive, got {sizes}")
    if isinstance(queries, int):
        qs = (queries,) * len(sizes)
    else:
        qs = tuple(int(q) for q in queries)
        if len(qs) != len(sizes):
            raise PartitionMismatch("one query count per block required")
    if any(q < 1 for q in qs):
        raise BadDimension(f"query counts must be positive, got {qs}")
    kappas = np.array([(q + s + 1) / q for s, q in zip(sizes, qs)])
    taus = np.array([s / (q + s + 1) for s, q in zip(sizes, qs)])
    shrinks = 1.0 / np.sqrt(kappas)
    offsets = (0, *np.cumsum(sizes).tolist())
    return BlockPartition(
        sizes=sizes, queries=qs, kappas=kappas, taus=taus, shrinks=shrinks, offsets=offsets
    )


@dataclass(frozen=True)
class BlockCurvatureView:
    """Curvature seen through a partition: diagonal blocks, optional
    cross blocks (upper pairs b < c), and per-block mean curvature."""

    diag_blocks: tuple
    cross_blocks: Optional[dict]
    lambda_bars: np.ndarray

    @property
    def count(self) -> int:
        return len(self.diag_blocks)

    @property
    def sizes(self) -> tuple:
        return tuple(blk.dim for blk in self.diag_blocks)

    @property
    def dim(self) -> int:
        return int(sum(self.sizes))

    def cross(self, b: int, c: int) -> np.ndarray:
        """Cross block H[b, c] for b < c; raises when absent."""
        if self.cross_blocks is None:
            raise MissingCrossBlocks("view was built without cross blocks")
        return self.cross_blocks[(b, c)]

    @staticmethod
    def from_matrix(h: SymMatrix, partition: BlockPartition, include_cross: bool = True):
        if h.dim != partition.dim:
            raise PartitionMismatch(f"matrix dim {h.dim} != partition total {partition.dim}")
        diag = []
        for b in range(partition.count):
            sl = partition.block_slice(b)
            block = h.a[sl, sl]
            if block.shape[0] == 1:
                # 1x1 blocks bypass the d >= 2 wrapper; keep raw arrays out
                # of the public type by widening with an explicit zero pad.
                diag.append(_OneByOne(block[0, 0]))
            else:
                diag.append(SymMatrix(block))
        cross = None
        if include_cross:
            cross = {}
            for b in range(partition.count):
                for c in range(b + 1, partition.count):
                    cross[(b, c)] = np.array(
                        h.a[partition.block_slice(b), partition.block_slice(c)]
                    )
        lambda_bars = np.array([float(np.trace(_arr(blk))) / blk.dim for blk in diag])
        return BlockCurvatureView(
            diag_blocks=tuple(diag), cross_blocks=cross, lambda_bars=lambda_bars
        )


class _OneByOne:
    """Minimal stand-in for a 1x1 symmetric block."""

    def __init__(self, value: float):
        self.a = np.array([[float(value)]])
        self.a.setflags(write=False)

    @property
    def dim(self) -> int:
        return 1


def _arr(block) -> np.ndarray:
    return block.a


def _sym_eigenvalues(a: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a symmetric array of any size >= 1."""
    if a.shape[0] == 1:
        return np.array([a[0, 0]])
    return eig_sym(symmetrize(a)).eigenvalues


def _sym_op_norm(a: np.ndarray) -> float:
    w = _sym_eigenvalues(a)
    return float(np.max(np.abs(w)))


def _rect_op_norm(a: np.ndarray) -> float:
    """Largest singular value via the symmetric Gram matrix."""
    gram = a.T @ a if a.shape[0] >= a.shape[1] else a @ a.T
    w = _sym_eigenvalues(symmetrize_arr(gram))
    return float(np.sqrt(max(0.0, w[-1])))


def symmetrize_arr(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _sym_solve(a: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve a x = rhs for symmetric a; returns (x, min eigenvalue)."""
    if a.shape[0] == 1:
        lam = float(a[0, 0])
        return rhs / lam if lam != 0.0 else rhs * np.inf, lam
    dec = eig_sym(symmetrize(a))
    lam_min = float(dec.eigenvalues[0])
    if lam_min <= 0.0:
        return np.full_like(rhs, np.nan), lam_min
    v = dec.eigenvectors
    return v @ ((v.T @ rhs) / dec.eigenvalues), lam_min


def _sym_inv(a: np.ndarray) -> np.ndarray:
    if a.shape[0] == 1:
        return np.array([[1.0 / a[0, 0]]])
    dec = eig_sym(symmetrize(a))
    v = dec.eigenvectors
    return (v / dec.eigenvalues) @ v.T


def _block_streams(partition: BlockPartition, stream: tuple):
    return [stream + ("block", b) for b in range(partition.count)]


def rise_shape(g, partition: BlockPartition, seed: int, stream: tuple = ()) -> np.ndarray:
    """Shape each gradient block with its own norm-matched random shape.

    Per block, q_b fresh Gaussian directions from the block's stream give
    z-bar = q^-1 sum z (z'g_b), scaled by kappa_b**-0.5.  Zero blocks pass
    through as zero without touching their stream.
    """
    parts = partition.split(g)
    out = np.zeros(partition.dim)
    for b, g_b in enumerate(parts):
        if not np.any(g_b):
            continue
        d_b = partition.sizes[b]
        q_b = partition.queries[b]
        z = rng.normals(seed, stream + ("block", b), (q_b, d_b))
        shaped = (z @ g_b) @ z / q_b
        out[partition.block_slice(b)] = partition.shrinks[b] * shaped
    return out


def blockwise_expected_curvature(
    view: BlockCurvatureView, partition: BlockPartition
) -> SymMatrix:
    """Assemble the full expected shaped curvature across blocks.

    Diagonal blocks follow the single-block identity with their own
    (tau_b, lambda_bar_b); cross blocks scale by a_b a_c since the block
    shapes are independent with mean a_b I.
    """
    if view.sizes != partition.sizes:
        raise PartitionMismatch("view and partition block sizes differ")
    if view.cross_blocks is None:
        raise MissingCrossBlocks("full assembly requires cross blocks (explicit zeros allowed)")
    d = partition.dim
    out = np.zeros((d, d))
    for b in range(partition.count):
        sl = partition.block_slice(b)
        tau_b = partition.taus[b]
        h_bb = _arr(view.diag_blocks[b])
        out[sl, sl] = (1.0 - tau_b) * h_bb + tau_b * view.lambda_bars[b] * np.eye(
            partition.sizes[b]
        )
    for b in range(partition.count):
        for c in range(b + 1, partition.count):
            scale = partition.shrinks[b] * partition.shrinks[c]
            block = scale * view.cross(b, c)
            out[partition.block_slice(b), partition.block_slice(c)] = block
            out[partition.block_slice(c), partition.block_slice(b)] = block.T
    return SymMatrix(out)


@dataclass(frozen=True)
class BlockMeanGap:
    """Mean damage gap split into within-block and cross-block parts.

    ``partial`` marks a total computed without cross-block curvature.
    """

    total: float
    within: np.ndarray
    cross: Optional[float]
    partial: bool


def blockwise_mean_gap(
    g, view: BlockCurvatureView, partition: BlockPartition, eta: float
) -> BlockMeanGap:
    """Closed-form mean gap of blockwise shaping versus the unshaped step.

    within_b = (eta^2/2) tau_b g_b'(H_bb - lambda_bar_b I) g_b and
    cross = eta^2 sum_{b<c} (1 - a_b a_c) g_b' H_bc g_c.
    """
    parts = partition.split(g)
    within = np.empty(partition.count)
    for b, g_b in enumerate(parts):
        h_bb = _arr(view.diag_blocks[b])
        excess = float(g_b @ (h_bb @ g_b)) - view.lambda_bars[b] * float(g_b @ g_b)
        within[b] = 0.5 * eta**2 * partition.taus[b] * excess
    if view.cross_blocks is None:
        return BlockMeanGap(total=float(np.sum(within)), within=within, cross=None, partial=True)
    cross = 0.0
    for b in range(partition.count):
        for c in range(b + 1, partition.count):
            scale = 1.0 - partition.shrinks[b] * partition.shrinks[c]
            cross += scale * float(parts[b] @ (view.cross(b, c) @ parts[c]))
    cross *= eta**2
    return BlockMeanGap(
        total=float(np.sum(within) + cross), within=within, cross=cross, partial=False
    )


@dataclass(frozen=True)
class BlockDeviationBound:
    total: float
    within: np.ndarray
    cross: Optional[float]
    partial: bool


def blockwise_deviation_bound(
    g,
    view: BlockCurvatureView,
    partition: BlockPartition,
    deltas: Sequence[float],
    c_universal: float,
    eta: float,
) -> BlockDeviationBound:
    """One-batch deviation bound summed over blocks at union budget sum(deltas).

    Diagonal terms C (eta^2/2) |g_b|^2 ||H_bb||_op (psi_b + psi_b^2); cross
    terms eta^2 C a_b a_c |g_b||g_c| ||H_bc||_op (psi_b + psi_c + psi_b psi_c),
    omitted and flagged when the view has no cross blocks.
    """
    parts = partition.split(g)
    deltas = list(deltas)
    if len(deltas) != partition.count:
        raise PartitionMismatch("one delta per block required")
    psis = [
        psi_q(max(partition.sizes[b], 2), partition.queries[b], deltas[b])
        for b in range(partition.count)
    ]
    within = np.empty(partition.count)
    for b, g_b in enumerate(parts):
        op = _sym_op_norm(_arr(view.diag_blocks[b]))
        within[b] = (
            c_universal * 0.5 * eta**2 * float(g_b @ g_b) * op * (psis[b] + psis[b] ** 2)
        )
    if view.cross_blocks is None:
        return BlockDeviationBound(
            total=float(np.sum(within)), within=within, cross=None, partial=True
        )
    cross = 0.0
    for b in range(partition.count):
        for c in range(b + 1, partition.count):
            block = view.cross(b, c)
            op = _rect_op_norm(block) if min(block.shape) > 0 else 0.0
            scale = partition.shrinks[b] * partition.shrinks[c]
            cross += (
                c_universal
                * eta**2
                * scale
                * np.linalg.norm(parts[b])
                * np.linalg.norm(parts[c])
                * op
                * (psis[b] + psis[c] + psis[b] * psis[c])
            )
    return BlockDeviationBound(
        total=float(np.sum(within) + cross), within=within, cross=float(cross), partial=False
    )


def mean_residual_decomposition(
    samples: np.ndarray,
    view: BlockCurvatureView,
    partition: BlockPartition,
    eta: float,
) -> tuple[float, float]:
    """Split expected damage into mean-step and residual terms.

    ``samples`` holds one shaped direction per row; the displacement per
    trial is -eta * row.  Returns (mean_term, residual_term) where the mean
    term (eta^2/2) m'Hm uses the full curvature including cross blocks and
    the residual term sums (eta^2/2) tr(H_bb Sigma_b) over blocks from the
    empirical block covariances.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[1] != partition.dim:
        raise PartitionMismatch(f"samples shape {samples.shape} incompatible with partition")
    n = samples.shape[0]
    if n < 100:
        raise TooFewTrials(f"need at least 100 trials, got {n}")
    if view.cross_blocks is None:
        raise MissingCrossBlocks("mean term requires the full curvature")
    mean_vec = samples.mean(axis=0)
    full = _assemble_full(view, partition)
    mean_term = 0.5 * eta**2 * float(mean_vec @ (full @ mean_vec))
    residual = 0.0
    for b in range(partition.count):
        sl = partition.block_slice(b)
        centered = samples[:, sl] - mean_vec[sl]
        sigma_b = centered.T @ centered / n
        residual += float(np.sum(_arr(view.diag_blocks[b]) * sigma_b))
    return mean_term, 0.5 * eta**2 * residual


def _assemble_full(view: BlockCurvatureView, partition: BlockPartition) -> np.ndarray:
    d = partition.dim
    full = np.zeros((d, d))
    for b in range(partition.count):
        sl = partition.block_slice(b)
        full[sl, sl] = _arr(view.diag_blocks[b])
    if view.cross_blocks is not None:
        for (b, c), block in view.cross_blocks.items():
            full[partition.block_slice(b), partition.block_slice(c)] = block
            full[partition.block_slice(c), partition.block_slice(b)] = block.T
    return full


@dataclass(frozen=True)
class BlockScores:
    """Per-block diagnostics for where blockwise shaping should matter.

    s_rise is the within-block mean-gap score, damage_density the mean
    curvature cost per unit isotropic exposure, flat_signal the damped
    inverse-curvature signal energy, coupling the cross-block interaction
    strength (``coupling_kind`` records whether block covariances were
    supplied or the raw Frobenius variant was used).
    """

    s_rise: np.ndarray
    damage_density: np.ndarray
    flat_signal: np.ndarray
    coupling: np.ndarray
    coupling_kind: str


def block_scores(
    g,
    view: BlockCurvatureView,
    partition: BlockPartition,
    rho: float,
    eta: float,
    sigma_blocks: Optional[Sequence[np.ndarray]] = None,
) -> BlockScores:
    parts = partition.split(g)
    nb = partition.count
    s_rise = np.empty(nb)
    density = np.empty(nb)
    flat = np.empty(nb)
    for b, g_b in enumerate(parts):
        h_bb = _arr(view.diag_blocks[b])
        g_sq = float(g_b @ g_b)
        density[b] = view.lambda_bars[b]
        if g_sq > 0.0:
            lam_b = float(g_b @ (h_bb @ g_b)) / g_sq
            s_rise[b] = 0.5 * eta**2 * partition.taus[b] * g_sq * (
                lam_b - view.lambda_bars[b]
            )
        else:
            s_rise[b] = 0.0
        damped = h_bb + rho * np.eye(h_bb.shape[0])
        solved, lam_min = _sym_solve(damped, g_b)
        if lam_min <= 0.0:
            raise NotPDWithDamping(
                f"block {b} damped curvature has min eigenvalue {lam_min:.3e}"
            )
        flat[b] = float(g_b @ solved)
    coupling = np.zeros(nb)
    kind = "shape_aware" if sigma_blocks is not None else "raw"
    if view.cross_blocks is not None:
        roots = None
        if sigma_blocks is not None:
            if len(sigma_blocks) != nb:
                raise PartitionMismatch("one covariance per block required")
            roots = []
            for b, sig in enumerate(sigma_blocks):
                sig = np.asarray(sig, dtype=np.float64)
                if sig.shape[0] == 1:
                    roots.append(np.sqrt(np.abs(sig)))
                else:
                    roots.append(sqrt_pd(symmetrize(sig)).a)
        for b in range(nb):
            total = 0.0
            for c in range(nb):
                if c == b:
                    continue
                lo, hi = min(b, c), max(b, c)
                block = view.cross(lo, hi)
                if c < b:
                    block = block.T
                if roots is not None:
                    block = roots[b] @ block @ roots[c]
                total += float(np.linalg.norm(block))
            coupling[b] = total
    return BlockScores(
        s_rise=s_rise,
        damage_density=density,
        flat_signal=flat,
        coupling=coupling,
        coupling_kind=kind,
    )


@dataclass(frozen=True)
class CouplingReport:
    """Normalized strength of omitted cross-block curvature.

    When epsilon < 1 the two-sided inverse sandwich is probed on random
    vectors and ``max_violation`` records the worst relative slack; above
    1 the sandwich is not asserted (``sandwich_checked`` False).
    """

    epsilon: float
    sandwich_checked: bool
    max_violation: Optional[float]


def coupling_coefficient(
    view: BlockCurvatureView,
    partition: BlockPartition,
    probes: int = 100,
    seed: int = 0,
    stream: tuple = ("coupling",),
    tol: float = 1e-8,
) -> CouplingReport:
    """Operator norm of the block-normalized cross curvature.

    epsilon = || H_blk^-1/2 (H - H_blk) H_blk^-1/2 ||_op for strictly PD
    block diagonal.  For epsilon < 1, verifies on random probes v that
    v'H^-1 v lies within [(1+eps)^-1, (1-eps)^-1] times v'H_blk^-1 v.
    """
    if view.cross_blocks is None:
        raise MissingCrossBlocks("coupling needs cross blocks")
    full = _assemble_full(view, partition)
    d = partition.dim
    blk = np.zeros((d, d))
    for b in range(partition.count):
        sl = partition.block_slice(b)
        blk[sl, sl] = _arr(view.diag_blocks[b])
    blk_eigs = _sym_eigenvalues(blk)
    if blk_eigs[0] <= 0.0:
        raise NotPD(f"block diagonal min eigenvalue {blk_eigs[0]:.3e} is not positive")
    root = inv_sqrt(SymMatrix(blk)).a
    mixed = root @ (full - blk) @ root
    epsilon = _sym_op_norm(symmetrize_arr(mixed))
    if epsilon >= 1.0:
        return CouplingReport(epsilon=epsilon, sandwich_checked=False, max_violation=None)
    h_inv = _sym_inv(full)
    blk_inv = _sym_inv(blk)
    v = rng.normals(seed, stream, (probes, d))
    quad_h = np.einsum("nd,nd->n", v @ h_inv, v)
    quad_blk = np.einsum("nd,nd->n", v @ blk_inv, v)
    lo = quad_blk / (1.0 + epsilon)
    hi = quad_blk / (1.0 - epsilon)
    slack = np.maximum(lo - quad_h, quad_h - hi) / np.abs(quad_blk)
    max_violation = float(np.max(slack))
    if max_violation > tol:
        raise NotPD(
            f"inverse sandwich violated by {max_violation:.3e} despite epsilon={epsilon:.3e}"
        )
    return CouplingReport(epsilon=epsilon, sandwich_checked=True, max_violation=max_violation)


def control_adaptation(
    g, partition: BlockPartition, kind: str, seed: int = 0, stream: tuple = ()
) -> np.ndarray:
    """Matched control vectors for the blockwise shaping comparison.

    raw_fo passes g through; scaled_fo applies the blockwise mean shrinkage
    a_b; iso_noise adds isotropic Gaussian noise on top of the shrunk mean
    with total variance chosen so the expected squared norm equals |g|^2
    (the same budget as shaping); cov_matched_noise adds block noise with
    the exact shaping covariance (g_b g_b' + |g_b|^2 I)/(q_b+d_b+1).
    """
    g = np.asarray(g, dtype=np.float64)
    parts = partition.split(g)
    if kind == "raw_fo":
        return g.copy()
    if kind == "scaled_fo":
        out = np.concatenate([partition.shrinks[b] * parts[b] for b in range(partition.count)])
        return out
    if kind == "iso_noise":
        if not np.any(g):
            raise ZeroGradient("noise controls need a nonzero gradient")
        mean = np.concatenate(
            [partition.shrinks[b] * parts[b] for b in range(partition.count)]
        )
        var_budget = float(g @ g) - float(mean @ mean)
        sigma = np.sqrt(max(var_budget, 0.0) / partition.dim)
        noise = sigma * rng.normals(seed, stream + ("iso",), (partition.dim,))
        return mean + noise
    if kind == "cov_matched_noise":
        if not np.any(g):
            raise ZeroGradient("noise controls need a nonzero gradient")
        out = np.empty(partition.dim)
        for b, g_b in enumerate(parts):
            d_b = partition.sizes[b]
            q_b = partition.queries[b]
            u = rng.normals(seed, stream + ("cov", b), (d_b,))
            g_norm = np.linalg.norm(g_b)
            if g_norm > 0.0:
                ghat = g_b / g_norm
                spike = (np.sqrt(2.0) - 1.0) * float(ghat @ u) * ghat
            else:
                spike = 0.0
            xi = g_norm / np.sqrt(q_b + d_b + 1) * (u + spike)
            out[partition.block_slice(b)] = partition.shrinks[b] * g_b + xi
        return out
    raise BadDimension(f"unknown control kind {kind!r}; expected one of {CONTROL_KINDS}")
