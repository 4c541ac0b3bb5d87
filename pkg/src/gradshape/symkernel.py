"""Dense symmetric-matrix kernel.

Self-contained primitives for the curvature identities: exact-symmetry
matrix wrapper, cyclic Jacobi eigendecomposition, PSD tests, inverse square
roots, plane rotations, and the trace/norm helpers built on them.  Dense
float64 only; intended for dimensions up to a couple of thousand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadDimension, IndexOutOfRange, NonFinite, NotPD

_JACOBI_MAX_SWEEPS = 64


@dataclass(frozen=True)
class SymMatrix:
    """Exactly symmetric square matrix of dimension >= 2.

    Construction rejects asymmetric input instead of silently averaging;
    use :func:`symmetrize` when a nearly-symmetric array (for instance a
    Monte Carlo mean) has to be coerced on purpose.
    """

    a: np.ndarray

    def __post_init__(self):
        arr = np.array(self.a, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise BadDimension(f"expected a square matrix, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise BadDimension("dimension must be at least 2")
        if not np.array_equal(arr, arr.T):
            raise BadDimension("matrix is not exactly symmetric")
        arr.setflags(write=False)
        object.__setattr__(self, "a", arr)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @staticmethod
    def from_diag(values) -> "SymMatrix":
        return SymMatrix(np.diag(np.asarray(values, dtype=np.float64)))


def symmetrize(a: np.ndarray) -> SymMatrix:
    """Average a with its transpose and wrap; an explicit, audited coercion."""
    a = np.asarray(a, dtype=np.float64)
    return SymMatrix(0.5 * (a + a.T))


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigenvalues ascending, eigenvectors as orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def eig_sym(m: SymMatrix) -> SpectralDecomp:
    """Cyclic Jacobi eigendecomposition with threshold sweeps.

    Rotations below the sweep threshold are skipped early on; once the
    off-diagonal mass is negligible relative to the Frobenius norm the
    sweep loop stops.  Accuracy is a few ulps of ||m|| per eigenvalue,
    well below every identity tolerance used downstream.
    """
    a = np.array(m.a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has NaN or Inf entries")
    d = a.shape[0]
    v = np.eye(d)
    total = np.linalg.norm(a)
    if total == 0.0:
        return SpectralDecomp(np.zeros(d), v)
    stop = 1e-15 * total
    scratch = np.empty_like(a)
    for sweep in range(_JACOBI_MAX_SWEEPS):
        # Off-diagonal mass measured entrywise; subtracting squared sums
        # would cancel catastrophically near convergence.
        np.copyto(scratch, a)
        np.fill_diagonal(scratch, 0.0)
        off = np.linalg.norm(scratch)
        if off <= stop:
            break
        # Skip tiny pivots during the first sweeps; rotate everything after.
        thresh = 0.2 * off / (d * d) if sweep < 3 else 0.0
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= thresh:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                diff = aqq - app
                if abs(apq) < 1e-300:
                    continue
                theta = 0.5 * diff / apq
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0.0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SpectralDecomp(w[order], v[:, order])


def trace(m: SymMatrix) -> float:
    return float(np.trace(m.a))


def fro_norm(m: SymMatrix) -> float:
    return float(np.linalg.norm(m.a))


def op_norm(m: SymMatrix) -> float:
    """Operator (spectral) norm, max |eigenvalue|."""
    w = eig_sym(m).eigenvalues
    return float(np.max(np.abs(w)))


def psd_check(m: SymMatrix, tol: float) -> bool:
    """True iff the minimum eigenvalue is >= -tol * max(1, |lambda|_max)."""
    w = eig_sym(m).eigenvalues
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    return bool(w[0] >= -tol * scale)


def inv_sqrt(m: SymMatrix) -> SymMatrix:
    """Inverse symmetric square root of a strictly PD matrix.

    Refuses near-singular input instead of regularizing; damping is the
    caller's responsibility.
    """
    dec = eig_sym(m)
    if dec.eigenvalues[0] <= 0.0:
        raise NotPD(f"min eigenvalue {dec.eigenvalues[0]:.3e} is not positive")
    v = dec.eigenvectors
    r = (v / np.sqrt(dec.eigenvalues)) @ v.T
    return symmetrize(r)


def sqrt_pd(m: SymMatrix) -> SymMatrix:
    """Symmetric square root of a strictly PD matrix."""
    dec = eig_sym(m)
    if dec.eigenvalues[0] <= 0.0:
        raise NotPD(f"min eigenvalue {dec.eigenvalues[0]:.3e} is not positive")
    v = dec.eigenvectors
    return symmetrize((v * np.sqrt(dec.eigenvalues)) @ v.T)


def plane_rotation(d: int, i: int, j: int, angle: float) -> np.ndarray:
    """Givens rotation acting in the (i, j) coordinate plane of R^d."""
    if not (0 <= i < j < d):
        raise IndexOutOfRange(f"need 0 <= i < j < d, got i={i} j={j} d={d}")
    r = np.eye(d)
    c = np.cos(angle)
    s = np.sin(angle)
    r[i, i] = c
    r[j, j] = c
    r[i, j] = -s
    r[j, i] = s
    return r
