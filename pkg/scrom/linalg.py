"""Dense linear-algebra kernel shared by every basis construction.

Pivoted Householder QR and the SVD come from LAPACK through scipy.linalg;
this module fixes the conventions on top of them (non-negative diag(R),
a deterministic singular-vector sign, relative rank tolerances) so that
bases are reproducible run to run.
"""

import logging
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg as la

from scrom.errors import ConvergenceError, DimensionError, require_finite

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class QrFactorization:
    """Full QR with column pivoting: ``q @ r == a[:, perm]``.

    ``q`` is m x m orthogonal, ``r`` is m x n upper triangular with a
    non-negative, non-increasing diagonal. The leading ``rank`` columns of
    ``q`` span range(a).
    """

    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray
    rank: int

    @property
    def q1(self) -> np.ndarray:
        return self.q[:, : self.rank]

    @property
    def q2(self) -> np.ndarray:
        return self.q[:, self.rank :]

    @property
    def r1(self) -> np.ndarray:
        return self.r[: self.rank, :]

    def unpivoted_r1(self) -> np.ndarray:
        """R1 with the pivot folded back, so ``q1 @ unpivoted_r1() ~= a``."""
        inverse = np.empty_like(self.perm)
        inverse[self.perm] = np.arange(self.perm.size)
        return self.r1[:, inverse]


@dataclass(frozen=True, eq=False)
class SvdFactorization:
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def v(self) -> np.ndarray:
        return self.vt.T

    def rank(self, tol: float = DEFAULT_RANK_TOL) -> int:
        return numerical_rank(self.s, tol)


class BasisKind(str, Enum):
    POD = "pod"
    CONSTRAINED_POD = "constrained_pod"
    SPAN_MERGE = "span_merge"


@dataclass(frozen=True, eq=False)
class ReducedBasis:
    """Column basis Φ with ΦᵀWΦ = I.

    ``weights`` is the diagonal of W (None means identity). The first
    ``n_constraint_modes`` columns span the constraint matrix for constrained
    kinds.
    """

    matrix: np.ndarray
    kind: BasisKind = BasisKind.POD
    weights: Optional[np.ndarray] = None
    singular_values: Optional[np.ndarray] = None
    n_constraint_modes: int = 0

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def weighted(self, x: np.ndarray) -> np.ndarray:
        if self.weights is None:
            return x
        if x.ndim == 1:
            return self.weights * x
        return self.weights[:, None] * x

    def project(self, u: np.ndarray) -> np.ndarray:
        return self.matrix.T @ self.weighted(np.asarray(u, dtype=float))

    def lift(self, a: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(a, dtype=float)

    def gram(self) -> np.ndarray:
        return self.matrix.T @ self.weighted(self.matrix)

    def orthonormality_residual(self) -> float:
        if self.dim == 0:
            return 0.0
        return float(np.max(np.abs(self.gram() - np.eye(self.dim))))

    def constraint_inclusion_residual(self, C: np.ndarray) -> float:
        """max |C - W Φ Φᵀ C|; zero when span(W⁻¹C) lies in span(Φ)."""
        if C.size == 0:
            return 0.0
        return float(np.max(np.abs(C - self.weighted(self.matrix @ (self.matrix.T @ C)))))


def _check_matrix(name: str, A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise DimensionError(f"{name} must be a nonempty 2-D array, got shape {A.shape}")
    require_finite(name, A)
    return A


def numerical_rank(s: np.ndarray, tol: float = DEFAULT_RANK_TOL, atol: float = 0.0) -> int:
    """Count of values above ``max(atol, tol * max(s))``; zero for an all-zero input."""
    s = np.abs(np.asarray(s, dtype=float))
    if s.size == 0:
        return 0
    top = s.max()
    if top == 0.0:
        return 0
    return int(np.count_nonzero(s > max(atol, tol * top)))


def qr_full(A: np.ndarray, tol: float = DEFAULT_RANK_TOL, atol: float = 0.0) -> QrFactorization:
    A = _check_matrix("A", A)
    q, r, perm = la.qr(A, mode="full", pivoting=True)
    k = min(A.shape)
    signs = np.sign(np.diag(r)[:k])
    signs[signs == 0.0] = 1.0
    q[:, :k] *= signs
    r[:k, :] *= signs[:, None]
    r = np.triu(r)
    rank = numerical_rank(np.diag(r), tol, atol)
    return QrFactorization(q=q, r=r, perm=perm, rank=rank)


def svd(A: np.ndarray) -> SvdFactorization:
    """Thin SVD; in each left singular vector the largest-magnitude entry
    (first on ties) is made non-negative."""
    A = _check_matrix("A", A)
    try:
        u, s, vt = la.svd(A, full_matrices=False, lapack_driver="gesvd")
    except la.LinAlgError as exc:
        raise ConvergenceError(f"SVD did not converge: {exc}", float("nan"), 0) from exc
    if u.shape[1]:
        pivots = np.argmax(np.abs(u), axis=0)
        signs = np.sign(u[pivots, np.arange(u.shape[1])])
        signs[signs == 0.0] = 1.0
        u = u * signs
        vt = vt * signs[:, None]
    return SvdFactorization(u=u, s=s, vt=vt)


def pseudoinverse(A: np.ndarray, tol: float = DEFAULT_RANK_TOL, atol: float = 0.0) -> np.ndarray:
    """A⁺ keeping singular values above ``max(atol, tol * max(s))``."""
    A = _check_matrix("A", A)
    factors = svd(A)
    s = factors.s
    keep = s > (max(atol, tol * s.max()) if s.size else 0.0)
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (factors.v * s_inv) @ factors.u.T


def _truncate_to_rank(r: int, rank: int, what: str) -> int:
    if r > rank:
        message = f"requested {r} {what} but the snapshots have numerical rank {rank}; truncating"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=3)
        return rank
    return r


def weighted_pod(
    X: np.ndarray,
    weights: Optional[np.ndarray],
    r: int,
    tol: float = DEFAULT_RANK_TOL,
) -> ReducedBasis:
    """POD basis orthonormal in the W-inner product.

    Computes the SVD of W^{1/2} X and maps the left singular vectors back
    with W^{-1/2}. With ``weights=None`` (or all ones) no scaling is applied.
    """
    X = _check_matrix("X", X)
    if r < 0:
        raise DimensionError("number of POD modes must be non-negative")

    unit = weights is None or np.all(np.asarray(weights) == 1.0)
    if unit:
        w = None
        scaled = X
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (X.shape[0],):
            raise DimensionError(f"weights have shape {w.shape}, expected ({X.shape[0]},)")
        if np.any(w <= 0.0):
            raise ValueError("POD weights must be strictly positive")
        sqrt_w = np.sqrt(w)
        scaled = sqrt_w[:, None] * X

    factors = svd(scaled)
    r = _truncate_to_rank(r, factors.rank(tol), "POD modes")
    modes = factors.u[:, :r]
    if not unit:
        modes = modes / sqrt_w[:, None]
    return ReducedBasis(matrix=modes, kind=BasisKind.POD, weights=w, singular_values=factors.s)
