"""Projection-based ROMs for finite-volume conservation laws.

Three ways of obtaining subdomain conservation Cᵀ r = 0 live here:

* ``PerturbedRom``: plain POD basis plus the pseudoinverse correction term
  f* = (CᵀΦ)⁺[Cᵀ - CᵀΦΦᵀ] f, cross-checked by ``cop_solve``;
* ``constrained_pod_basis``: a basis whose span contains span(C), so the
  plain Galerkin ODE is conservative with no correction;
* ``span_merge_basis``: the orthonormalized span of [Φ C], kept as the
  competitor the constrained POD basis is measured against.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from scrom.errors import DimensionError, InfeasibleConstraintError
from scrom.fom import FomSystem
from scrom.linalg import (
    DEFAULT_RANK_TOL,
    BasisKind,
    ReducedBasis,
    numerical_rank,
    pseudoinverse,
    qr_full,
    svd,
    weighted_pod,
)

logger = logging.getLogger(__name__)

DEFAULT_ENERGY = 0.9999
FEASIBILITY_TOL = 1e-10

FullRhs = Callable[[np.ndarray, float], np.ndarray]

__all__ = [
    "BasisKind",
    "ReducedBasis",
    "select_dimension",
    "pod_basis",
    "constrained_pod_basis",
    "span_merge_basis",
    "GalerkinRom",
    "galerkin_rhs",
    "PerturbedRom",
    "perturbation_term",
    "column_space",
    "incompatible_rows",
    "cop_solve",
    "subdomain_residual",
    "merged_system_residual",
    "InvariantSpec",
    "OffsetGalerkinRom",
    "apply_invariant_offsets",
]


def select_dimension(singular_values: np.ndarray, energy: float) -> int:
    """Smallest p with sum(σ[:p]²) / sum(σ²) >= energy."""
    if not 0.0 < energy <= 1.0:
        raise ValueError("energy threshold must lie in (0, 1]")
    squared = np.asarray(singular_values, dtype=float) ** 2
    total = squared.sum()
    if total == 0.0:
        return 0
    cumulative = np.cumsum(squared) / total
    # Guard against cumulative[-1] landing a rounding error below 1.
    return int(min(np.searchsorted(cumulative, energy - 1e-15) + 1, squared.size))


def pod_basis(
    X: np.ndarray,
    p: Optional[int] = None,
    energy: Optional[float] = None,
    weights: Optional[np.ndarray] = None,
    tol: float = DEFAULT_RANK_TOL,
) -> ReducedBasis:
    """Leading (weighted) left singular vectors of the snapshot matrix.

    Args:
        X: Snapshot matrix, one state per column.
        p: Number of modes.
        energy: Alternative to ``p``: the smallest size capturing this
            fraction of the snapshot energy.
        weights: Diagonal of W for a W-orthonormal basis; None for L2.
        tol: Relative rank tolerance; ``p`` is truncated to the rank.

    Returns:
        A ``ReducedBasis`` of kind POD.

    Raises:
        ValueError: Unless exactly one of ``p`` and ``energy`` is given.
    """
    if (p is None) == (energy is None):
        raise ValueError("give exactly one of p and energy")
    if p is None:
        scaled = X if weights is None else np.sqrt(weights)[:, None] * X
        p = select_dimension(svd(scaled).s, energy)
    return weighted_pod(X, weights, p, tol)


def _pod_modes(Y: np.ndarray, n_modes: Optional[int], energy: float, tol: float) -> np.ndarray:
    if Y.shape[0] == 0:
        if n_modes:
            _warn_truncation(n_modes, 0)
        return np.zeros((0, 0))
    if n_modes is None:
        n_modes = select_dimension(svd(Y).s, energy)
    return weighted_pod(Y, None, n_modes, tol).matrix


def _warn_truncation(requested: int, available: int) -> None:
    message = f"requested {requested} POD modes but only {available} are available; truncating"
    logger.warning(message)
    warnings.warn(message, RuntimeWarning, stacklevel=3)


def constrained_pod_basis(
    X: np.ndarray,
    C: np.ndarray,
    q: Optional[int] = None,
    energy: float = DEFAULT_ENERGY,
    weights: Optional[np.ndarray] = None,
    tol: float = DEFAULT_RANK_TOL,
) -> ReducedBasis:
    """Snapshot-optimal basis Ξ subject to C = WΞΞᵀC.

    The QR of W^{-1/2}C gives [Q₁ Q₂]; the basis is W^{-1/2}[Q₁ Q₂V] with V
    the leading POD modes of Q₂ᵀW^{1/2}X. This equals deflating the snapshots
    W-orthogonally against Q̃₁ = W^{-1/2}Q₁ and appending the W-orthogonal
    POD modes of the result, since the deflated scaled snapshots are
    Q₂Q₂ᵀW^{1/2}X. Working in Q₂ coordinates keeps the POD part orthogonal
    to Q̃₁ to rounding even for modes with tiny singular values. ``q`` is the
    total size; when it is None the POD part is sized by ``energy``.

    Returns:
        A ``ReducedBasis`` of kind CONSTRAINED_POD whose first
        ``n_constraint_modes`` = rank(C) columns span W⁻¹C.

    Raises:
        DimensionError: If C and X differ in row count, or ``q`` < rank(C).
    """
    X = np.asarray(X, dtype=float)
    C = np.asarray(C, dtype=float)
    if C.shape[0] != X.shape[0]:
        raise DimensionError(f"C has {C.shape[0]} rows but snapshots have {X.shape[0]}")

    if weights is None:
        w = None
        sqrt_w = np.ones(X.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (X.shape[0],) or np.any(w <= 0.0):
            raise ValueError("weights must be a positive vector matching the snapshot rows")
        sqrt_w = np.sqrt(w)

    qr = qr_full(C / sqrt_w[:, None], tol)
    h_c = qr.rank
    _check_total_size(q, h_c)
    n_pod = None if q is None else q - h_c
    V = _pod_modes(qr.q2.T @ (sqrt_w[:, None] * X), n_pod, energy, tol)
    scaled = np.hstack([qr.q1, qr.q2 @ V]) if V.size else qr.q1.copy()
    matrix = scaled if w is None else scaled / sqrt_w[:, None]
    return ReducedBasis(
        matrix=matrix, kind=BasisKind.CONSTRAINED_POD, weights=w, n_constraint_modes=h_c
    )


def _check_total_size(q: Optional[int], h_c: int) -> None:
    if q is not None and q < h_c:
        raise DimensionError(f"basis size q={q} is smaller than rank(C)={h_c}")


def span_merge_basis(
    basis: ReducedBasis, C: np.ndarray, tol: float = DEFAULT_RANK_TOL
) -> ReducedBasis:
    """Orthonormal basis of span([Φ C]) with rank([Φ C]) columns."""
    C = np.asarray(C, dtype=float)
    if C.shape[0] != basis.n_rows:
        raise DimensionError(f"C has {C.shape[0]} rows but the basis has {basis.n_rows}")
    qr = qr_full(np.hstack([basis.matrix, C]), tol)
    return ReducedBasis(matrix=qr.q1.copy(), kind=BasisKind.SPAN_MERGE)


@dataclass(frozen=True, eq=False)
class GalerkinRom:
    basis: ReducedBasis
    fom: FomSystem

    def __post_init__(self):
        if self.basis.n_rows != self.fom.dim:
            raise DimensionError(
                f"basis has {self.basis.n_rows} rows but the FOM has dimension {self.fom.dim}"
            )

    @property
    def reduced_dim(self) -> int:
        return self.basis.dim

    def rhs(self, a: np.ndarray, t: float) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape != (self.reduced_dim,):
            raise DimensionError(f"reduced state has shape {a.shape}, expected ({self.reduced_dim},)")
        return self.basis.project(self.fom.rhs(self.basis.lift(a), t))

    def lift(self, a: np.ndarray) -> np.ndarray:
        return self.basis.lift(a)

    def initial_state(self, u0: np.ndarray) -> np.ndarray:
        return self.basis.project(u0)


def galerkin_rhs(rom: GalerkinRom, a: np.ndarray, t: float) -> np.ndarray:
    """Φᵀ f(Φ a, t)."""
    return rom.rhs(a, t)


@dataclass(frozen=True, eq=False)
class PerturbedRom:
    """Galerkin ROM plus the subdomain-conservation correction term.

    ``phi`` must have orthonormal columns; ``full_rhs`` is the full-order f.
    Instances are immutable, so the cached factors always match phi and C.
    With ``enforce`` set, every ``rhs`` call first checks that Cᵀf lies in
    range(CᵀΦ) and raises ``InfeasibleConstraintError`` otherwise.

    Singular values of CᵀΦ are bounded by ‖C‖₂, so every rank decision on
    CᵀΦ also drops values below tol·‖C‖₂.
    """

    phi: np.ndarray
    C: np.ndarray
    full_rhs: FullRhs
    tol: float = DEFAULT_RANK_TOL
    feasibility_tol: float = FEASIBILITY_TOL
    enforce: bool = False

    def __post_init__(self):
        if self.C.shape[0] != self.phi.shape[0]:
            raise DimensionError(f"C has {self.C.shape[0]} rows but Φ has {self.phi.shape[0]}")
        if not self.is_feasible:
            logger.warning(
                "rank(CᵀΦ)=%d is below rank(C)=%d; the correction cannot enforce every constraint",
                self.constraint_rank_in_basis,
                self.constraint_rank,
            )

    @classmethod
    def from_fom(
        cls,
        basis: ReducedBasis,
        C: np.ndarray,
        fom: FomSystem,
        tol: float = DEFAULT_RANK_TOL,
        feasibility_tol: float = FEASIBILITY_TOL,
        enforce: bool = False,
    ) -> "PerturbedRom":
        """Build the perturbed ROM of a full-order system.

        Args:
            basis: L2-orthonormal reduced basis Φ.
            C: Subdomain aggregation matrix, one column per subdomain.
            fom: Full-order system whose ``rhs`` is projected.
            tol: Relative tolerance of the pseudoinverse of CᵀΦ.
            feasibility_tol: Tolerance of the rank and compatibility tests.
            enforce: Raise from ``rhs`` when the constraint cannot be met.

        Returns:
            The perturbed ROM.

        Raises:
            ValueError: If the basis is orthonormal in a weighted inner product.
        """
        if basis.weights is not None:
            raise ValueError("PerturbedRom expects an L2-orthonormal basis")
        return cls(
            phi=basis.matrix,
            C=np.asarray(C, dtype=float),
            full_rhs=fom.rhs,
            tol=tol,
            feasibility_tol=feasibility_tol,
            enforce=enforce,
        )

    @property
    def reduced_dim(self) -> int:
        return self.phi.shape[1]

    @cached_property
    def ct_phi(self) -> np.ndarray:
        return self.C.T @ self.phi

    @cached_property
    def _c_singular_values(self) -> np.ndarray:
        return svd(self.C).s if self.C.size else np.zeros(0)

    @property
    def _c_norm(self) -> float:
        return float(self._c_singular_values.max(initial=0.0))

    @cached_property
    def constraint_rank(self) -> int:
        return numerical_rank(self._c_singular_values, self.feasibility_tol)

    @cached_property
    def ct_phi_pinv(self) -> np.ndarray:
        if self.ct_phi.size == 0:
            return np.zeros((self.phi.shape[1], self.C.shape[1]))
        return pseudoinverse(self.ct_phi, self.tol, atol=self.tol * self._c_norm)

    @cached_property
    def bracket(self) -> np.ndarray:
        """Cᵀ - CᵀΦΦᵀ."""
        return self.C.T - self.ct_phi @ self.phi.T

    @cached_property
    def constraint_rank_in_basis(self) -> int:
        if self.ct_phi.size == 0:
            return 0
        return numerical_rank(svd(self.ct_phi).s, self.feasibility_tol, atol=self.feasibility_tol * self._c_norm)

    @cached_property
    def is_feasible(self) -> bool:
        """rank(CᵀΦ) = rank(C): the constraint is satisfiable for every f."""
        if self.C.size == 0:
            return True
        return self.constraint_rank_in_basis == self.constraint_rank

    @cached_property
    def _constraint_range(self) -> np.ndarray:
        return column_space(self.ct_phi, self.feasibility_tol, atol=self.feasibility_tol * self._c_norm)

    def require_compatible(self, f: np.ndarray) -> None:
        """Raise unless Cᵀ(Φb - f) = 0 has a solution b for this f."""
        rows = incompatible_rows(self.ct_phi, self.C.T @ f, self.feasibility_tol, self._constraint_range)
        if rows:
            raise InfeasibleConstraintError("subdomain constraint is infeasible for this basis", rows)

    def perturbation(self, f: np.ndarray) -> np.ndarray:
        return self.ct_phi_pinv @ (self.bracket @ f)

    def rhs(self, a: np.ndarray, t: float) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape != (self.reduced_dim,):
            raise DimensionError(f"reduced state has shape {a.shape}, expected ({self.reduced_dim},)")
        f = self.full_rhs(self.phi @ a, t)
        if self.enforce:
            self.require_compatible(f)
        return self.phi.T @ f + self.perturbation(f)

    def lift(self, a: np.ndarray) -> np.ndarray:
        return self.phi @ a

    def initial_state(self, u0: np.ndarray) -> np.ndarray:
        return self.phi.T @ u0


def perturbation_term(pr: PerturbedRom, a: np.ndarray, t: float) -> np.ndarray:
    """f*(Φa, t) = (CᵀΦ)⁺[Cᵀ - CᵀΦΦᵀ] f(Φa, t)."""
    return pr.perturbation(pr.full_rhs(pr.phi @ np.asarray(a, dtype=float), t))


def column_space(A: np.ndarray, tol: float = FEASIBILITY_TOL, atol: float = 0.0) -> np.ndarray:
    """Orthonormal basis of range(A), empty when A is numerically zero."""
    A = np.asarray(A, dtype=float)
    if A.size == 0 or not np.any(A):
        return np.zeros((A.shape[0], 0))
    factors = svd(A)
    return factors.u[:, : numerical_rank(factors.s, tol, atol)]


def incompatible_rows(
    A: np.ndarray,
    d: np.ndarray,
    tol: float = FEASIBILITY_TOL,
    range_basis: Optional[np.ndarray] = None,
    atol: float = 0.0,
) -> List[int]:
    """Rows of A b = d that no b can satisfy.

    The part of d outside range(A) is compared entrywise against
    tol·max(1, max|d|); an empty list means rank(A) = rank([A | d]).
    ``atol`` is the absolute singular value floor of the range of A.
    """
    d = np.asarray(d, dtype=float)
    U = column_space(A, tol, atol) if range_basis is None else range_basis
    outside = d - U @ (U.T @ d)
    scale = max(1.0, float(np.max(np.abs(d), initial=0.0)))
    return np.flatnonzero(np.abs(outside) > tol * scale).tolist()


def cop_solve(
    phi: np.ndarray, C: np.ndarray, f: np.ndarray, tol: float = FEASIBILITY_TOL
) -> np.ndarray:
    """min ‖Φb - f‖₂ subject to Cᵀ(Φb - f) = 0, by the null-space method.

    The constraint matrix A = CᵀΦ is factored as Aᵀ P = [Y Z] R; a particular
    solution lives in range(Y) and the remaining freedom is a least-squares
    problem over the null space Z.

    Args:
        phi: Orthonormal reduced basis Φ, shape (N, p).
        C: Aggregation matrix, shape (N, n_subdomains); may have no columns.
        f: Full-order right-hand side.
        tol: Tolerance of the rank and compatibility tests.

    Returns:
        The reduced vector b.

    Raises:
        InfeasibleConstraintError: If Cᵀf is not in range(CᵀΦ); ``rows`` names
            the violated subdomains.
    """
    phi = np.asarray(phi, dtype=float)
    f = np.asarray(f, dtype=float)
    C = np.asarray(C, dtype=float).reshape(phi.shape[0], -1)
    if C.shape[1] == 0:
        return la.lstsq(phi, f)[0]

    A = C.T @ phi
    d = C.T @ f
    atol = tol * float(svd(C).s.max())
    rows = incompatible_rows(A, d, tol, atol=atol)
    if rows:
        raise InfeasibleConstraintError("subdomain constraint is infeasible for this basis", rows)
    rank_a = numerical_rank(svd(A).s, tol, atol) if np.any(A) else 0
    if rank_a == 0:
        y_part = np.zeros(phi.shape[1])
    else:
        qr = qr_full(A.T, tol)
        Y = qr.q[:, :rank_a]
        y_coeff = la.lstsq(A @ Y, d)[0]
        y_part = Y @ y_coeff

    if rank_a == 0:
        Z = np.eye(phi.shape[1])
    else:
        Z = qr.q[:, rank_a:]
    if Z.shape[1] == 0:
        return y_part
    z = la.lstsq(phi @ Z, f - phi @ y_part)[0]
    return y_part + Z @ z


def subdomain_residual(
    C: np.ndarray, fom: FomSystem, u: np.ndarray, dudt: np.ndarray, t: float
) -> np.ndarray:
    """Cᵀ(du/dt - f(u, t))."""
    u = np.asarray(u, dtype=float)
    dudt = np.asarray(dudt, dtype=float)
    if dudt.shape != u.shape or C.shape[0] != u.shape[0]:
        raise DimensionError("state, derivative and C must share the full dimension")
    return C.T @ (dudt - fom.rhs(u, t))


def merged_system_residual(
    rom: GalerkinRom, phi: np.ndarray, C: np.ndarray, a: np.ndarray, t: float
) -> float:
    """‖[Φ C]ᵀ(Φ̃ dã/dt - f(Φ̃ã, t))‖₂ for a Galerkin ROM with basis Φ̃."""
    u = rom.lift(a)
    dudt = rom.lift(rom.rhs(a, t))
    merged = np.hstack([phi, C])
    return float(np.linalg.norm(merged.T @ (dudt - rom.fom.rhs(u, t))))


@dataclass(frozen=True)
class InvariantSpec:
    """Flags marking constraint columns whose subdomain quantity is time invariant."""

    flags: Tuple[bool, ...]
    pinned_values: Optional[Tuple[float, ...]] = field(default=None)

    @classmethod
    def from_indices(cls, indices: Sequence[int], n_constraints: int) -> "InvariantSpec":
        bad = [k for k in indices if k < 0 or k >= n_constraints]
        if bad:
            raise DimensionError(f"invariant flags out of range [0, {n_constraints}): {bad}")
        chosen = set(indices)
        return cls(flags=tuple(k in chosen for k in range(n_constraints)))

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(k for k, flag in enumerate(self.flags) if flag)


@dataclass(frozen=True, eq=False)
class OffsetGalerkinRom:
    """Galerkin ROM with frozen invariant coefficients.

    ``basis`` is the rotated full basis; its first ``n_frozen`` columns span
    the flagged constraints and carry ``frozen`` as a constant offset, so
    u_r(t) = Φ_active a(t) + u⁰.
    """

    basis: np.ndarray
    n_frozen: int
    frozen: np.ndarray
    fom: FomSystem
    spec: InvariantSpec

    @cached_property
    def active(self) -> np.ndarray:
        return self.basis[:, self.n_frozen :]

    @cached_property
    def offset(self) -> np.ndarray:
        return self.basis[:, : self.n_frozen] @ self.frozen

    @property
    def reduced_dim(self) -> int:
        return self.basis.shape[1] - self.n_frozen

    def rhs(self, a: np.ndarray, t: float) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape != (self.reduced_dim,):
            raise DimensionError(f"reduced state has shape {a.shape}, expected ({self.reduced_dim},)")
        return self.active.T @ self.fom.rhs(self.lift(a), t)

    def lift(self, a: np.ndarray) -> np.ndarray:
        return self.active @ a + self.offset

    def initial_state(self, u0: np.ndarray) -> np.ndarray:
        return self.active.T @ (np.asarray(u0, dtype=float) - self.offset)


def apply_invariant_offsets(
    basis: ReducedBasis,
    C: np.ndarray,
    spec: InvariantSpec,
    a0: np.ndarray,
    fom: FomSystem,
    tol: float = DEFAULT_RANK_TOL,
) -> OffsetGalerkinRom:
    """Freeze the reduced coefficients of the flagged invariant constraints.

    The basis is rotated so its leading columns span the flagged columns of C;
    those coefficients are pinned to their values in ``a0`` and dropped from
    the integrated ODE.
    """
    if basis.kind not in (BasisKind.CONSTRAINED_POD, BasisKind.SPAN_MERGE):
        raise ValueError(f"invariant offsets need a basis containing span(C), got {basis.kind.value}")
    if basis.weights is not None:
        raise ValueError("invariant offsets are defined for L2-orthonormal bases")
    C = np.asarray(C, dtype=float)
    if len(spec.flags) != C.shape[1]:
        raise DimensionError(f"{len(spec.flags)} invariant flags for {C.shape[1]} constraints")
    a0 = np.asarray(a0, dtype=float)
    if a0.shape != (basis.dim,):
        raise DimensionError(f"initial reduced state has shape {a0.shape}, expected ({basis.dim},)")

    if not spec.indices:
        return OffsetGalerkinRom(
            basis=basis.matrix, n_frozen=0, frozen=np.zeros(0), fom=fom, spec=replace(spec, pinned_values=())
        )

    flagged = C[:, list(spec.indices)]
    if basis.constraint_inclusion_residual(flagged) > 1e-10 * max(1.0, float(np.max(np.abs(flagged)))):
        raise ValueError("flagged constraints are not contained in the basis span")
    flagged_qr = qr_full(flagged, tol)
    coords = basis.matrix.T @ flagged_qr.q1
    rotation = qr_full(coords, tol).q
    rotated = basis.matrix @ rotation
    n_frozen = flagged_qr.rank
    frozen = (rotation.T @ a0)[:n_frozen]
    logger.info("freezing %d invariant coefficient(s) at %s", n_frozen, np.array2string(frozen))
    return OffsetGalerkinRom(
        basis=rotated,
        n_frozen=n_frozen,
        frozen=frozen,
        fom=fom,
        spec=replace(spec, pinned_values=tuple(float(x) for x in frozen)),
    )
