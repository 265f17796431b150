"""Velocity-only ROMs for the staggered incompressible Navier-Stokes model.

The velocity basis φ is Ω-orthonormal and contains Ω⁻¹C, C being the
momentum aggregation matrix. A QR factorization of (Mφ)ᵀ splits φ into a
discretely divergence-free part φ₀ and its complement φ⊥. Keeping only the
φ₀ coefficients a₂ enforces the mass equation exactly and removes the
pressure, because φ₀ᵀG = -(Mφ₀)ᵀ = 0. The reduced kinetic energy is ½‖a₂‖².
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from scrom.errors import DimensionError
from scrom.linalg import DEFAULT_RANK_TOL, ReducedBasis, qr_full
from scrom.mesh import StaggeredGrid2D, SubdomainDecomposition, build_aggregation_matrix
from scrom.ns_fom import BodyForce, NsOperators, convection_diffusion, diffusion
from scrom.rom import DEFAULT_ENERGY, FEASIBILITY_TOL, PerturbedRom, constrained_pod_basis, pod_basis

logger = logging.getLogger(__name__)

# Absolute threshold on |R_ii| of (Mφ)ᵀ below which a direction counts as divergence-free.
SPLIT_ATOL = 1e-12
CONSTRAINT_DIVERGENCE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class WeightedBasis:
    """φ = [Q̃₁ W], orthonormal in the Ω inner product."""

    basis: ReducedBasis

    def __post_init__(self):
        if self.basis.weights is None:
            raise ValueError("WeightedBasis needs the Ω weights on its ReducedBasis")

    @property
    def phi(self) -> np.ndarray:
        return self.basis.matrix

    @property
    def omega(self) -> np.ndarray:
        return self.basis.weights

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def q1_tilde(self) -> np.ndarray:
        return self.phi[:, : self.basis.n_constraint_modes]

    @property
    def pod_part(self) -> np.ndarray:
        return self.phi[:, self.basis.n_constraint_modes :]


def weighted_constrained_basis(
    X: np.ndarray,
    C: np.ndarray,
    omega: np.ndarray,
    n_modes: Optional[int] = None,
    energy: float = DEFAULT_ENERGY,
    tol: float = DEFAULT_RANK_TOL,
) -> WeightedBasis:
    """Ω-weighted constrained POD of velocity snapshots; ``n_modes`` is R_V."""
    return WeightedBasis(constrained_pod_basis(X, C, q=n_modes, energy=energy, weights=omega, tol=tol))


def weighted_pod_velocity_basis(
    X: np.ndarray, omega: np.ndarray, n_modes: int, tol: float = DEFAULT_RANK_TOL
) -> WeightedBasis:
    """Ω-orthonormal POD of velocity snapshots."""
    return WeightedBasis(pod_basis(X, p=n_modes, weights=omega, tol=tol))


def momentum_aggregation_matrix(
    grid: StaggeredGrid2D, subdomains: Sequence[Mapping[str, Sequence[int]]]
) -> np.ndarray:
    """One column per nonempty ``u`` or ``v`` index list, in subdomain order."""
    columns = []
    for k, subdomain in enumerate(subdomains):
        unknown = set(subdomain) - {"u", "v"}
        if unknown:
            raise ValueError(f"subdomain {k} has unknown velocity components {sorted(unknown)}")
        for name in ("u", "v"):
            indices = list(subdomain.get(name, ()))
            if indices:
                decomp = SubdomainDecomposition.from_lists([indices])
                columns.append(build_aggregation_matrix(grid.component(name), decomp))
    if not columns:
        return np.zeros((grid.n_v, 0))
    return np.hstack(columns)


def constraint_divergence(ops: NsOperators, C: np.ndarray) -> np.ndarray:
    """max |M Ω⁻¹ c| for every constraint column c."""
    if C.shape[1] == 0:
        return np.zeros(0)
    return np.max(np.abs(ops.M @ (C / ops.omega[:, None])), axis=0)


@dataclass(frozen=True, eq=False)
class DivergenceFreeSplit:
    """(Mφ)ᵀ P = [Q₁ᴹ Q₂ᴹ] [R₁ᴹ; 0]; φ₀ = φQ₂ᴹ and φ⊥ = φQ₁ᴹ."""

    phi: np.ndarray
    q1m: np.ndarray
    q2m: np.ndarray
    r1m: np.ndarray

    @property
    def r1(self) -> int:
        return self.q1m.shape[1]

    @property
    def r2(self) -> int:
        return self.q2m.shape[1]

    @cached_property
    def phi0(self) -> np.ndarray:
        return self.phi @ self.q2m

    @cached_property
    def phi_perp(self) -> np.ndarray:
        return self.phi @ self.q1m

    def lift(self, a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
        return self.phi_perp @ np.asarray(a1, dtype=float) + self.phi0 @ np.asarray(a2, dtype=float)


def divergence_free_split(
    basis: WeightedBasis, M, atol: float = SPLIT_ATOL
) -> DivergenceFreeSplit:
    """Split a velocity basis into divergent and divergence-free modes.

    Args:
        basis: Ω-orthonormal velocity basis φ.
        M: Discrete divergence, shape (n_p, n_v).
        atol: Absolute rank tolerance of the QR of (Mφ)ᵀ; divergences below
            it count as zero.

    Returns:
        The split with φ₀ = φQ₂ᴹ spanning {φa : Mφa = 0}.

    Raises:
        DimensionError: If M does not act on the basis rows.
    """
    phi = basis.phi
    if M.shape[1] != phi.shape[0]:
        raise DimensionError(f"M has {M.shape[1]} columns but φ has {phi.shape[0]} rows")
    R_V = phi.shape[1]
    if R_V == 0:
        empty = np.zeros((0, 0))
        return DivergenceFreeSplit(phi=phi, q1m=empty, q2m=empty, r1m=np.zeros((0, M.shape[0])))

    divergence = np.asarray(M @ phi)
    if not np.any(divergence):
        r1 = 0
    else:
        qr = qr_full(divergence.T, tol=0.0, atol=atol)
        r1 = qr.rank
    if r1 == 0:
        logger.debug("basis is divergence-free; φ₀ = φ")
        return DivergenceFreeSplit(
            phi=phi, q1m=np.zeros((R_V, 0)), q2m=np.eye(R_V), r1m=np.zeros((0, M.shape[0]))
        )
    logger.info("divergence-free split: r1=%d, r2=%d", r1, R_V - r1)
    return DivergenceFreeSplit(phi=phi, q1m=qr.q1, q2m=qr.q2, r1m=qr.unpivoted_r1())


@dataclass(frozen=True, eq=False)
class VelocityRom:
    """da₂/dt = φ₀ᵀ F(φ₀ a₂, t); the state is a₂ with a₁ ≡ 0."""

    split: DivergenceFreeSplit
    ops: NsOperators
    nu: float
    force: Optional[BodyForce] = None

    def __post_init__(self):
        if self.split.phi.shape[0] != self.ops.grid.n_v:
            raise DimensionError(
                f"basis has {self.split.phi.shape[0]} rows, grid has {self.ops.grid.n_v} velocity unknowns"
            )

    @property
    def reduced_dim(self) -> int:
        return self.split.r2

    @property
    def phi0(self) -> np.ndarray:
        return self.split.phi0

    def full_rhs(self, V: np.ndarray, t: float) -> np.ndarray:
        return convection_diffusion(self.ops, V, t, self.nu, self.force)

    def rhs(self, a2: np.ndarray, t: float) -> np.ndarray:
        a2 = self._check(a2)
        return self.phi0.T @ self.full_rhs(self.phi0 @ a2, t)

    def lift(self, a2: np.ndarray) -> np.ndarray:
        return self.phi0 @ np.asarray(a2, dtype=float)

    def initial_state(self, V0: np.ndarray) -> np.ndarray:
        return self.phi0.T @ (self.ops.omega * np.asarray(V0, dtype=float))

    def _check(self, a2: np.ndarray) -> np.ndarray:
        a2 = np.asarray(a2, dtype=float)
        if a2.shape != (self.reduced_dim,):
            raise DimensionError(f"reduced state has shape {a2.shape}, expected ({self.reduced_dim},)")
        return a2

    def audit(self, C: Optional[np.ndarray] = None) -> Dict[str, float]:
        phi0 = self.phi0
        report = {
            "r1": float(self.split.r1),
            "r2": float(self.split.r2),
            "divergence_max": float(np.max(np.abs(self.ops.M @ phi0), initial=0.0)),
            "pressure_coupling_max": float(np.max(np.abs(phi0.T @ self.ops.G), initial=0.0)),
            "orthonormality": float(
                np.max(np.abs(phi0.T @ (self.ops.omega[:, None] * phi0) - np.eye(phi0.shape[1])), initial=0.0)
            ),
        }
        if C is not None and C.shape[1]:
            divergence = constraint_divergence(self.ops, C)
            report["constraint_divergence_max"] = float(divergence.max())
            bad = np.flatnonzero(divergence > CONSTRAINT_DIVERGENCE_TOL)
            if bad.size:
                logger.warning(
                    "constraint columns %s are not divergence-free; their momentum balance includes "
                    "a pressure contribution the velocity ROM does not carry",
                    bad.tolist(),
                )
        return report


def velocity_rom_rhs(rom: VelocityRom, a2: np.ndarray, t: float) -> np.ndarray:
    return rom.rhs(a2, t)


def kinetic_energy(a2: np.ndarray) -> float:
    a2 = np.asarray(a2, dtype=float)
    return 0.5 * float(a2 @ a2)


def viscous_energy_rate(rom: VelocityRom, a2: np.ndarray) -> float:
    """a₂ᵀφ₀ᵀD(φ₀a₂) with convection and forcing switched off; never positive."""
    a2 = rom._check(a2)
    return float(a2 @ (rom.phi0.T @ diffusion(rom.ops.grid, rom.phi0 @ a2, rom.nu)))


def mass_residual(rom: VelocityRom, a2: np.ndarray) -> float:
    return float(np.max(np.abs(rom.ops.M @ rom.lift(a2)), initial=0.0))


def momentum_residual(rom, C: np.ndarray, a2: np.ndarray, t: float) -> np.ndarray:
    """Cᵀ(Ωφ₀ da₂/dt - F(φ₀a₂, t)) for any velocity ROM exposing phi0 and rhs."""
    V = rom.phi0 @ a2
    dVdt = rom.phi0 @ rom.rhs(a2, t)
    return C.T @ (rom.ops.omega * dVdt - convection_diffusion(rom.ops, V, t, rom.nu, rom.force))


@dataclass(frozen=True, eq=False)
class CarlbergVelocityRom:
    """Velocity ROM plus the pseudoinverse momentum correction.

    The split comes first; the correction is then applied in the L2 frame
    Φ = Ω^{1/2}φ₀ with f̂ = Ω^{-1/2}F and constraint Ω^{1/2}C, which makes
    Cᵀ(Ωφ₀ da₂/dt - F) = 0 the constraint being enforced. Every right-hand
    side evaluation checks that constraint for compatibility first.
    """

    base: VelocityRom
    C: np.ndarray
    tol: float = DEFAULT_RANK_TOL
    feasibility_tol: float = FEASIBILITY_TOL

    @cached_property
    def _sqrt_omega(self) -> np.ndarray:
        return np.sqrt(self.base.ops.omega)

    @cached_property
    def perturbed(self) -> PerturbedRom:
        s = self._sqrt_omega
        return PerturbedRom(
            phi=s[:, None] * self.base.phi0,
            C=s[:, None] * np.asarray(self.C, dtype=float),
            full_rhs=lambda y, t: self.base.full_rhs(y / s, t) / s,
            tol=self.tol,
            feasibility_tol=self.feasibility_tol,
            enforce=True,
        )

    @property
    def ops(self) -> NsOperators:
        return self.base.ops

    @property
    def nu(self) -> float:
        return self.base.nu

    @property
    def force(self) -> Optional[BodyForce]:
        return self.base.force

    @property
    def phi0(self) -> np.ndarray:
        return self.base.phi0

    @property
    def reduced_dim(self) -> int:
        return self.base.reduced_dim

    def rhs(self, a2: np.ndarray, t: float) -> np.ndarray:
        return self.perturbed.rhs(self.base._check(a2), t)

    def perturbation(self, a2: np.ndarray, t: float) -> np.ndarray:
        pr = self.perturbed
        return pr.perturbation(pr.full_rhs(pr.phi @ self.base._check(a2), t))

    def lift(self, a2: np.ndarray) -> np.ndarray:
        return self.base.lift(a2)

    def initial_state(self, V0: np.ndarray) -> np.ndarray:
        return self.base.initial_state(V0)


def carlberg_ns_rhs(rom: CarlbergVelocityRom, a2: np.ndarray, t: float) -> np.ndarray:
    """Perturbed velocity ROM right-hand side.

    Args:
        rom: The perturbed velocity ROM.
        a2: Divergence-free coefficients.
        t: Time.

    Returns:
        φ₀ᵀF(φ₀a₂, t) plus the momentum correction, in the a₂ coordinates.

    Raises:
        InfeasibleConstraintError: If CᵀF(φ₀a₂, t) is outside range(CᵀΩφ₀);
            ``rows`` names the momentum subdomains that cannot be conserved.
    """
    return rom.rhs(a2, t)
