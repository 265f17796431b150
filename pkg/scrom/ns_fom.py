"""Energy-conserving staggered finite-volume discretization of the periodic
incompressible Navier-Stokes equations:

    M V = 0,    Ω dV/dt = F(V, t) - G p,

with M = -Gᵀ built from one stencil table. Convection is central and in
divergence form with face-interpolated mass fluxes, so Vᵀ F_conv(V) = 0
whenever M V = 0.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from scrom.errors import ConvergenceError, DimensionError, IncompatibleRhsError, require_finite
from scrom.mesh import StaggeredGrid2D
from scrom.timeint import IntegratorConfig

logger = logging.getLogger(__name__)

BodyForce = Callable[[np.ndarray, np.ndarray, float], Tuple[np.ndarray, np.ndarray]]

# Grids with fewer pressure unknowns use a cached dense factorization.
DENSE_POISSON_LIMIT = 64 * 64
DIVERGENCE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class NsOperators:
    grid: StaggeredGrid2D
    M: sparse.csr_matrix
    G: sparse.csr_matrix
    omega: np.ndarray

    @cached_property
    def laplacian(self) -> sparse.csr_matrix:
        """Pressure operator M Ω⁻¹ G (symmetric negative semidefinite)."""
        return (self.M @ sparse.diags(1.0 / self.omega) @ self.G).tocsr()

    @cached_property
    def _bordered_lu(self):
        n = self.grid.n_p
        bordered = np.zeros((n + 1, n + 1))
        bordered[:n, :n] = self.laplacian.toarray()
        bordered[:n, n] = 1.0
        bordered[n, :n] = 1.0
        return la.lu_factor(bordered)


@dataclass(frozen=True, eq=False)
class NsState:
    velocity: np.ndarray
    pressure: np.ndarray
    t: float = 0.0


def build_operators(grid: StaggeredGrid2D) -> NsOperators:
    nx, ny, dx, dy = grid.nx, grid.ny, grid.dx, grid.dy
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    cell = (i * ny + j).ravel()
    east = (((i + 1) % nx) * ny + j).ravel()
    north = (i * ny + (j + 1) % ny).ravel()
    n_p = grid.n_p

    # Net outflux of every pressure cell: dy (u_{i+1} - u_i) + dx (v_{j+1} - v_j).
    stencil = [
        (east, dy),
        (cell, -dy),
        (n_p + north, dx),
        (n_p + cell, -dx),
    ]
    rows = np.concatenate([cell for _ in stencil])
    cols = np.concatenate([c for c, _ in stencil])
    vals = np.concatenate([np.full(cell.size, w) for _, w in stencil])
    M = sparse.csr_matrix((vals, (rows, cols)), shape=(n_p, grid.n_v))
    G = (-M.T).tocsr()
    omega = np.full(grid.n_v, dx * dy)
    return NsOperators(grid=grid, M=M, G=G, omega=omega)


def _check_velocity(grid: StaggeredGrid2D, V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.shape != (grid.n_v,):
        raise DimensionError(f"velocity has shape {V.shape}, expected ({grid.n_v},)")
    return V


def _east(a):
    return np.roll(a, -1, axis=0)


def _west(a):
    return np.roll(a, 1, axis=0)


def _north(a):
    return np.roll(a, -1, axis=1)


def _south(a):
    return np.roll(a, 1, axis=1)


def convection(grid: StaggeredGrid2D, V: np.ndarray) -> np.ndarray:
    """Minus the net convective momentum outflux of every velocity volume."""
    u, v = grid.split(_check_velocity(grid, V))
    dx, dy = grid.dx, grid.dy

    flux_e = 0.5 * (u + _east(u)) * dy
    flux_w = _west(flux_e)
    flux_n = 0.5 * (_west(_north(v)) + _north(v)) * dx
    flux_s = 0.5 * (_west(v) + v) * dx
    u_e = 0.5 * (u + _east(u))
    u_n = 0.5 * (u + _north(u))
    conv_u = -(flux_e * u_e - flux_w * _west(u_e) + flux_n * u_n - flux_s * _south(u_n))

    gflux_n = 0.5 * (v + _north(v)) * dx
    gflux_s = _south(gflux_n)
    gflux_e = 0.5 * (_east(_south(u)) + _east(u)) * dy
    gflux_w = 0.5 * (_south(u) + u) * dy
    v_n = 0.5 * (v + _north(v))
    v_e = 0.5 * (v + _east(v))
    conv_v = -(gflux_n * v_n - gflux_s * _south(v_n) + gflux_e * v_e - gflux_w * _west(v_e))

    return grid.join(conv_u, conv_v)


def diffusion(grid: StaggeredGrid2D, V: np.ndarray, nu: float) -> np.ndarray:
    """ν times the 5-point Laplacian integrated over every velocity volume."""
    u, v = grid.split(_check_velocity(grid, V))
    dx, dy = grid.dx, grid.dy

    def lap(a):
        return (
            (_east(a) - 2.0 * a + _west(a)) * (dy / dx)
            + (_north(a) - 2.0 * a + _south(a)) * (dx / dy)
        )

    return nu * grid.join(lap(u), lap(v))


def body_force(grid: StaggeredGrid2D, force: Optional[BodyForce], t: float) -> np.ndarray:
    if force is None:
        return np.zeros(grid.n_v)
    xu, yu = grid.u_points()
    xv, yv = grid.v_points()
    fx, _ = force(xu, yu, t)
    _, fy = force(xv, yv, t)
    area = grid.dx * grid.dy
    return area * grid.join(np.broadcast_to(fx, xu.shape), np.broadcast_to(fy, xv.shape))


def convection_diffusion(
    ops: NsOperators,
    V: np.ndarray,
    t: float,
    nu: float,
    force: Optional[BodyForce] = None,
) -> np.ndarray:
    """F^CD(V, t): the full momentum right-hand side without the pressure term,
    already integrated over the velocity volumes (Ω dV/dt = F^CD - G p)."""
    grid = ops.grid
    F = convection(grid, V) + diffusion(grid, V, nu)
    if force is not None:
        F = F + body_force(grid, force, t)
    return F


def pressure_poisson_solve(
    ops: NsOperators, rhs_vec: np.ndarray, tol: float = 1e-11
) -> np.ndarray:
    """Solve (M Ω⁻¹ G) p = rhs with mean(p) = 0."""
    b = np.asarray(rhs_vec, dtype=float)
    n = ops.grid.n_p
    if b.shape != (n,):
        raise DimensionError(f"Poisson right-hand side has shape {b.shape}, expected ({n},)")
    require_finite("Poisson right-hand side", b)
    mean = float(b.mean())
    if abs(mean) > 1e-10 * max(1.0, float(np.max(np.abs(b)))):
        raise IncompatibleRhsError(
            f"Poisson right-hand side has mean {mean:.3e}; a periodic problem needs zero mean"
        )
    b = b - mean
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros(n)

    if n < DENSE_POISSON_LIMIT:
        solution = la.lu_solve(ops._bordered_lu, np.append(b, 0.0))
        p = solution[:n]
    else:
        p, info = spla.cg(-ops.laplacian, -b, rtol=0.1 * tol, maxiter=20 * n)
        if info != 0:
            residual = float(np.linalg.norm(ops.laplacian @ p - b))
            raise ConvergenceError("pressure Poisson CG did not converge", residual, info)
        p = p - p.mean()

    residual = float(np.linalg.norm(ops.laplacian @ p - b))
    if residual > tol * norm_b:
        raise ConvergenceError("pressure Poisson solve missed its tolerance", residual, 1)
    return p


def project(ops: NsOperators, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Discrete Leray projection: returns (V - Ω⁻¹ G φ, φ) with M V_out = 0."""
    V = _check_velocity(ops.grid, V)
    phi = pressure_poisson_solve(ops, ops.M @ V)
    return V - (ops.G @ phi) / ops.omega, phi


def instantaneous_pressure(
    ops: NsOperators, V: np.ndarray, t: float, nu: float, force: Optional[BodyForce] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Pressure and Ω dV/dt consistent with M dV/dt = 0 at a given state."""
    F = convection_diffusion(ops, V, t, nu, force)
    p = pressure_poisson_solve(ops, ops.M @ (F / ops.omega))
    return p, F - ops.G @ p


def fom_step(
    ops: NsOperators,
    state: NsState,
    dt: float,
    nu: float,
    force: Optional[BodyForce],
    cfg: IntegratorConfig,
) -> NsState:
    """One implicit-midpoint step with the pressure as Lagrange multiplier.

    Every iteration evaluates F at the midpoint and solves the saddle system
    for the end-of-step velocity and pressure, so each iterate is
    divergence-free.
    """
    grid = ops.grid
    V_n = _check_velocity(grid, state.velocity)
    t_mid = state.t + 0.5 * dt
    V_next = V_n.copy()
    p = state.pressure
    delta = np.inf
    for iteration in range(1, cfg.newton_max_iter + 1):
        F = convection_diffusion(ops, 0.5 * (V_n + V_next), t_mid, nu, force)
        V_star = V_n + dt * F / ops.omega
        p = pressure_poisson_solve(ops, (ops.M @ V_star) / dt)
        V_new = V_star - dt * (ops.G @ p) / ops.omega
        delta = float(np.max(np.abs(V_new - V_next)))
        V_next = V_new
        if delta <= cfg.newton_tol * max(1.0, float(np.max(np.abs(V_next)))):
            logger.debug("FOM step converged in %d iterations", iteration)
            break
    else:
        raise ConvergenceError("Navier-Stokes midpoint step did not converge", delta, cfg.newton_max_iter)

    if np.max(np.abs(ops.M @ V_next)) > DIVERGENCE_TOL:
        V_next, _ = project(ops, V_next)
    return NsState(velocity=V_next, pressure=p, t=state.t + dt)


def kinetic_energy(ops: NsOperators, V: np.ndarray) -> float:
    V = np.asarray(V, dtype=float)
    return 0.5 * float(V @ (ops.omega * V))


def momentum(ops: NsOperators, V: np.ndarray) -> Tuple[float, float]:
    """Volume-weighted sums of the u and v components."""
    weighted = ops.omega * np.asarray(V, dtype=float)
    n_p = ops.grid.n_p
    return float(weighted[:n_p].sum()), float(weighted[n_p:].sum())


def divergence_residual(ops: NsOperators, V: np.ndarray) -> float:
    return float(np.max(np.abs(ops.M @ np.asarray(V, dtype=float))))


def velocity_from_streamfunction(grid: StaggeredGrid2D, psi: np.ndarray) -> np.ndarray:
    """Discrete curl of a node-based streamfunction; M of the result is zero
    up to rounding."""
    psi = np.asarray(psi, dtype=float).reshape(grid.nx, grid.ny)
    u = (_north(psi) - psi) / grid.dy
    v = -(_east(psi) - psi) / grid.dx
    return grid.join(u, v)


def _node_points(grid: StaggeredGrid2D):
    x = np.arange(grid.nx) * grid.dx
    y = np.arange(grid.ny) * grid.dy
    return np.meshgrid(x, y, indexing="ij")


def taylor_green(grid: StaggeredGrid2D, amplitude: float = 1.0, wavenumber: int = 1) -> np.ndarray:
    """u = A sin(kx) cos(ky), v = -A cos(kx) sin(ky) on a square domain."""
    k = 2.0 * np.pi * wavenumber / grid.lx
    x, y = _node_points(grid)
    # Node streamfunction with ∂ψ/∂y = u and -∂ψ/∂x = v.
    psi = (amplitude / k) * np.sin(k * x) * np.sin(k * y)
    return velocity_from_streamfunction(grid, psi)


def random_modes(
    grid: StaggeredGrid2D, rng: np.random.Generator, n_modes: int = 4, amplitude: float = 1.0
) -> np.ndarray:
    x, y = _node_points(grid)
    psi = np.zeros_like(x)
    for _ in range(n_modes):
        kx, ky = 0, 0
        while kx == 0 and ky == 0:
            kx, ky = rng.integers(-3, 4, size=2)
        k = 2.0 * np.pi * np.hypot(kx / grid.lx, ky / grid.ly)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        coefficient = amplitude * rng.standard_normal() / k
        psi += coefficient * np.cos(2.0 * np.pi * (kx * x / grid.lx + ky * y / grid.ly) + phase)
    return velocity_from_streamfunction(grid, psi)


def subdomain_momentum_residual(
    ops: NsOperators,
    C: np.ndarray,
    V: np.ndarray,
    dVdt: np.ndarray,
    t: float,
    nu: float,
    force: Optional[BodyForce] = None,
    pressure: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Cᵀ(Ω dV/dt - F + G p); the pressure term is dropped when ``pressure`` is None."""
    residual = ops.omega * dVdt - convection_diffusion(ops, V, t, nu, force)
    if pressure is not None:
        residual = residual + ops.G @ pressure
    return C.T @ residual
