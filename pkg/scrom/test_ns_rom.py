import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from scrom.errors import DimensionError, InfeasibleConstraintError
from scrom.mesh import StaggeredGrid2D
from scrom.ns_fom import build_operators, convection_diffusion, random_modes
from scrom.ns_fom import kinetic_energy as fom_kinetic_energy
from scrom.ns_rom import (
    CarlbergVelocityRom,
    VelocityRom,
    carlberg_ns_rhs,
    constraint_divergence,
    divergence_free_split,
    kinetic_energy,
    mass_residual,
    momentum_aggregation_matrix,
    momentum_residual,
    velocity_rom_rhs,
    viscous_energy_rate,
    weighted_constrained_basis,
    weighted_pod_velocity_basis,
)


@pytest.fixture
def ops():
    return build_operators(StaggeredGrid2D(8, 8))


@pytest.fixture
def snapshots(ops):
    rng = np.random.default_rng(0)
    grid = ops.grid
    u_drift = grid.join(np.ones((8, 8)), np.zeros((8, 8)))
    v_drift = grid.join(np.zeros((8, 8)), np.ones((8, 8)))
    columns = [
        random_modes(grid, rng, n_modes=4) + rng.uniform(-1, 1) * u_drift + rng.uniform(-1, 1) * v_drift
        for _ in range(10)
    ]
    return np.column_stack(columns)


@pytest.fixture
def whole_domain(ops):
    all_cells = list(range(ops.grid.n_p))
    return momentum_aggregation_matrix(ops.grid, [{"u": all_cells, "v": all_cells}])


def test_momentum_aggregation_matrix(ops):
    grid = ops.grid
    C = momentum_aggregation_matrix(grid, [{"u": list(range(grid.n_p)), "v": [1, 2]}, {"v": [5]}])
    assert C.shape == (grid.n_v, 3)
    assert_allclose(C.sum(axis=0), 1.0)
    assert np.all(C[grid.n_p :, 0] == 0.0)
    assert C[grid.n_p + 1, 1] == pytest.approx(0.5)
    assert C[grid.n_p + 5, 2] == pytest.approx(1.0)
    assert momentum_aggregation_matrix(grid, []).shape == (grid.n_v, 0)
    with pytest.raises(ValueError, match="unknown"):
        momentum_aggregation_matrix(grid, [{"w": [0]}])


def test_horizontal_strips_are_divergence_free(ops):
    grid = ops.grid
    strip = momentum_aggregation_matrix(grid, [{"u": grid.block(range(8), range(2, 4))}])
    column = momentum_aggregation_matrix(grid, [{"u": grid.block(range(2, 4), range(8))}])
    assert constraint_divergence(ops, strip)[0] < 1e-12
    assert constraint_divergence(ops, column)[0] > 1e-3
    assert constraint_divergence(ops, np.zeros((grid.n_v, 0))).size == 0


def test_weighted_constrained_basis(ops, snapshots, whole_domain):
    basis = weighted_constrained_basis(snapshots, whole_domain, ops.omega, n_modes=6)
    assert basis.dim == 6
    assert basis.q1_tilde.shape == (ops.grid.n_v, 2)
    assert basis.pod_part.shape == (ops.grid.n_v, 4)
    gram = basis.phi.T @ (ops.omega[:, None] * basis.phi)
    assert_allclose(gram, np.eye(6), atol=1e-12)
    assert basis.basis.constraint_inclusion_residual(whole_domain) < 1e-12


def test_split_of_divergence_free_basis_keeps_everything(ops, snapshots, whole_domain):
    basis = weighted_constrained_basis(snapshots, whole_domain, ops.omega, n_modes=6)
    split = divergence_free_split(basis, ops.M)
    assert split.r1 == 0
    assert split.r2 == 6
    assert_allclose(split.phi0, basis.phi)


def test_split_removes_single_divergent_direction(ops, snapshots):
    rng = np.random.default_rng(1)
    X = np.column_stack([snapshots, rng.standard_normal(ops.grid.n_v)])
    basis = weighted_pod_velocity_basis(X, ops.omega, n_modes=11)
    split = divergence_free_split(basis, ops.M)
    assert (split.r1, split.r2) == (1, 10)
    assert np.max(np.abs(ops.M @ split.phi0)) < 1e-11
    assert np.max(np.abs(split.phi0.T @ ops.G)) < 1e-11
    assert_allclose(split.phi0.T @ (ops.omega[:, None] * split.phi0), np.eye(10), atol=1e-12)
    a2 = rng.standard_normal(10)
    assert_allclose(split.lift([0.0], a2), split.phi0 @ a2)


def test_split_rejects_mismatched_operator(ops, snapshots):
    basis = weighted_pod_velocity_basis(snapshots, ops.omega, n_modes=4)
    with pytest.raises(DimensionError):
        divergence_free_split(basis, ops.M[:, :10])


def test_velocity_rom_rhs_is_projected_fom_rhs(ops, snapshots, whole_domain):
    split = divergence_free_split(weighted_constrained_basis(snapshots, whole_domain, ops.omega, 6), ops.M)
    rom = VelocityRom(split, ops, nu=0.02)
    a2 = np.random.default_rng(2).standard_normal(6)
    expected = split.phi0.T @ convection_diffusion(ops, split.phi0 @ a2, 0.0, 0.02)
    assert_allclose(velocity_rom_rhs(rom, a2, 0.0), expected)
    with pytest.raises(DimensionError):
        rom.rhs(np.zeros(5), 0.0)


def test_velocity_rom_energy_and_mass(ops, snapshots, whole_domain):
    split = divergence_free_split(weighted_constrained_basis(snapshots, whole_domain, ops.omega, 8), ops.M)
    inviscid = VelocityRom(split, ops, nu=0.0)
    rng = np.random.default_rng(3)
    for _ in range(3):
        a2 = rng.standard_normal(8)
        assert abs(a2 @ inviscid.rhs(a2, 0.0)) < 1e-10 * max(1.0, a2 @ a2)
        assert mass_residual(inviscid, a2) < 1e-12
        assert kinetic_energy(a2) == pytest.approx(fom_kinetic_energy(ops, inviscid.lift(a2)))
    viscous = VelocityRom(split, ops, nu=0.05)
    assert viscous_energy_rate(viscous, rng.standard_normal(8)) < 0.0


def test_initial_state_reproduces_snapshot_in_span(ops, snapshots, whole_domain):
    split = divergence_free_split(
        weighted_constrained_basis(snapshots, whole_domain, ops.omega, n_modes=None, energy=1.0), ops.M
    )
    rom = VelocityRom(split, ops, nu=0.01)
    V0 = snapshots[:, 3]
    assert_allclose(rom.lift(rom.initial_state(V0)), V0, atol=1e-10)


def test_constraints_in_span_conserve_momentum(ops, snapshots, whole_domain):
    split = divergence_free_split(weighted_constrained_basis(snapshots, whole_domain, ops.omega, 6), ops.M)
    rom = VelocityRom(split, ops, nu=0.02)
    a2 = rom.initial_state(snapshots[:, 4])
    assert np.max(np.abs(momentum_residual(rom, whole_domain, a2, 0.0))) < 1e-12
    audit = rom.audit(whole_domain)
    assert audit["r1"] == 0.0
    assert audit["divergence_max"] < 1e-12
    assert audit["pressure_coupling_max"] < 1e-12
    assert audit["orthonormality"] < 1e-12
    assert audit["constraint_divergence_max"] < 1e-12


def test_audit_warns_about_divergent_constraints(ops, snapshots, caplog):
    grid = ops.grid
    column = momentum_aggregation_matrix(grid, [{"u": grid.block(range(2, 4), range(8))}])
    split = divergence_free_split(weighted_pod_velocity_basis(snapshots, ops.omega, 4), ops.M)
    with caplog.at_level(logging.WARNING, logger="scrom.ns_rom"):
        audit = VelocityRom(split, ops, nu=0.01).audit(column)
    assert audit["constraint_divergence_max"] > 1e-3
    assert "not divergence-free" in caplog.text


def test_carlberg_velocity_rom_enforces_momentum(ops, snapshots, whole_domain):
    split = divergence_free_split(weighted_pod_velocity_basis(snapshots, ops.omega, 4), ops.M)
    base = VelocityRom(split, ops, nu=0.02)
    rom = CarlbergVelocityRom(base, whole_domain)
    assert rom.perturbed.is_feasible
    assert rom.reduced_dim == 4
    a2 = base.initial_state(snapshots[:, 7])
    assert np.max(np.abs(momentum_residual(rom, whole_domain, a2, 0.0))) < 1e-10
    assert_allclose(carlberg_ns_rhs(rom, a2, 0.0) - base.rhs(a2, 0.0), rom.perturbation(a2, 0.0), atol=1e-12)
    assert_allclose(rom.lift(a2), base.lift(a2))


def test_carlberg_velocity_rom_rejects_unreachable_momentum(ops, snapshots, caplog):
    grid = ops.grid
    single_faces = momentum_aggregation_matrix(grid, [{"u": [k]} for k in range(0, 64, 4)])
    split = divergence_free_split(weighted_pod_velocity_basis(snapshots, ops.omega, 4), ops.M)
    with caplog.at_level(logging.WARNING, logger="scrom.rom"):
        rom = CarlbergVelocityRom(VelocityRom(split, ops, nu=0.02), single_faces)
        assert not rom.perturbed.is_feasible
    assert "cannot enforce" in caplog.text
    with pytest.raises(InfeasibleConstraintError) as info:
        carlberg_ns_rhs(rom, np.ones(rom.reduced_dim), 0.0)
    assert len(info.value.rows) > 0
    assert set(info.value.rows) <= set(range(16))


def test_carlberg_velocity_rom_ignores_rounding_level_momentum_rows(ops):
    rng = np.random.default_rng(4)
    grid = ops.grid
    X = np.column_stack([random_modes(grid, rng, n_modes=4) for _ in range(10)])
    all_cells = list(range(grid.n_p))
    C = momentum_aggregation_matrix(grid, [{"u": all_cells}, {"v": all_cells}])
    split = divergence_free_split(weighted_pod_velocity_basis(X, ops.omega, 4), ops.M)
    base = VelocityRom(split, ops, nu=0.0)
    rom = CarlbergVelocityRom(base, C, feasibility_tol=1e-8)
    assert rom.perturbed.feasibility_tol == 1e-8
    assert rom.perturbed.constraint_rank_in_basis == 0
    a2 = base.initial_state(X[:, 2])
    assert_allclose(carlberg_ns_rhs(rom, a2, 0.0), base.rhs(a2, 0.0), atol=1e-10)
