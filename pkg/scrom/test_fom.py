import numpy as np
import pytest
from numpy.testing import assert_allclose

from scrom.errors import DimensionError, NonFiniteError
from scrom.fom import BurgersFom, residual
from scrom.mesh import Mesh1D, SubdomainDecomposition, build_aggregation_matrix


@pytest.fixture
def mesh():
    return Mesh1D.uniform(32)


def test_constant_state_is_steady(mesh):
    fom = BurgersFom(mesh, viscosity=0.05)
    assert_allclose(fom.rhs(np.full(32, 0.7), 0.0), 0.0, atol=1e-13)


def test_inviscid_flux_conserves_energy(mesh):
    rng = np.random.default_rng(0)
    fom = BurgersFom(mesh)
    for _ in range(5):
        u = rng.standard_normal(32)
        assert abs(u @ (fom.volumes * fom.rhs(u, 0.0))) < 1e-12


def test_viscosity_dissipates_energy(mesh):
    rng = np.random.default_rng(1)
    fom = BurgersFom(mesh, viscosity=0.1)
    u = rng.standard_normal(32)
    assert u @ (fom.volumes * fom.rhs(u, 0.0)) < 0.0


def test_total_mass_is_conserved_without_source(mesh):
    rng = np.random.default_rng(2)
    fom = BurgersFom(mesh, viscosity=0.01)
    u = rng.standard_normal(32)
    assert abs(fom.volumes @ fom.rhs(u, 0.0)) < 1e-12


def test_source_is_added_at_cell_centers(mesh):
    fom = BurgersFom(mesh, source=lambda x, t: np.sin(2 * np.pi * x) + t)
    u = np.zeros(32)
    assert_allclose(fom.rhs(u, 0.5), np.sin(2 * np.pi * mesh.cell_centers()) + 0.5)


def test_face_flux_cubic_mean():
    fom = BurgersFom(Mesh1D.uniform(3), viscosity=0.0)
    flux = fom.face_flux(np.array([1.0, 2.0, 3.0]))
    assert_allclose(flux, [(1 + 2 + 4) / 6, (4 + 6 + 9) / 6, (9 + 3 + 1) / 6])


def test_residual_is_v_minus_rhs(mesh):
    rng = np.random.default_rng(3)
    fom = BurgersFom(mesh, viscosity=0.02)
    v, w = rng.standard_normal(32), rng.standard_normal(32)
    assert_allclose(fom.residual(v, w, 0.0), v - fom.rhs(w, 0.0))
    assert_allclose(residual(fom, fom.rhs(w, 0.0), w, 0.0), 0.0)
    with pytest.raises(DimensionError):
        residual(fom, np.zeros(31), w, 0.0)


def test_invalid_construction():
    with pytest.raises(ValueError):
        BurgersFom(Mesh1D.uniform(8), viscosity=-1.0)
    with pytest.raises(ValueError, match="uniform"):
        BurgersFom(Mesh1D(np.array([0.1, 0.2, 0.3])))


def test_state_checks(mesh):
    fom = BurgersFom(mesh)
    with pytest.raises(DimensionError):
        fom.rhs(np.zeros(31), 0.0)
    with pytest.raises(NonFiniteError):
        fom.rhs(np.full(32, np.inf), 0.0)


def test_single_pulse_matches_hand_assembled_fluxes():
    fom = BurgersFom(Mesh1D.uniform(8))
    u = np.zeros(8)
    u[0] = 1.0
    # Faces 7|0 and 0|1 both carry (1 + 0 + 0)/6; h = 1/8.
    expected = np.zeros(8)
    expected[1] = 8.0 / 6.0
    expected[7] = -8.0 / 6.0
    assert_allclose(fom.face_flux(u), [1 / 6, 0, 0, 0, 0, 0, 0, 1 / 6], atol=1e-15)
    assert_allclose(fom.rhs(u, 0.0), expected, atol=1e-14)


def test_steady_diffusion_converges_at_second_order():
    errors = []
    for n in (16, 32, 64):
        mesh = Mesh1D.uniform(n)
        viscous, inviscid = BurgersFom(mesh, viscosity=1.0), BurgersFom(mesh)
        L = np.column_stack([viscous.rhs(e, 0.0) - inviscid.rhs(e, 0.0) for e in np.eye(n)])
        x = mesh.cell_centers()
        source = (2 * np.pi) ** 2 * np.sin(2 * np.pi * x)
        u = np.linalg.lstsq(L, -source, rcond=None)[0]
        errors.append(np.max(np.abs(u - np.sin(2 * np.pi * x))))
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    assert np.all(np.abs(ratios - 4.0) <= 0.6)


def test_subdomain_average_of_rhs_is_boundary_flux_balance(mesh):
    rng = np.random.default_rng(4)
    fom = BurgersFom(mesh, viscosity=0.01)
    u = rng.uniform(-1.0, 1.0, size=32)
    C = build_aggregation_matrix(
        mesh, SubdomainDecomposition.from_lists([list(range(5, 12)), list(range(20, 32)), [0, 1, 2]])
    )
    g = fom.face_flux(u)
    h = fom.h
    expected = [-(g[11] - g[4]) / (7 * h), -(g[31] - g[19]) / (12 * h), -(g[2] - g[31]) / (3 * h)]
    assert_allclose(C.T @ fom.rhs(u, 0.0), expected, rtol=0.0, atol=1e-13)
