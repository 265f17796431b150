"""Builds the discrete problem a scenario describes: mesh or grid, FOM,
constraint matrix, forcing and initial state."""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from scrom.fom import BurgersFom, SourceFunction
from scrom.mesh import Mesh1D, StaggeredGrid2D, SubdomainDecomposition, build_aggregation_matrix
from scrom.models import ForceConfig, InitialConditionConfig, ScenarioConfig
from scrom.ns_fom import BodyForce, NsOperators, build_operators, project, random_modes, taylor_green
from scrom.ns_rom import momentum_aggregation_matrix


@dataclass(frozen=True, eq=False)
class BurgersProblem:
    mesh: Mesh1D
    fom: BurgersFom
    C: np.ndarray
    u0: np.ndarray


@dataclass(frozen=True, eq=False)
class NsProblem:
    grid: StaggeredGrid2D
    ops: NsOperators
    nu: float
    force: Optional[BodyForce]
    C: np.ndarray
    V0: np.ndarray


Problem = Union[BurgersProblem, NsProblem]


def build_mesh(cfg: ScenarioConfig) -> Mesh1D:
    return Mesh1D.uniform(cfg.grid.n_cells, cfg.grid.length)


def build_grid(cfg: ScenarioConfig) -> StaggeredGrid2D:
    return StaggeredGrid2D(cfg.grid.nx, cfg.grid.ny, cfg.grid.lx, cfg.grid.ly)


def constraint_matrix(cfg: ScenarioConfig) -> np.ndarray:
    """C for the scenario; burgers1d columns are cell subdomains, ns2d columns
    are per-component momentum subdomains."""
    if cfg.problem == "burgers1d":
        mesh = build_mesh(cfg)
        if not cfg.subdomains:
            return np.zeros((mesh.n_cells, 0))
        decomp = SubdomainDecomposition.from_lists([s.indices() for s in cfg.subdomains])
        return build_aggregation_matrix(mesh, decomp)
    grid = build_grid(cfg)
    return momentum_aggregation_matrix(
        grid, [s.component_indices(grid.ny) for s in cfg.momentum_subdomains]
    )


def burgers_source(force: ForceConfig, length: float) -> Optional[SourceFunction]:
    if force.kind == "none":
        return None
    a, k = force.amplitude, force.wavenumber
    return lambda x, t: a * np.sin(2.0 * np.pi * k * x / length)


def kolmogorov_force(force: ForceConfig, ly: float) -> Optional[BodyForce]:
    """f_x = a sin(2πk y / l_y), f_y = 0."""
    if force.kind == "none":
        return None
    a, k = force.amplitude, force.wavenumber

    def body(x, y, t):
        return a * np.sin(2.0 * np.pi * k * y / ly), np.zeros_like(x)

    return body


def burgers_initial_condition(mesh: Mesh1D, ic: InitialConditionConfig) -> np.ndarray:
    x = mesh.cell_centers()
    length = mesh.length
    if ic.preset == "constant":
        shape = np.full(x.size, ic.amplitude)
    elif ic.preset == "gaussian":
        distance = (x - ic.center + 0.5 * length) % length - 0.5 * length
        shape = ic.amplitude * np.exp(-0.5 * (distance / ic.width) ** 2)
    elif ic.preset == "sine":
        if ic.coefficients:
            shape = sum(
                c * np.sin(2.0 * np.pi * (k + 1) * x / length) for k, c in enumerate(ic.coefficients)
            )
        else:
            shape = ic.amplitude * np.sin(2.0 * np.pi * ic.wavenumber * x / length)
    else:
        raise ValueError(f"initial condition {ic.preset!r} does not apply to burgers1d")
    return ic.offset + shape


def ns_initial_condition(
    ops: NsOperators, ic: InitialConditionConfig, rng: np.random.Generator
) -> np.ndarray:
    grid = ops.grid
    if ic.preset == "taylor_green":
        V = taylor_green(grid, ic.amplitude, ic.wavenumber)
    elif ic.preset == "random_modes":
        V = random_modes(grid, rng, ic.n_modes, ic.amplitude)
    else:
        raise ValueError(f"initial condition {ic.preset!r} does not apply to ns2d")
    V, _ = project(ops, V)
    return V


def build_problem(cfg: ScenarioConfig) -> Problem:
    C = constraint_matrix(cfg)
    if cfg.problem == "burgers1d":
        mesh = build_mesh(cfg)
        fom = BurgersFom(mesh, cfg.viscosity, burgers_source(cfg.force, mesh.length))
        return BurgersProblem(mesh=mesh, fom=fom, C=C, u0=burgers_initial_condition(mesh, cfg.initial_condition))
    grid = build_grid(cfg)
    ops = build_operators(grid)
    rng = np.random.default_rng(cfg.seed)
    return NsProblem(
        grid=grid,
        ops=ops,
        nu=cfg.viscosity,
        force=kolmogorov_force(cfg.force, grid.ly),
        C=C,
        V0=ns_initial_condition(ops, cfg.initial_condition, rng),
    )
