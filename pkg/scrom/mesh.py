"""Finite-volume meshes, subdomain decompositions and the aggregation matrix C.

C maps cell quantities to volume-weighted subdomain averages,
``u_bar = C.T @ u``, with ``C[j, k] = |Omega_j| / |Omega_bar_k|`` for
``j in S_k`` and zero otherwise.
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from scrom.errors import DimensionError, require_finite


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Periodic line of cells."""

    cell_volumes: np.ndarray
    periodic: bool = True

    def __post_init__(self):
        volumes = np.asarray(self.cell_volumes, dtype=float)
        if volumes.ndim != 1 or volumes.size < 2:
            raise DimensionError("Mesh1D needs at least two cells")
        require_finite("cell_volumes", volumes)
        if np.any(volumes <= 0.0):
            raise ValueError("cell volumes must be positive")
        if not self.periodic:
            raise ValueError("only periodic meshes are supported")
        volumes.setflags(write=False)
        object.__setattr__(self, "cell_volumes", volumes)

    @classmethod
    def uniform(cls, n_cells: int, length: float = 1.0) -> "Mesh1D":
        if n_cells < 2:
            raise DimensionError("Mesh1D needs at least two cells")
        return cls(np.full(n_cells, length / n_cells))

    @property
    def n_cells(self) -> int:
        return self.cell_volumes.size

    @property
    def n_unknowns(self) -> int:
        return self.n_cells

    @property
    def offset(self) -> int:
        return 0

    @property
    def length(self) -> float:
        return float(self.cell_volumes.sum())

    def cell_centers(self) -> np.ndarray:
        edges = np.concatenate(([0.0], np.cumsum(self.cell_volumes)))
        return 0.5 * (edges[:-1] + edges[1:])


@dataclass(frozen=True, eq=False)
class FaceComponent:
    """One velocity component of a staggered grid, seen as a block of cells.

    ``offset`` locates the block inside the full velocity vector of length
    ``n_unknowns``.
    """

    name: str
    cell_volumes: np.ndarray
    offset: int
    n_unknowns: int

    @property
    def n_cells(self) -> int:
        return self.cell_volumes.size


@dataclass(frozen=True, eq=False)
class StaggeredGrid2D:
    """Uniform periodic MAC grid.

    u lives on vertical faces at (i*dx, (j+1/2)*dy), v on horizontal faces at
    ((i+1/2)*dx, j*dy) and p at cell centres. Every field is stored as an
    (nx, ny) array flattened in C order, so index ``i * ny + j``; the velocity
    vector is ``[u.ravel(), v.ravel()]``.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise DimensionError("StaggeredGrid2D needs nx, ny >= 3")
        if not (self.lx > 0.0 and self.ly > 0.0):
            raise ValueError("domain lengths must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def n_p(self) -> int:
        return self.nx * self.ny

    @property
    def n_v(self) -> int:
        return 2 * self.nx * self.ny

    def index(self, i: int, j: int) -> int:
        return (i % self.nx) * self.ny + (j % self.ny)

    def component(self, name: str) -> FaceComponent:
        volumes = np.full(self.n_p, self.dx * self.dy)
        if name == "u":
            return FaceComponent("u", volumes, 0, self.n_v)
        if name == "v":
            return FaceComponent("v", volumes, self.n_p, self.n_v)
        raise ValueError(f"unknown velocity component: {name}")

    def split(self, velocity: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        velocity = np.asarray(velocity, dtype=float)
        if velocity.shape != (self.n_v,):
            raise DimensionError(f"velocity has shape {velocity.shape}, expected ({self.n_v},)")
        shape = (self.nx, self.ny)
        return velocity[: self.n_p].reshape(shape), velocity[self.n_p :].reshape(shape)

    def join(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.concatenate([np.ravel(u), np.ravel(v)])

    def u_points(self) -> Tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def v_points(self) -> Tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = np.arange(self.ny) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def p_points(self) -> Tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def block(self, i_range: Sequence[int], j_range: Sequence[int]) -> List[int]:
        """Flat indices of the (i, j) block, usable for any of u, v or p."""
        return [self.index(i, j) for i in i_range for j in j_range]


CellMesh = Union[Mesh1D, FaceComponent]


@dataclass(frozen=True)
class SubdomainDecomposition:
    """Index sets S_k of cells; subdomains may overlap and need not be connected."""

    subdomains: Tuple[Tuple[int, ...], ...] = field(default_factory=tuple)

    def __post_init__(self):
        normalized = []
        for k, subdomain in enumerate(self.subdomains):
            indices = tuple(int(j) for j in subdomain)
            if not indices:
                raise ValueError(f"subdomain {k} is empty")
            if len(set(indices)) != len(indices):
                raise ValueError(f"subdomain {k} contains duplicate cell indices")
            normalized.append(indices)
        object.__setattr__(self, "subdomains", tuple(normalized))

    @classmethod
    def from_lists(cls, subdomains: Sequence[Sequence[int]]) -> "SubdomainDecomposition":
        return cls(tuple(tuple(s) for s in subdomains))

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomains)

    def check_range(self, n_cells: int) -> None:
        for k, subdomain in enumerate(self.subdomains):
            bad = [j for j in subdomain if j < 0 or j >= n_cells]
            if bad:
                raise DimensionError(
                    f"subdomain {k} has cell indices out of range [0, {n_cells}): {bad}"
                )


def build_aggregation_matrix(mesh: CellMesh, decomp: SubdomainDecomposition) -> np.ndarray:
    """Dense C with one column per subdomain.

    For a ``FaceComponent`` the rows span the whole velocity vector and only
    the component's block is populated.
    """
    volumes = np.asarray(mesh.cell_volumes, dtype=float)
    decomp.check_range(volumes.size)
    n_rows = getattr(mesh, "n_unknowns", volumes.size)
    offset = getattr(mesh, "offset", 0)

    C = np.zeros((n_rows, decomp.n_subdomains))
    for k, subdomain in enumerate(decomp.subdomains):
        rows = np.asarray(subdomain, dtype=int)
        C[offset + rows, k] = volumes[rows] / volumes[rows].sum()
    return C


def subdomain_average(C: np.ndarray, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if C.shape[0] != u.shape[0]:
        raise DimensionError(f"C has {C.shape[0]} rows but state has length {u.shape[0]}")
    return C.T @ u
