"""Full-order models of scalar conservation laws, du/dt = f(u, t)."""

from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np

from scrom.errors import DimensionError, require_finite
from scrom.mesh import Mesh1D

SourceFunction = Callable[[np.ndarray, float], np.ndarray]


class FomSystem(Protocol):
    """Capability shared by every full-order model driven by the ROM layer."""

    @property
    def dim(self) -> int: ...

    @property
    def volumes(self) -> np.ndarray: ...

    def rhs(self, u: np.ndarray, t: float) -> np.ndarray: ...


def residual(fom: FomSystem, v: np.ndarray, w: np.ndarray, t: float) -> np.ndarray:
    """r(v, w, t) = v - f(w, t)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (fom.dim,):
        raise DimensionError(f"v has shape {v.shape}, expected ({fom.dim},)")
    return v - fom.rhs(w, t)


@dataclass(frozen=True, eq=False)
class BurgersFom:
    """Periodic viscous Burgers equation on a uniform mesh.

    Face flux g_{j+1/2} = (u_j² + u_j u_{j+1} + u_{j+1}²)/6 - ν (u_{j+1} - u_j)/h.
    The cubic-mean convective flux makes uᵀ h f(u) vanish for ν = 0 and s = 0.
    """

    mesh: Mesh1D
    viscosity: float = 0.0
    source: Optional[SourceFunction] = None

    def __post_init__(self):
        if self.viscosity < 0.0:
            raise ValueError("viscosity must be non-negative")
        volumes = self.mesh.cell_volumes
        if not np.allclose(volumes, volumes[0], rtol=1e-14, atol=0.0):
            raise ValueError("BurgersFom requires a uniform mesh")

    @property
    def dim(self) -> int:
        return self.mesh.n_cells

    @property
    def volumes(self) -> np.ndarray:
        return self.mesh.cell_volumes

    @property
    def h(self) -> float:
        return float(self.mesh.cell_volumes[0])

    def face_flux(self, u: np.ndarray) -> np.ndarray:
        """Flux through the right face of every cell."""
        right = np.roll(u, -1)
        convective = (u * u + u * right + right * right) / 6.0
        return convective - self.viscosity * (right - u) / self.h

    def rhs(self, u: np.ndarray, t: float) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise DimensionError(f"state has shape {u.shape}, expected ({self.dim},)")
        require_finite("state", u)
        flux = self.face_flux(u)
        f = -(flux - np.roll(flux, 1)) / self.h
        if self.source is not None:
            f = f + self.source(self.mesh.cell_centers(), t)
        return f

    def residual(self, v: np.ndarray, w: np.ndarray, t: float) -> np.ndarray:
        return residual(self, v, w, t)

