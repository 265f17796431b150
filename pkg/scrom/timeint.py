"""Fixed-step time integration: classical RK4 and the implicit midpoint rule.

The implicit midpoint rule preserves every quadratic invariant of the
continuous flow, which is what carries kinetic-energy conservation from the
semi-discrete models to the fully discrete ones.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import scipy.linalg as la
from pydantic import BaseModel, ConfigDict, Field

from scrom.errors import ConvergenceError, NonFiniteError

logger = logging.getLogger(__name__)

Rhs = Callable[[np.ndarray, float], np.ndarray]
Stepper = Callable[[np.ndarray, float, float], np.ndarray]


class IntegratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dt: float = Field(gt=0.0, description="Time step")
    t_end: float = Field(default=0.0, ge=0.0, description="Final time")
    method: Literal["rk4", "implicit_midpoint"] = "implicit_midpoint"
    newton_tol: float = Field(default=1e-12, gt=0.0)
    newton_max_iter: int = Field(default=50, ge=1)
    jacobian: Literal["finite_difference", "fixed_point"] = "finite_difference"
    fd_eps: float = Field(default=1e-7, gt=0.0, description="Relative finite-difference step")

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        return n


def _finite(name: str, x: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} is not finite")
    return x


def rk4_step(rhs: Rhs, u: np.ndarray, t: float, dt: float) -> np.ndarray:
    k1 = _finite("RK4 stage 1", rhs(u, t))
    k2 = _finite("RK4 stage 2", rhs(u + 0.5 * dt * k1, t + 0.5 * dt))
    k3 = _finite("RK4 stage 3", rhs(u + 0.5 * dt * k2, t + 0.5 * dt))
    k4 = _finite("RK4 stage 4", rhs(u + dt * k3, t + dt))
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def finite_difference_jacobian(rhs: Rhs, x: np.ndarray, t: float, eps: float, f0=None) -> np.ndarray:
    if f0 is None:
        f0 = rhs(x, t)
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        step = eps * max(1.0, abs(x[i]))
        shifted = x.copy()
        shifted[i] += step
        jac[:, i] = (rhs(shifted, t) - f0) / step
    return jac


def implicit_midpoint_step(
    rhs: Rhs, u: np.ndarray, t: float, dt: float, cfg: IntegratorConfig
) -> np.ndarray:
    """Solve k = rhs(u + dt/2 k, t + dt/2) and return u + dt k.

    The Newton variant freezes a finite-difference Jacobian over the step;
    the fixed-point variant iterates k directly. Both stop once
    max|Δk| <= newton_tol * max(1, max|k|).
    """
    u = np.asarray(u, dtype=float)
    t_mid = t + 0.5 * dt
    k = _finite("midpoint initial stage", rhs(u, t))

    lu = None
    if cfg.jacobian == "finite_difference":
        x = u + 0.5 * dt * k
        jac_f = finite_difference_jacobian(rhs, x, t_mid, cfg.fd_eps)
        lu = la.lu_factor(np.eye(u.size) - 0.5 * dt * jac_f)

    delta_norm = np.inf
    for iteration in range(1, cfg.newton_max_iter + 1):
        stage = _finite("midpoint stage", rhs(u + 0.5 * dt * k, t_mid))
        if lu is None:
            delta = stage - k
        else:
            delta = la.lu_solve(lu, stage - k)
        k = k + delta
        delta_norm = float(np.max(np.abs(delta))) if delta.size else 0.0
        if delta_norm <= cfg.newton_tol * max(1.0, float(np.max(np.abs(k), initial=0.0))):
            logger.debug("implicit midpoint converged in %d iterations", iteration)
            return u + dt * k

    raise ConvergenceError("implicit midpoint solve did not converge", delta_norm, cfg.newton_max_iter)


def make_stepper(rhs: Rhs, cfg: IntegratorConfig) -> Stepper:
    """Bind ``rhs`` to the integrator ``cfg.method`` names."""
    if cfg.method == "rk4":
        return lambda u, t, dt: rk4_step(rhs, u, t, dt)
    return lambda u, t, dt: implicit_midpoint_step(rhs, u, t, dt, cfg)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled states; ``states[:, n]`` is the state at ``times[n]``."""

    times: np.ndarray
    states: np.ndarray


def integrate(
    step: Stepper,
    u0: np.ndarray,
    dt: float,
    n_steps: int,
    stride: int = 1,
    t0: float = 0.0,
) -> Trajectory:
    """Advance ``u0`` by ``n_steps`` steps of size ``dt``.

    Args:
        step: Single-step map (u, t, dt) -> u_next, e.g. from ``make_stepper``.
        u0: Initial state.
        dt: Step size.
        n_steps: Number of steps.
        stride: Keep every ``stride``-th state.
        t0: Initial time.

    Returns:
        The kept states, ``u0`` included, with their times.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    u = np.array(u0, dtype=float)
    times = [t0]
    states = [u.copy()]
    for n in range(n_steps):
        u = step(u, t0 + n * dt, dt)
        if (n + 1) % stride == 0:
            times.append(t0 + (n + 1) * dt)
            states.append(u.copy())
    return Trajectory(times=np.asarray(times), states=np.stack(states, axis=1))


def convergence_order(errors, dts) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    slope, _ = np.polyfit(np.log(np.asarray(dts, dtype=float)), np.log(np.asarray(errors, dtype=float)), 1)
    return float(slope)
