"""Simulators for the incomplete (S_fp) and complete (S_fc) models.

Batch entry points feed the accel kernels; the single-record dataclass API
wraps them.  Every incomplete-model call can be charged to a BudgetMeter so
training-time usage is accounted exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import accel
from .integrate import Trajectory
from .tasks import TaskSpec, get_task


class BudgetExceeded(RuntimeError):
    pass


class BudgetMeter:
    """Counts incomplete-simulator calls against a cap (None = unlimited)."""

    def __init__(self, budget=None):
        self.budget = budget
        self.used = 0

    def can_afford(self, n: int) -> bool:
        return self.budget is None or self.used + n <= self.budget

    def charge(self, n: int):
        if not self.can_afford(n):
            raise BudgetExceeded(
                f"simulation budget exhausted: {self.used} used of {self.budget}")
        self.used += n

    @property
    def remaining(self):
        return None if self.budget is None else self.budget - self.used


def _charge(meter, complete, n):
    if meter is not None and not complete:
        meter.charge(n)


# ---------------------------------------------------------------------------
# batch simulators
# ---------------------------------------------------------------------------

def pendulum_batch(x0, v0, omega, xi=None, complete=False, meter=None,
                   lane=None, spec: TaskSpec | None = None) -> np.ndarray:
    """Angle records [N, 50].  complete=False ignores xi (frictionless)."""
    spec = spec or get_task("pendulum")
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    v0 = np.broadcast_to(np.asarray(v0, dtype=np.float64), x0.shape)
    omega = np.broadcast_to(np.asarray(omega, dtype=np.float64), x0.shape)
    n = x0.shape[0]
    if complete:
        if xi is None:
            raise ValueError("complete pendulum model needs xi")
        xi_arr = np.broadcast_to(np.asarray(xi, dtype=np.float64), x0.shape).copy()
    else:
        xi_arr = np.zeros(n)
    _charge(meter, complete, n)
    s0 = np.column_stack([x0, v0])
    sim = accel.resolve("pendulum_sim", lane)
    out = sim(s0, omega.copy(), xi_arr, spec.dt_solver, spec.n_steps,
              spec.record_every)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("pendulum simulation blew up")
    return out


def advdiff_initial(c, spec: TaskSpec | None = None) -> np.ndarray:
    """T(0, s) = c sin(pi s / 2) on the even grid, clamped ends."""
    spec = spec or get_task("advdiff")
    G = spec.extra["grid"]
    s = np.linspace(0.0, spec.extra["s_max"], G)
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    T0 = c[:, None] * np.sin(np.pi * s / 2.0)[None, :]
    T0[:, 0] = 0.0
    T0[:, -1] = 0.0
    return T0


def advdiff_batch(T0, alpha, beta=None, complete=False, method="rk4",
                  meter=None, lane=None, spec: TaskSpec | None = None) -> np.ndarray:
    """Field records [N, 50, 20].  complete=False drops the advection term."""
    spec = spec or get_task("advdiff")
    T0 = np.asarray(T0, dtype=np.float64)
    if T0.ndim == 1:
        T0 = T0[None, :]
    n, G = T0.shape
    if G != spec.extra["grid"]:
        raise ValueError(f"expected {spec.extra['grid']}-point grid, got {G}")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (n,)).copy()
    if complete:
        if beta is None:
            raise ValueError("complete advection-diffusion model needs beta")
        beta_arr = np.broadcast_to(np.asarray(beta, dtype=np.float64), (n,)).copy()
    else:
        beta_arr = np.zeros(n)
    ds = spec.extra["s_max"] / (G - 1)
    if method == "euler":
        cfl = float(np.max(alpha)) * spec.dt_solver / ds**2
        if cfl > 0.5:
            warnings.warn(f"advection-diffusion CFL number {cfl:.3f} > 0.5 "
                          "with Euler stepping", RuntimeWarning)
    _charge(meter, complete, n)
    sim = accel.resolve("advdiff_sim", lane)
    out = sim(T0.copy(), alpha, beta_arr, 1.0 / ds**2, 1.0 / ds,
              spec.dt_solver, spec.n_steps, spec.record_every,
              method == "euler")
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("advection-diffusion simulation blew up")
    return out


def reactdiff_batch(uv0, a, b, k_rd=None, complete=False, meter=None,
                    lane=None, spec: TaskSpec | None = None) -> np.ndarray:
    """Field records [N, 15, 2, G, G].  complete=False drops the k offset."""
    spec = spec or get_task("reactdiff")
    uv0 = np.asarray(uv0, dtype=np.float64)
    if uv0.ndim == 3:
        uv0 = uv0[None]
    n = uv0.shape[0]
    G = uv0.shape[2]
    if uv0.shape[1:] != spec.state_shape:
        raise ValueError(f"expected state shape {spec.state_shape}, got {uv0.shape[1:]}")
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), (n,)).copy()
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), (n,)).copy()
    if complete:
        if k_rd is None:
            raise ValueError("complete reaction-diffusion model needs k_rd")
        k_arr = np.broadcast_to(np.asarray(k_rd, dtype=np.float64), (n,)).copy()
    else:
        k_arr = np.zeros(n)
    dx = 1.0 / G
    _charge(meter, complete, n)
    sim = accel.resolve("reactdiff_sim", lane)
    out = sim(uv0.copy(), a, b, k_arr, 1.0 / dx**2, spec.dt_solver,
              spec.n_steps, spec.record_every)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("reaction-diffusion simulation blew up")
    return out


# ---------------------------------------------------------------------------
# single-record API
# ---------------------------------------------------------------------------

@dataclass
class PendulumParams:
    omega: float
    x0: float
    v0: float = 0.0
    xi: float | None = None

    def validate(self):
        if not (0.785 - 1e-9 <= self.omega <= 3.14 + 1e-9):
            raise ValueError(f"omega {self.omega} outside [0.785, 3.14]")
        if not (-1.57 - 1e-9 <= self.x0 <= 1.57 + 1e-9):
            raise ValueError(f"x0 {self.x0} outside [-1.57, 1.57]")


@dataclass
class AdvDiffParams:
    alpha: float
    c: float
    beta: float | None = None

    def validate(self):
        if not (1e-2 - 1e-12 <= self.alpha <= 1e-1 + 1e-12):
            raise ValueError(f"alpha {self.alpha} outside [1e-2, 1e-1]")
        if not (0.5 - 1e-9 <= self.c <= 1.5 + 1e-9):
            raise ValueError(f"c {self.c} outside [0.5, 1.5]")


@dataclass
class ReactDiffParams:
    a: float
    b: float
    uv0: np.ndarray
    k_rd: float | None = None

    def validate(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("diffusion coefficients must be positive")
        if not np.all(np.isfinite(self.uv0)):
            raise ValueError("initial fields must be finite")


def _wrap(states, spec: TaskSpec) -> Trajectory:
    return Trajectory(states=states, dt_record=spec.dt_record,
                      dt_solver=spec.dt_solver)


def simulate_pendulum(p: PendulumParams, complete: bool, meter=None,
                      lane=None) -> Trajectory:
    p.validate()
    spec = get_task("pendulum")
    out = pendulum_batch([p.x0], [p.v0], [p.omega], None if p.xi is None else [p.xi],
                         complete=complete, meter=meter, lane=lane, spec=spec)
    return _wrap(out[0][:, None], spec)  # [50, 1] recorded angle


def simulate_advdiff(p: AdvDiffParams, complete: bool, method="rk4",
                     meter=None, lane=None) -> Trajectory:
    p.validate()
    spec = get_task("advdiff")
    T0 = advdiff_initial([p.c], spec)
    out = advdiff_batch(T0, [p.alpha], None if p.beta is None else [p.beta],
                        complete=complete, method=method, meter=meter,
                        lane=lane, spec=spec)
    return _wrap(out[0], spec)


def simulate_reactdiff(p: ReactDiffParams, complete: bool, meter=None,
                       lane=None, grid=None) -> Trajectory:
    p.validate()
    spec = get_task("reactdiff", grid=grid)
    out = reactdiff_batch(p.uv0[None], [p.a], [p.b],
                          None if p.k_rd is None else [p.k_rd],
                          complete=complete, meter=meter, lane=lane, spec=spec)
    return _wrap(out[0], spec)
