"""Generic fixed-step ODE integration (RK4 / forward Euler)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Trajectory:
    """A recorded rollout: [n_records, *state_shape] plus grid metadata.

    Records start at t0 + dt_record; the initial state is not a record.
    """

    states: np.ndarray
    dt_record: float
    dt_solver: float
    t0: float = 0.0

    @property
    def n_records(self) -> int:
        return self.states.shape[0]

    def times(self) -> np.ndarray:
        return self.t0 + self.dt_record * np.arange(1, self.n_records + 1)


def integrate(rhs, y0, t_span, dt_solver, dt_record, method="rk4") -> Trajectory:
    """Step an autonomous system dy/dt = rhs(y) and record periodically.

    dt_record must be an integer multiple of dt_solver; t_span = (t0, t1)
    must cover a whole number of records.  Raises FloatingPointError when
    the state stops being finite (blow-up).
    """
    if method not in ("rk4", "euler"):
        raise ValueError(f"unknown method {method!r}")
    t0, t1 = t_span
    ratio = dt_record / dt_solver
    record_every = int(round(ratio))
    if record_every < 1 or abs(ratio - record_every) > 1e-9:
        raise ValueError("dt_record must be an integer multiple of dt_solver")
    total = (t1 - t0) / dt_solver
    n_steps = int(round(total))
    if abs(total - n_steps) > 1e-6:
        raise ValueError("t_span must cover a whole number of solver steps")
    n_records = n_steps // record_every

    y = np.array(y0, dtype=np.float64)
    out = np.empty((n_records,) + y.shape)
    r = 0
    for t in range(n_steps):
        if method == "euler":
            y = y + dt_solver * np.asarray(rhs(y))
        else:
            k1 = np.asarray(rhs(y))
            k2 = np.asarray(rhs(y + (0.5 * dt_solver) * k1))
            k3 = np.asarray(rhs(y + (0.5 * dt_solver) * k2))
            k4 = np.asarray(rhs(y + dt_solver * k3))
            y = y + (dt_solver / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"integration blew up at step {t + 1}")
        if (t + 1) % record_every == 0:
            out[r] = y
            r += 1
    return Trajectory(states=out, dt_record=dt_record, dt_solver=dt_solver, t0=t0)
