"""Task registry: state layouts, solver steps, prior ranges, DGP latents.

Three benchmark systems, each with an incomplete model (the term carried by
``latent_name`` is dropped) and a complete data-generating model:

  pendulum   d2x/dt2 = -omega^2 sin x - xi dx/dt          (missing: xi)
  advdiff    dT/dt   = alpha T_ss - beta T_s              (missing: beta)
  reactdiff  du/dt   = a lap u + u - u^3 - v - k_rd       (missing: k_rd)
             dv/dt   = b lap v + u - v

Observables: pendulum records the angle only; the PDE tasks record the full
field.  Records start one dt_record after t0; the initial condition is part
of the task input, not the observable.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class TaskSpec:
    name: str
    theta_names: tuple[str, ...]
    theta_ranges: tuple[tuple[float, float], ...]
    latent_name: str              # DGP-only parameter of the missing term
    latent_fixed: float           # deterministic (one-to-one) DGP value
    latent_range: tuple[float, float]
    dt_solver: float
    record_every: int             # solver steps between records
    n_records: int
    obs_shape: tuple[int, ...]    # recorded trajectory shape
    state_shape: tuple[int, ...]  # instantaneous state shape
    extra: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.record_every * self.n_records

    @property
    def dt_record(self) -> float:
        return self.dt_solver * self.record_every

    @property
    def obs_size(self) -> int:
        n = 1
        for d in self.obs_shape:
            n *= d
        return n

    @property
    def theta_dim(self) -> int:
        return len(self.theta_names)


PENDULUM = TaskSpec(
    name="pendulum",
    theta_names=("omega",),
    theta_ranges=((0.785, 3.14),),
    latent_name="xi",
    latent_fixed=1.2,
    latent_range=(0.6, 1.5),
    dt_solver=0.1,
    record_every=10,
    n_records=50,
    obs_shape=(50,),
    state_shape=(2,),
    extra={"x0_range": (-1.57, 1.57), "v0": 0.0},
)

ADVDIFF = TaskSpec(
    name="advdiff",
    theta_names=("alpha",),
    theta_ranges=((1e-2, 1e-1),),
    latent_name="beta",
    latent_fixed=0.1,
    latent_range=(1e-2, 0.1),
    dt_solver=0.02,
    record_every=1,
    n_records=50,
    obs_shape=(50, 20),
    state_shape=(20,),
    # 20-point even grid on s in [0, 2]; T=0 clamped at both ends;
    # T(0, s) = c sin(pi s / 2) with amplitude c ~ U(0.5, 1.5).
    extra={"grid": 20, "s_max": 2.0, "c_range": (0.5, 1.5)},
)


def _reactdiff_spec(grid: int) -> TaskSpec:
    # explicit RK4 stability: lambda_max ~ 8 a / dx^2 with a <= 5e-3
    dt = 0.2 if grid <= 16 else 0.05
    rec = int(round(1.0 / dt))
    return TaskSpec(
        name="reactdiff",
        theta_names=("a", "b"),
        theta_ranges=((1e-3, 5e-3), (1e-3, 5e-3)),
        latent_name="k_rd",
        latent_fixed=0.05,
        latent_range=(0.0, 0.1),
        dt_solver=dt,
        record_every=rec,
        n_records=15,
        obs_shape=(15, 2, grid, grid),
        state_shape=(2, grid, grid),
        extra={"grid": grid, "init_amp": 0.1, "smooth_passes": 2},
    )


REACTDIFF = _reactdiff_spec(16)

TASKS = {
    "pendulum": PENDULUM,
    "advdiff": ADVDIFF,
    "reactdiff": REACTDIFF,
}


def get_task(name: str, grid: int | None = None) -> TaskSpec:
    if name == "reactdiff" and grid not in (None, 16):
        return _reactdiff_spec(grid)
    try:
        return TASKS[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}") from None
