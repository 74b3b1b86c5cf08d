"""Prior samplers for initial conditions, physics parameters and the
DGP-only latent of the missing term."""

from __future__ import annotations

import numpy as np

from .simulators import advdiff_initial
from .tasks import TaskSpec, get_task


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def sample_prior(task, rng, n=1, spec: TaskSpec | None = None):
    """Draw (initial-state [n, *state_shape], theta {name: [n]}).

    Uniform over the documented ranges; the draw order (theta first, then
    the initial condition) is fixed so results are reproducible per seed.
    """
    spec = spec or (task if isinstance(task, TaskSpec) else get_task(task))
    rng = as_rng(rng)
    theta = {}
    for name, (lo, hi) in zip(spec.theta_names, spec.theta_ranges):
        theta[name] = rng.uniform(lo, hi, size=n)
    if spec.name == "pendulum":
        lo, hi = spec.extra["x0_range"]
        ang = rng.uniform(lo, hi, size=n)
        vel = np.full(n, spec.extra["v0"])
        state = np.column_stack([ang, vel])
    elif spec.name == "advdiff":
        lo, hi = spec.extra["c_range"]
        c = rng.uniform(lo, hi, size=n)
        state = advdiff_initial(c, spec)
    elif spec.name == "reactdiff":
        G = spec.extra["grid"]
        amp = spec.extra["init_amp"]
        state = rng.uniform(-amp, amp, size=(n, 2, G, G))
        for _ in range(spec.extra["smooth_passes"]):
            state = (state
                     + np.roll(state, 1, axis=2) + np.roll(state, -1, axis=2)
                     + np.roll(state, 1, axis=3) + np.roll(state, -1, axis=3)) / 5.0
    else:
        raise ValueError(f"unknown task {spec.name!r}")
    return state, theta


def default_dgp(spec: TaskSpec) -> dict:
    return {"kind": "fixed", "value": spec.latent_fixed}


def sample_latent(dgp: dict, spec: TaskSpec, rng, n=1) -> np.ndarray:
    """Draw the missing-term parameter for the complete model.

    kinds: fixed {value}; two_point {values: [v1, v2], weights: [w1, w2]};
    uniform {low, high}.
    """
    rng = as_rng(rng)
    kind = dgp.get("kind", "fixed")
    if kind == "fixed":
        return np.full(n, float(dgp.get("value", spec.latent_fixed)))
    if kind == "two_point":
        values = np.asarray(dgp["values"], dtype=np.float64)
        weights = np.asarray(dgp.get("weights", [0.5, 0.5]), dtype=np.float64)
        idx = rng.choice(len(values), size=n, p=weights / weights.sum())
        return values[idx]
    if kind == "uniform":
        lo = float(dgp.get("low", spec.latent_range[0]))
        hi = float(dgp.get("high", spec.latent_range[1]))
        return rng.uniform(lo, hi, size=n)
    raise ValueError(f"unknown dgp kind {kind!r}")
