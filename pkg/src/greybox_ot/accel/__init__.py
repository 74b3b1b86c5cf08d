"""Kernel lane selection.

The hot inner loops (simulators, fused pendulum rollout) exist twice: a
plain numpy fallback (`kernels_src`) and a numba-compiled lane
(`kernels_numba`).  ``GREYBOX_OT_NUMBA`` picks the lane:

    unset / "auto"  -> numba when importable, else numpy
    "1" / "on"      -> numba (raises if numba is unavailable)
    "0" / "off"     -> numpy

Both lanes implement the same float64 math in the same operation order;
they agree to ~1 ulp (libm differences only).  Results are deterministic
within a lane.
"""

from __future__ import annotations

import os

from . import kernels_src

_TRUTHY = ("1", "on", "true", "yes")
_FALSY = ("0", "off", "false", "no")


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def default_lane() -> str:
    env = os.environ.get("GREYBOX_OT_NUMBA", "auto").lower()
    if env in _FALSY:
        return "numpy"
    if env in _TRUTHY:
        if not _numba_available():
            raise RuntimeError("GREYBOX_OT_NUMBA is set but numba is not importable")
        return "numba"
    return "numba" if _numba_available() else "numpy"


def available_lanes() -> tuple[str, ...]:
    return ("numpy", "numba") if _numba_available() else ("numpy",)


def kernels(lane: str | None = None):
    """Return the kernel namespace for a lane (default: env-selected)."""
    lane = lane or default_lane()
    if lane == "numpy":
        return kernels_src
    if lane == "numba":
        from . import kernels_numba
        return kernels_numba
    raise ValueError(f"unknown kernel lane {lane!r}")


# Measured per-kernel winners (see benchmarks/bench_kernels.py): the
# simulators are loop-bound and win under numba; the fused rollout is
# BLAS/libm-bound and the numpy lane wins.  "auto" uses this mix; forcing
# the env flag selects one lane for everything.
_AUTO_PREF = {
    "pendulum_sim": "numba",
    "advdiff_sim": "numba",
    "reactdiff_sim": "numba",
    "advdiff_rhs": "numba",
    "periodic_lap": "numba",
    "pendulum_rollout_fwd": "numpy",
    "pendulum_rollout_bwd": "numpy",
}


def resolve(name: str, lane: str | None = None):
    """Resolve one kernel by name honoring the lane selection."""
    if lane is None:
        env = os.environ.get("GREYBOX_OT_NUMBA", "auto").lower()
        if env in _FALSY:
            lane = "numpy"
        elif env in _TRUTHY:
            lane = "numba"
        else:
            lane = _AUTO_PREF.get(name, "numpy")
            if lane == "numba" and not _numba_available():
                lane = "numpy"
    return getattr(kernels(lane), name)


def warmup(lane: str | None = None):
    """Trigger jit compilation of the hot kernels on tiny inputs."""
    import numpy as np

    k = kernels(lane)
    one = np.ones(1)
    s0 = np.zeros((1, 2))
    k.pendulum_sim(s0, one, one, 0.1, 2, 1)
    k.advdiff_sim(np.zeros((1, 6)), one * 0.05, one * 0.0, 1.0, 1.0, 0.01, 2, 1, False)
    k.advdiff_sim(np.zeros((1, 6)), one * 0.05, one * 0.0, 1.0, 1.0, 0.01, 2, 1, True)
    k.reactdiff_sim(np.zeros((1, 2, 4, 4)), one, one, one, 1.0, 0.01, 2, 1)
    emb = np.zeros((1, 2))
    z0 = np.zeros((1, 0))
    W1 = np.zeros((4 + 2, 3))
    b1 = np.zeros(3)
    W2 = np.zeros((3 + 2, 3))
    b2 = np.zeros(3)
    W3 = np.zeros((3, 1))
    b3 = np.zeros(1)
    traj, store = k.pendulum_rollout_fwd(s0, one, emb, z0, W1, b1, W2, b2, W3,
                                         b3, 0.1, 2, 1)
    k.pendulum_rollout_bwd(np.ones_like(traj), store, one, emb, z0, W1, b1,
                           W2, b2, W3, b3, 0.1, 1)
    return k
