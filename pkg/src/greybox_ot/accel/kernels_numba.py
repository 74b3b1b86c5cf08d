"""Numba lane: the kernels from kernels_src compiled with @njit.

Compilation results are cached on disk, so the cost is paid once per
machine, not once per process.
"""

from numba import njit

from . import kernels_src as _src


def _jit(fn):
    return njit(cache=True, nogil=True, fastmath=False)(fn)


pendulum_sim = _jit(_src.pendulum_sim)
advdiff_rhs = _jit(_src.advdiff_rhs)
advdiff_sim = _jit(_src.advdiff_sim)
periodic_lap = _jit(_src.periodic_lap)
reactdiff_sim = _jit(_src.reactdiff_sim)
pendulum_rollout_fwd = _jit(_src.pendulum_rollout_fwd)
pendulum_rollout_bwd = _jit(_src.pendulum_rollout_bwd)
