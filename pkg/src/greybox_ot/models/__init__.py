"""Model zoo: grey-box neural-ODE maps, black-box baselines, critics."""

from __future__ import annotations

import numpy as np

from ..physics.tasks import get_task
from .blackbox import BlackBoxAdvDiff, BlackBoxPendulum, BlackBoxReactDiff
from .critic import CriticMLP
from .encoder import ThetaEncoder, xavier
from .greybox import GreyBoxMap, oracle_greybox
from .latent import LatentSpec

_BB = {
    "pendulum": BlackBoxPendulum,
    "advdiff": BlackBoxAdvDiff,
    "reactdiff": BlackBoxReactDiff,
}


def make_generator(task, family, rng, latent=None, grid=None, **kw):
    """family 'gb' or 'bb'; latent None -> deterministic map."""
    spec = get_task(task, grid=grid) if isinstance(task, str) else task
    latent = latent or LatentSpec()
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if family == "gb":
        return GreyBoxMap(spec, rng, latent=latent, **kw)
    if family == "bb":
        return _BB[spec.name](spec, rng, latent=latent, **kw)
    raise ValueError(f"unknown generator family {family!r}")


def generator_from_arch(arch: dict, rng=0):
    latent = LatentSpec.from_config(arch.get("latent"))
    kw = {"emb_dim": arch.get("emb_dim", 8)}
    if arch["family"] == "gb":
        kw["hidden"] = arch.get("hidden", 64)
        kw["conv_filters"] = arch.get("conv_filters", 4)
    else:
        kw["hidden"] = arch.get("hidden", 48)
    return make_generator(arch["task"], arch["family"], rng, latent=latent,
                          grid=arch.get("grid"), **kw)


def make_critic(task, rng, hidden=(250, 100, 100, 50), grid=None):
    spec = get_task(task, grid=grid) if isinstance(task, str) else task
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    return CriticMLP(spec.obs_size, rng, hidden=hidden)


def critic_from_arch(arch: dict, task, rng=0, grid=None):
    return make_critic(task, rng, hidden=tuple(arch.get("hidden", (250, 100, 100, 50))),
                       grid=grid)


__all__ = [
    "LatentSpec", "ThetaEncoder", "CriticMLP", "GreyBoxMap", "oracle_greybox",
    "BlackBoxPendulum", "BlackBoxAdvDiff", "BlackBoxReactDiff",
    "make_generator", "generator_from_arch", "make_critic", "critic_from_arch",
    "xavier",
]
