"""Latent-noise specification for stochastic (one-to-many) maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LatentSpec:
    """kind 'none' is the deterministic mode (gamma = 0); 'categorical'
    draws one-hot atoms, 'uniform' draws U(-1, 1)^dim."""

    kind: str = "none"
    dim: int = 0
    probs: tuple = field(default=())

    def __post_init__(self):
        if self.kind == "none" and self.dim != 0:
            raise ValueError("deterministic latent must have dim 0")
        if self.kind == "categorical":
            if not self.probs:
                raise ValueError("categorical latent needs atom probabilities")
            if self.dim != len(self.probs):
                raise ValueError("categorical dim must equal number of atoms")
        if self.kind not in ("none", "uniform", "categorical"):
            raise ValueError(f"unknown latent kind {self.kind!r}")

    def sample(self, rng, n) -> np.ndarray:
        if self.kind == "none":
            return np.zeros((n, 0))
        if self.kind == "uniform":
            return rng.uniform(-1.0, 1.0, size=(n, self.dim))
        p = np.asarray(self.probs, dtype=np.float64)
        idx = rng.choice(self.dim, size=n, p=p / p.sum())
        out = np.zeros((n, self.dim))
        out[np.arange(n), idx] = 1.0
        return out

    def to_config(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "probs": list(self.probs)}

    @staticmethod
    def from_config(cfg) -> "LatentSpec":
        if cfg is None:
            return LatentSpec()
        return LatentSpec(kind=cfg.get("kind", "none"),
                          dim=int(cfg.get("dim", 0)),
                          probs=tuple(cfg.get("probs", ())))
