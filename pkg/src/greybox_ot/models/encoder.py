"""Learnable encoder of the conditional physics parameters.

The embedding is concatenated into the input of each hidden layer of the
correction / black-box networks.  Raw parameters are affinely mapped to
[-1, 1] using the prior ranges before the MLP.
"""

from __future__ import annotations

import numpy as np

from .. import diffengine as de


def xavier(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class ThetaEncoder:
    def __init__(self, task_spec, store, rng, emb_dim=8, hidden=16,
                 prefix="enc."):
        self.spec = task_spec
        self.emb_dim = emb_dim
        p = task_spec.theta_dim
        lo = np.array([r[0] for r in task_spec.theta_ranges])
        hi = np.array([r[1] for r in task_spec.theta_ranges])
        self._shift = (lo + hi) / 2.0
        self._scale = 2.0 / (hi - lo)
        self.W0 = store.create(prefix + "W0", xavier(rng, p, hidden))
        self.b0 = store.create(prefix + "b0", np.zeros(hidden))
        self.W1 = store.create(prefix + "W1", xavier(rng, hidden, emb_dim))
        self.b1 = store.create(prefix + "b1", np.zeros(emb_dim))

    def forward(self, theta: np.ndarray) -> de.Node:
        """theta [B, P] raw parameter values -> embedding node [B, E]."""
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        norm = (theta - self._shift) * self._scale
        x = de.constant(norm)
        h = de.tanh(de.add(de.matmul(x, self.W0), self.b0))
        return de.add(de.matmul(h, self.W1), self.b1)
