"""Purely data-driven baselines: trajectory in, trajectory out.

No physics term anywhere; the source trajectory x is the input.  All three
are residual (last layer zero-initialized, output added to x) so training
starts from the identity map.
"""

from __future__ import annotations

import numpy as np

from .. import diffengine as de
from ..diffengine import ParamStore
from ..physics.tasks import TaskSpec
from .convops import conv1d_taps, conv2d_taps_periodic, tile_channels
from .encoder import ThetaEncoder, xavier
from .latent import LatentSpec


def _sigmoid(x):
    return de.scale(de.add(de.tanh(de.scale(x, 0.5)), de.constant(1.0)), 0.5)


class _BlackBoxBase:
    def __init__(self, task_spec: TaskSpec, latent: LatentSpec, emb_dim):
        self.spec = task_spec
        self.latent = latent
        self.emb_dim = emb_dim
        self.store = ParamStore()

    def _check_z(self, B, z):
        if self.latent.kind == "none":
            return np.zeros((B, 0))
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (B, self.latent.dim):
            raise ValueError(f"z shape {z.shape} != ({B}, {self.latent.dim})")
        return z

    def arch(self) -> dict:
        return {
            "family": "bb",
            "task": self.spec.name,
            "grid": self.spec.extra.get("grid"),
            "emb_dim": self.emb_dim,
            "hidden": self.hidden,
            "latent": self.latent.to_config(),
        }


class BlackBoxPendulum(_BlackBoxBase):
    """GRU over the 50 recorded angles; theta embedding and z join every
    step input; residual scalar head."""

    def __init__(self, task_spec, rng, latent=LatentSpec(), emb_dim=8, hidden=48):
        super().__init__(task_spec, latent, emb_dim)
        self.hidden = hidden
        self.encoder = ThetaEncoder(task_spec, self.store, rng, emb_dim=emb_dim)
        d_in = 1 + emb_dim + latent.dim + hidden
        for gate in ("z", "r", "h"):
            self.store.create(f"bb.W{gate}", xavier(rng, d_in, hidden))
            self.store.create(f"bb.b{gate}", np.zeros(hidden))
        self.store.create("bb.Wo", np.zeros((hidden, 1)))
        self.store.create("bb.bo", np.zeros(1))

    def forward(self, x0=None, theta=None, z=None, x=None, backend=None) -> de.Node:
        if x is None:
            raise ValueError("black-box map needs the source trajectory x")
        x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        B, L = x.shape
        zv = self._check_z(B, z if z is not None else np.zeros((B, 0)))
        emb = self.encoder.forward(theta)
        z_node = de.constant(zv) if zv.shape[1] else None
        Wz, bz = self.store["bb.Wz"], self.store["bb.bz"]
        Wr, br = self.store["bb.Wr"], self.store["bb.br"]
        Wh, bh = self.store["bb.Wh"], self.store["bb.bh"]
        Wo, bo = self.store["bb.Wo"], self.store["bb.bo"]
        h = de.constant(np.zeros((B, self.hidden)))
        x_node = de.constant(x)
        outs = []
        for t in range(L):
            xt = x_node[:, t:t + 1]
            parts = [xt, emb] + ([z_node] if z_node is not None else [])
            i_t = de.concat(parts, axis=1)
            ih = de.concat([i_t, h], axis=1)
            g_z = _sigmoid(de.add(de.matmul(ih, Wz), bz))
            g_r = _sigmoid(de.add(de.matmul(ih, Wr), br))
            ih_r = de.concat([i_t, de.mul(g_r, h)], axis=1)
            h_new = de.tanh(de.add(de.matmul(ih_r, Wh), bh))
            h = de.add(de.mul(g_z, h), de.mul(de.sub(de.constant(1.0), g_z), h_new))
            outs.append(de.add(xt, de.add(de.matmul(h, Wo), bo)))
        return de.concat(outs, axis=1)


class BlackBoxAdvDiff(_BlackBoxBase):
    """Residual conv stack along the time axis with the 20 grid points as
    channels; theta embedding and z enter as constant channels."""

    def __init__(self, task_spec, rng, latent=LatentSpec(), emb_dim=8, hidden=32):
        super().__init__(task_spec, latent, emb_dim)
        self.hidden = hidden
        self.encoder = ThetaEncoder(task_spec, self.store, rng, emb_dim=emb_dim)
        G = task_spec.extra["grid"]
        c_in = G + emb_dim + latent.dim
        self.store.create("bb.w1", xavier(rng, 3 * c_in, hidden))
        self.store.create("bb.c1", np.zeros(hidden))
        self.store.create("bb.w2", xavier(rng, 3 * hidden, hidden))
        self.store.create("bb.c2", np.zeros(hidden))
        self.store.create("bb.w3", np.zeros((3 * hidden, G)))
        self.store.create("bb.c3", np.zeros(G))

    def forward(self, x0=None, theta=None, z=None, x=None, backend=None) -> de.Node:
        if x is None:
            raise ValueError("black-box map needs the source trajectory x")
        x = np.asarray(x, dtype=np.float64)
        spec = self.spec
        B = x.shape[0]
        L, G = spec.obs_shape
        x = x.reshape(B, L, G)
        zv = self._check_z(B, z if z is not None else np.zeros((B, 0)))
        emb = self.encoder.forward(theta)
        chans = [de.constant(x), tile_channels(emb, (L,))]
        if zv.shape[1]:
            chans.append(tile_channels(de.constant(zv), (L,)))
        h = de.concat(chans, axis=2)
        c_in = h.value.shape[2]
        h = de.tanh(de.add(conv1d_taps(h, self.store["bb.w1"], c_in), self.store["bb.c1"]))
        h = de.tanh(de.add(conv1d_taps(h, self.store["bb.w2"], self.hidden), self.store["bb.c2"]))
        out = de.add(conv1d_taps(h, self.store["bb.w3"], self.hidden), self.store["bb.c3"])
        return de.reshape(de.add(de.constant(x), out), (B, spec.obs_size))


class BlackBoxReactDiff(_BlackBoxBase):
    """Residual 2-D conv stack over the grid; the 15x2 recorded frames are
    the channel axis."""

    def __init__(self, task_spec, rng, latent=LatentSpec(), emb_dim=8, hidden=16):
        super().__init__(task_spec, latent, emb_dim)
        self.hidden = hidden
        self.encoder = ThetaEncoder(task_spec, self.store, rng, emb_dim=emb_dim)
        c_frames = task_spec.obs_shape[0] * task_spec.obs_shape[1]
        c_in = c_frames + emb_dim + latent.dim
        self.store.create("bb.w1", xavier(rng, 9 * c_in, hidden))
        self.store.create("bb.c1", np.zeros(hidden))
        self.store.create("bb.w2", np.zeros((9 * hidden, c_frames)))
        self.store.create("bb.c2", np.zeros(c_frames))

    def forward(self, x0=None, theta=None, z=None, x=None, backend=None) -> de.Node:
        if x is None:
            raise ValueError("black-box map needs the source trajectory x")
        x = np.asarray(x, dtype=np.float64)
        spec = self.spec
        B = x.shape[0]
        Tn, C, G, _ = spec.obs_shape
        frames = Tn * C
        x = x.reshape(B, frames, G, G)
        zv = self._check_z(B, z if z is not None else np.zeros((B, 0)))
        emb = self.encoder.forward(theta)
        # to channels-last [B, G, G, frames]
        chans = [de.reshape(de.constant(x[:, f]), (B, G, G, 1)) for f in range(frames)]
        chans.append(tile_channels(emb, (G, G)))
        if zv.shape[1]:
            chans.append(tile_channels(de.constant(zv), (G, G)))
        h = de.concat(chans, axis=3)
        c_in = h.value.shape[3]
        h = de.tanh(de.add(conv2d_taps_periodic(h, self.store["bb.w1"], c_in),
                           self.store["bb.c1"]))
        out = de.add(conv2d_taps_periodic(h, self.store["bb.w2"], self.hidden),
                     self.store["bb.c2"])
        # back to [B, frames * G * G], frame-major like the observable
        pieces = [de.reshape(out[:, :, :, f:f + 1], (B, 1, G * G)) for f in range(frames)]
        res = de.reshape(de.concat(pieces, axis=1), (B, spec.obs_size))
        return de.add(de.constant(x.reshape(B, spec.obs_size)), res)
