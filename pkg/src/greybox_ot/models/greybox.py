"""Grey-box conditional map: incomplete physics + learned correction,
integrated by the same discretized solver that generated the data, with
backprop through the unrolled steps.

The correction network receives (state, f_p output, theta embedding, z) and
its output layer starts at zero, so a fresh map reproduces the incomplete
simulator exactly.  ``correction='oracle'`` swaps the network for the true
missing term (component-analysis harness).

The pendulum map has two interchangeable backends: ``graph`` builds the
rollout from autodiff primitives; ``fused`` runs the accel kernel pair
(forward + hand-written BPTT) as a single graph node.  The PDE maps use the
graph backend.
"""

from __future__ import annotations

import numpy as np

from .. import accel
from .. import diffengine as de
from ..diffengine import ParamStore
from ..diffengine.engine import EXTRA_BACKWARD
from ..physics.tasks import TaskSpec, get_task
from .convops import conv1d_taps, conv2d_taps_periodic, tile_channels
from .encoder import ThetaEncoder, xavier
from .latent import LatentSpec


# ---------------------------------------------------------------------------
# fused pendulum rollout as a custom graph node
# ---------------------------------------------------------------------------

def _bw_pendulum_rollout(node, g):
    aux = node.aux
    emb_node = node.parents[0]
    W = [p.value for p in node.parents[1:]]
    bwd = aux["bwd"]
    grads = bwd(np.ascontiguousarray(g.value), aux["s_store"], aux["omega"],
                emb_node.value, aux["z"], W[0], W[1], W[2], W[3], W[4], W[5],
                aux["dt"], aux["record_every"])
    gW1, gb1, gW2, gb2, gW3, gb3, gemb = grads
    out = [(emb_node, de.constant(gemb))]
    for parent, grad in zip(node.parents[1:], (gW1, gb1, gW2, gb2, gW3, gb3)):
        out.append((parent, de.constant(grad)))
    return tuple(out)


EXTRA_BACKWARD["pendulum_rollout"] = _bw_pendulum_rollout


class GreyBoxMap:
    def __init__(self, task_spec: TaskSpec, rng, latent: LatentSpec = LatentSpec(),
                 emb_dim=8, hidden=64, conv_filters=4, correction="network"):
        self.spec = task_spec
        self.latent = latent
        self.emb_dim = emb_dim
        self.hidden = hidden
        self.conv_filters = conv_filters
        self.correction = correction
        self.oracle_value = None
        self.store = ParamStore()
        self.encoder = ThetaEncoder(task_spec, self.store, rng, emb_dim=emb_dim)
        E, Zd = emb_dim, latent.dim
        if task_spec.name == "pendulum":
            d_in = 4 + E + Zd
            self.store.create("phi.W1", xavier(rng, d_in, hidden))
            self.store.create("phi.b1", np.zeros(hidden))
            self.store.create("phi.W2", xavier(rng, hidden + E, hidden))
            self.store.create("phi.b2", np.zeros(hidden))
            self.store.create("phi.W3", np.zeros((hidden, 1)))
            self.store.create("phi.b3", np.zeros(1))
        elif task_spec.name == "advdiff":
            c_in = 2 + E + Zd
            F = conv_filters
            self.store.create("phi.w1", xavier(rng, 3 * c_in, F))
            self.store.create("phi.c1", np.zeros(F))
            self.store.create("phi.w2", np.zeros((3 * F, 1)))
            self.store.create("phi.c2", np.zeros(1))
        elif task_spec.name == "reactdiff":
            c_in = 4 + E + Zd
            F = conv_filters
            self.store.create("phi.w1", xavier(rng, 9 * c_in, F))
            self.store.create("phi.c1", np.zeros(F))
            self.store.create("phi.w2", np.zeros((9 * F, 2)))
            self.store.create("phi.c2", np.zeros(2))
        else:
            raise ValueError(f"unknown task {task_spec.name!r}")

    # -- plumbing ---------------------------------------------------------

    def arch(self) -> dict:
        return {
            "family": "gb",
            "task": self.spec.name,
            "grid": self.spec.extra.get("grid"),
            "emb_dim": self.emb_dim,
            "hidden": self.hidden,
            "conv_filters": self.conv_filters,
            "latent": self.latent.to_config(),
        }

    def set_oracle(self, value: float):
        """Replace the learned correction with the true missing term."""
        self.correction = "oracle"
        self.oracle_value = float(value)
        return self

    def _check_z(self, B, z):
        if self.latent.kind == "none":
            return np.zeros((B, 0))
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (B, self.latent.dim):
            raise ValueError(f"z shape {z.shape} != ({B}, {self.latent.dim})")
        return z

    def forward(self, x0, theta, z=None, x=None, backend=None) -> de.Node:
        """x0 [B, *state], theta [B, P], z [B, Zd] -> node [B, obs_size]."""
        x0 = np.asarray(x0, dtype=np.float64)
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        B = x0.shape[0]
        z = self._check_z(B, z if z is not None else np.zeros((B, 0)))
        if backend is None:
            backend = ("fused" if self.spec.name == "pendulum"
                       and self.correction == "network" else "graph")
        if self.spec.name == "pendulum":
            if backend == "fused" and self.correction == "network":
                return self._pendulum_fused(x0, theta, z)
            return self._pendulum_graph(x0, theta, z)
        if backend != "graph":
            raise ValueError(f"{self.spec.name} supports the graph backend only")
        if self.spec.name == "advdiff":
            return self._advdiff_graph(x0, theta, z)
        return self._reactdiff_graph(x0, theta, z)

    def forward_values(self, x0, theta, z=None, backend=None) -> np.ndarray:
        """Forward pass values only, reshaped to the task observable."""
        out = self.forward(x0, theta, z=z, backend=backend)
        return np.asarray(out.value).reshape((len(x0),) + self.spec.obs_shape)

    # -- pendulum ----------------------------------------------------------

    def _pendulum_fused(self, x0, theta, z) -> de.Node:
        spec = self.spec
        emb = self.encoder.forward(theta)
        omega = np.ascontiguousarray(theta[:, 0])
        names = ("phi.W1", "phi.b1", "phi.W2", "phi.b2", "phi.W3", "phi.b3")
        params = [self.store[n] for n in names]
        fwd = accel.resolve("pendulum_rollout_fwd")
        bwd = accel.resolve("pendulum_rollout_bwd")
        traj, s_store = fwd(np.ascontiguousarray(x0), omega,
                            np.ascontiguousarray(emb.value),
                            np.ascontiguousarray(z),
                            *[p.value for p in params],
                            spec.dt_solver, spec.n_steps, spec.record_every)
        if not np.all(np.isfinite(traj)):
            raise FloatingPointError("grey-box rollout blew up")
        return de.Node(traj, op="pendulum_rollout", parents=(emb, *params),
                       aux={"s_store": s_store, "omega": omega, "z": z,
                            "dt": spec.dt_solver,
                            "record_every": spec.record_every, "bwd": bwd},
                       requires_grad=True)

    def _pendulum_graph(self, x0, theta, z) -> de.Node:
        spec = self.spec
        B = x0.shape[0]
        emb = self.encoder.forward(theta)
        ang = de.constant(x0[:, 0:1])
        vel = de.constant(x0[:, 1:2])
        neg_om2 = de.constant(-(theta[:, 0] ** 2)[:, None])
        z_node = de.constant(z) if z.shape[1] else None
        dt = spec.dt_solver

        if self.correction == "network":
            W1, b1 = self.store["phi.W1"], self.store["phi.b1"]
            W2, b2 = self.store["phi.W2"], self.store["phi.b2"]
            W3, b3 = self.store["phi.W3"], self.store["phi.b3"]

            def corr(a, v, fpa):
                parts = [a, v, v, fpa, emb]
                if z_node is not None:
                    parts.append(z_node)
                u = de.concat(parts, axis=1)
                h1 = de.tanh(de.add(de.matmul(u, W1), b1))
                h2 = de.tanh(de.add(de.matmul(de.concat([h1, emb], axis=1), W2), b2))
                return de.add(de.matmul(h2, W3), b3)
        else:
            neg_xi = de.constant(np.full((B, 1), -self.oracle_value))

            def corr(a, v, fpa):
                return de.mul(v, neg_xi)

        def rhs(a, v):
            fpa = de.mul(de.sin(a), neg_om2)
            return v, de.add(fpa, corr(a, v, fpa))

        records = []
        for t in range(spec.n_steps):
            k1a, k1v = rhs(ang, vel)
            k2a, k2v = rhs(de.add(ang, de.scale(k1a, 0.5 * dt)),
                           de.add(vel, de.scale(k1v, 0.5 * dt)))
            k3a, k3v = rhs(de.add(ang, de.scale(k2a, 0.5 * dt)),
                           de.add(vel, de.scale(k2v, 0.5 * dt)))
            k4a, k4v = rhs(de.add(ang, de.scale(k3a, dt)),
                           de.add(vel, de.scale(k3v, dt)))
            ang = de.add(ang, de.scale(_rk4_sum(k1a, k2a, k3a, k4a), dt / 6.0))
            vel = de.add(vel, de.scale(_rk4_sum(k1v, k2v, k3v, k4v), dt / 6.0))
            if (t + 1) % spec.record_every == 0:
                records.append(ang)
        return de.concat(records, axis=1)

    # -- advection-diffusion -----------------------------------------------

    def _advdiff_graph(self, x0, theta, z) -> de.Node:
        spec = self.spec
        B = x0.shape[0]
        G = spec.extra["grid"]
        ds = spec.extra["s_max"] / (G - 1)
        inv_ds2 = 1.0 / ds**2
        inv_ds = 1.0 / ds
        dt = spec.dt_solver
        emb = self.encoder.forward(theta)
        alpha = de.constant(theta[:, 0][:, None])
        zeros_col = de.constant(np.zeros((B, 1)))
        T = de.constant(x0)

        def fp(Tn):
            raw = de.add(de.sub(Tn[:, :G - 2], de.scale(Tn[:, 1:G - 1], 2.0)),
                         Tn[:, 2:G])
            inner = de.mul(alpha, de.scale(raw, inv_ds2))
            return de.concat([zeros_col, inner, zeros_col], axis=1)

        if self.correction == "network":
            w1, c1 = self.store["phi.w1"], self.store["phi.c1"]
            w2, c2 = self.store["phi.w2"], self.store["phi.c2"]
            E, Zd = self.emb_dim, z.shape[1]
            c_tot = 2 + E + Zd
            F = self.conv_filters
            const_chans = [tile_channels(emb, (G,))]
            if Zd:
                const_chans.append(tile_channels(de.constant(z), (G,)))
            const_in = (de.concat(const_chans, axis=2) if len(const_chans) > 1
                        else const_chans[0])
            # conditioning channels are constant along the rollout
            K1 = de.add(conv1d_taps(const_in, w1, c_tot, c_off=2), c1)
            mask = de.constant(np.concatenate([[0.0], np.ones(G - 2), [0.0]])[None, :])

            def corr(Tn, fpn):
                dyn = de.concat([de.reshape(Tn, (B, G, 1)),
                                 de.reshape(fpn, (B, G, 1))], axis=2)
                h = de.tanh(de.add(conv1d_taps(dyn, w1, c_tot, c_off=0), K1))
                out = de.add(conv1d_taps(h, w2, F, c_off=0), c2)
                return de.mul(de.reshape(out, (B, G)), mask)
        else:
            neg_beta = de.constant(np.full((B, 1), -self.oracle_value))

            def corr(Tn, fpn):
                raw = de.mul(neg_beta, de.scale(de.sub(Tn[:, 1:G - 1], Tn[:, :G - 2]),
                                                inv_ds))
                return de.concat([zeros_col, raw, zeros_col], axis=1)

        def rhs(Tn):
            f = fp(Tn)
            return de.add(f, corr(Tn, f))

        records = []
        for t in range(spec.n_steps):
            k1 = rhs(T)
            k2 = rhs(de.add(T, de.scale(k1, 0.5 * dt)))
            k3 = rhs(de.add(T, de.scale(k2, 0.5 * dt)))
            k4 = rhs(de.add(T, de.scale(k3, dt)))
            T = de.add(T, de.scale(_rk4_sum(k1, k2, k3, k4), dt / 6.0))
            if (t + 1) % spec.record_every == 0:
                records.append(de.reshape(T, (B, 1, G)))
        return de.reshape(de.concat(records, axis=1), (B, spec.obs_size))

    # -- reaction-diffusion --------------------------------------------------

    def _reactdiff_graph(self, x0, theta, z) -> de.Node:
        spec = self.spec
        B = x0.shape[0]
        G = spec.extra["grid"]
        inv_dx2 = float(G) ** 2
        dt = spec.dt_solver
        emb = self.encoder.forward(theta)
        a3 = de.constant(theta[:, 0][:, None, None])
        b3 = de.constant(theta[:, 1][:, None, None])
        u = de.constant(x0[:, 0])
        v = de.constant(x0[:, 1])

        def lap(f):
            # same shift construction and summation order as the sim kernel
            up = de.concat([f[:, 1:G, :], f[:, 0:1, :]], axis=1)
            dn = de.concat([f[:, G - 1:G, :], f[:, 0:G - 1, :]], axis=1)
            lf = de.concat([f[:, :, 1:G], f[:, :, 0:1]], axis=2)
            rt = de.concat([f[:, :, G - 1:G], f[:, :, 0:G - 1]], axis=2)
            total = de.add(de.add(de.add(up, dn), lf), rt)
            return de.scale(de.sub(total, de.scale(f, 4.0)), inv_dx2)

        def fp(un, vn):
            cube = de.mul(de.mul(un, un), un)
            du = de.sub(de.sub(de.add(de.mul(a3, lap(un)), un), cube), vn)
            dv = de.sub(de.add(de.mul(b3, lap(vn)), un), vn)
            return du, dv

        if self.correction == "network":
            w1, c1 = self.store["phi.w1"], self.store["phi.c1"]
            w2, c2 = self.store["phi.w2"], self.store["phi.c2"]
            E, Zd = self.emb_dim, z.shape[1]
            c_tot = 4 + E + Zd
            F = self.conv_filters
            const_chans = [tile_channels(emb, (G, G))]
            if Zd:
                const_chans.append(tile_channels(de.constant(z), (G, G)))
            const_in = (de.concat(const_chans, axis=3) if len(const_chans) > 1
                        else const_chans[0])
            K1 = de.add(conv2d_taps_periodic(const_in, w1, c_tot, c_off=4), c1)

            def corr(un, vn, du_p, dv_p):
                dyn = de.concat([de.reshape(un, (B, G, G, 1)),
                                 de.reshape(vn, (B, G, G, 1)),
                                 de.reshape(du_p, (B, G, G, 1)),
                                 de.reshape(dv_p, (B, G, G, 1))], axis=3)
                h = de.tanh(de.add(conv2d_taps_periodic(dyn, w1, c_tot, c_off=0), K1))
                out = de.add(conv2d_taps_periodic(h, w2, F, c_off=0), c2)
                return (de.reshape(out[:, :, :, 0:1], (B, G, G)),
                        de.reshape(out[:, :, :, 1:2], (B, G, G)))
        else:
            neg_k = de.constant(np.full((B, 1, 1), -self.oracle_value))
            zero = de.constant(np.zeros((B, 1, 1)))

            def corr(un, vn, du_p, dv_p):
                return neg_k, zero

        def rhs(un, vn):
            du_p, dv_p = fp(un, vn)
            cu, cv = corr(un, vn, du_p, dv_p)
            return de.add(du_p, cu), de.add(dv_p, cv)

        records = []
        for t in range(spec.n_steps):
            k1u, k1v = rhs(u, v)
            k2u, k2v = rhs(de.add(u, de.scale(k1u, 0.5 * dt)),
                           de.add(v, de.scale(k1v, 0.5 * dt)))
            k3u, k3v = rhs(de.add(u, de.scale(k2u, 0.5 * dt)),
                           de.add(v, de.scale(k2v, 0.5 * dt)))
            k4u, k4v = rhs(de.add(u, de.scale(k3u, dt)),
                           de.add(v, de.scale(k3v, dt)))
            u = de.add(u, de.scale(_rk4_sum(k1u, k2u, k3u, k4u), dt / 6.0))
            v = de.add(v, de.scale(_rk4_sum(k1v, k2v, k3v, k4v), dt / 6.0))
            if (t + 1) % spec.record_every == 0:
                rec = de.concat([de.reshape(u, (B, 1, G * G)),
                                 de.reshape(v, (B, 1, G * G))], axis=1)
                records.append(de.reshape(rec, (B, 1, 2 * G * G)))
        return de.reshape(de.concat(records, axis=1), (B, spec.obs_size))


def _rk4_sum(k1, k2, k3, k4):
    # matches the kernel evaluation order: ((k1 + 2 k2) + 2 k3) + k4
    return de.add(de.add(de.add(k1, de.scale(k2, 2.0)), de.scale(k3, 2.0)), k4)


def oracle_greybox(task, rng=None, value=None, grid=None) -> GreyBoxMap:
    """Grey-box map with the true missing term hard-coded."""
    spec = get_task(task, grid=grid)
    gb = GreyBoxMap(spec, np.random.default_rng(0) if rng is None else rng)
    return gb.set_oracle(spec.latent_fixed if value is None else value)
