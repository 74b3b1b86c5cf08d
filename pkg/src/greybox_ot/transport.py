"""Weak-OT machinery: kernels, the Monte-Carlo cost estimator, the critic
gradient penalty, and the losses of the adversarial maximin loop.

Cost estimator for a source point x and |Z| generator outputs T_i:

    C = 1/2 k(x, x) + (1-gamma)/(2|Z|) sum_i k(T_i, T_i)
        - 1/|Z| sum_i k(x, T_i)
        + gamma/(2|Z|(|Z|-1)) sum_{i != j} k(T_i, T_j)

Unbiased for i.i.d. z draws; the pair term needs |Z| >= 2 whenever
gamma > 0.  With the distance-induced kernel and gamma = 0 this collapses
to half the Frobenius distance ||x - T||_F / 2, and the identity map has
zero cost for any gamma.

Everything here builds autodiff graph nodes; plain arrays are accepted and
wrapped as constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffengine as de


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "distance"      # distance-induced | exponentiated-quadratic
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("distance", "eqquad"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "eqquad" and self.sigma <= 0:
            raise ValueError("eqquad kernel needs sigma > 0")


@dataclass(frozen=True)
class WeakCostConfig:
    gamma: float = 0.0
    n_z: int = 1
    family: str = "kernel"      # kernel | quadratic
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")
        if self.gamma > 0 and self.n_z < 2:
            raise ValueError("gamma > 0 requires |Z| >= 2 latent draws")
        if self.family not in ("kernel", "quadratic"):
            raise ValueError(f"unknown cost family {self.family!r}")


def _as2d(x):
    n = x if isinstance(x, de.Node) else de.constant(np.atleast_2d(x))
    if len(n.value.shape) == 1:
        n = de.reshape(n, (1,) + n.value.shape)
    return n


def kernel(a, b, spec: KernelSpec = KernelSpec()) -> de.Node:
    """Kernel value for one pair (flattened); returns a scalar node."""
    a = a if isinstance(a, de.Node) else de.constant(np.asarray(a, dtype=float))
    b = b if isinstance(b, de.Node) else de.constant(np.asarray(b, dtype=float))
    if a.value.shape != b.value.shape:
        raise ValueError(f"kernel shape mismatch {a.value.shape} vs {b.value.shape}")
    if spec.kind == "distance":
        na = de.l2norm(a)
        nb = de.l2norm(b)
        nd = de.l2norm(de.sub(a, b))
        return de.scale(de.sub(de.add(na, nb), nd), 0.5)
    sq = de.reduce_sum(de.square(de.sub(a, b)))
    return de.exp(de.scale(sq, -1.0 / spec.sigma**2))


def weak_cost_mc(x, outputs, gamma, spec: KernelSpec = KernelSpec(),
                 family="kernel") -> de.Node:
    """Monte-Carlo weak cost, averaged over the batch.

    x: [B, D] (or [D]); outputs: [B, Z, D] (or [Z, D]) generator outputs
    for the same x under Z latent draws.  O(|Z|^2) in the pair term.
    """
    xn = _as2d(x)
    tn = outputs if isinstance(outputs, de.Node) else de.constant(np.asarray(outputs, dtype=float))
    if len(tn.value.shape) == 2:
        tn = de.reshape(tn, (1,) + tn.value.shape)
    B, Z, D = tn.value.shape
    if xn.value.shape != (B, D):
        raise ValueError(f"x shape {xn.value.shape} incompatible with outputs {tn.value.shape}")
    if gamma > 0 and Z < 2:
        raise ValueError("gamma > 0 requires |Z| >= 2 latent draws")
    x3 = de.reshape(xn, (B, 1, D))

    if family == "quadratic":
        # Eq-form: mean_i 1/2 ||x - T_i||^2 - gamma/2 Var(T)
        sq = de.reduce_sum(de.square(de.sub(de.broadcast_to(x3, (B, Z, D)), tn)), axis=2)
        cost = de.scale(de.reduce_mean(sq, axis=1), 0.5)
        if gamma > 0:
            mean_t = de.reduce_mean(tn, axis=1, keepdims=True)
            dev = de.reduce_sum(de.square(de.sub(tn, de.broadcast_to(mean_t, (B, Z, D)))), axis=(1, 2))
            var = de.scale(dev, 1.0 / (Z - 1))
            cost = de.sub(cost, de.scale(var, 0.5 * gamma))
        return de.reduce_mean(cost)

    if spec.kind == "distance":
        nx = de.l2norm(xn, axis=1)                                   # [B]
        nt = de.l2norm(tn, axis=2)                                   # [B, Z]
        nxt = de.l2norm(de.sub(de.broadcast_to(x3, (B, Z, D)), tn), axis=2)
        k_xx = nx
        k_tt = nt
        nx_b = de.broadcast_to(de.reshape(nx, (B, 1)), (B, Z))
        k_xt = de.scale(de.sub(de.add(nx_b, nt), nxt), 0.5)          # [B, Z]
    else:
        k_xx = de.constant(np.ones(B))
        k_tt = de.constant(np.ones((B, Z)))
        sq = de.reduce_sum(de.square(de.sub(de.broadcast_to(x3, (B, Z, D)), tn)), axis=2)
        k_xt = de.exp(de.scale(sq, -1.0 / spec.sigma**2))

    cost = de.scale(k_xx, 0.5)
    cost = de.add(cost, de.scale(de.reduce_sum(k_tt, axis=1), (1.0 - gamma) / (2.0 * Z)))
    cost = de.sub(cost, de.scale(de.reduce_sum(k_xt, axis=1), 1.0 / Z))
    if gamma > 0:
        ti = de.reshape(tn, (B, Z, 1, D))
        tj = de.reshape(tn, (B, 1, Z, D))
        diff = de.sub(de.broadcast_to(ti, (B, Z, Z, D)), de.broadcast_to(tj, (B, Z, Z, D)))
        if spec.kind == "distance":
            nd = de.l2norm(diff, axis=3)                             # [B, Z, Z]
            ni = de.broadcast_to(de.reshape(nt, (B, Z, 1)), (B, Z, Z))
            nj = de.broadcast_to(de.reshape(nt, (B, 1, Z)), (B, Z, Z))
            k_pair = de.scale(de.sub(de.add(ni, nj), nd), 0.5)
        else:
            sqp = de.reduce_sum(de.square(diff), axis=3)
            k_pair = de.exp(de.scale(sqp, -1.0 / spec.sigma**2))
        off_diag = de.constant((1.0 - np.eye(Z))[None, :, :])
        pair_sum = de.reduce_sum(de.mul(k_pair, off_diag), axis=(1, 2))
        cost = de.add(cost, de.scale(pair_sum, gamma / (2.0 * Z * (Z - 1))))
    return de.reduce_mean(cost)


def variance_term(samples) -> de.Node:
    """Unbiased variance of vectors around their mean: [n, D] -> scalar."""
    sn = _as2d(samples)
    n = sn.value.shape[0]
    if n < 2:
        raise ValueError("unbiased variance needs at least 2 samples")
    mean = de.reduce_mean(sn, axis=0, keepdims=True)
    dev = de.sub(sn, de.broadcast_to(mean, sn.value.shape))
    return de.scale(de.reduce_sum(de.square(dev)), 1.0 / (n - 1))


def gradient_penalty(critic, yhat, y, rng) -> de.Node:
    """(||grad_y f(y~)||_2 - 1)^2 averaged over interpolates y~ drawn
    uniformly on the segments between generated and target samples.
    Differentiable w.r.t. the critic parameters (second order inside)."""
    yhat = np.asarray(yhat, dtype=np.float64).reshape(len(yhat), -1)
    y = np.asarray(y, dtype=np.float64).reshape(len(y), -1)
    if yhat.shape != y.shape:
        raise ValueError(f"batch shapes differ: {yhat.shape} vs {y.shape}")
    eps = rng.uniform(size=(len(y), 1))
    mix = eps * y + (1.0 - eps) * yhat
    y_tilde = de.variable(mix)
    grad = de.input_gradient(lambda t: critic.score_sum(t), y_tilde)
    norms = de.l2norm(grad, axis=1)
    return de.reduce_mean(de.square(de.sub(norms, de.constant(1.0))))


def generator_loss(x, outputs, critic, cfg: WeakCostConfig):
    """Mean over the batch of [weak cost - mean_z critic(y_hat)].

    x: [B, D] source samples; outputs: node [B * Z, D] grouped per source
    sample.  Returns (loss node, cost node).
    """
    if len(x) == 0:
        raise ValueError("empty batch")
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    B = x.shape[0]
    Z = cfg.n_z
    D = x.shape[1]
    grouped = de.reshape(outputs, (B, Z, D))
    cost = weak_cost_mc(de.constant(x), grouped, cfg.gamma, cfg.kernel,
                        family=cfg.family)
    critic_term = de.reduce_mean(critic.forward(outputs))
    return de.sub(cost, critic_term), cost


def wgan_generator_loss(outputs, critic):
    """Plain WGAN generator objective: -E f(y_hat); no transport cost."""
    return de.scale(de.reduce_mean(critic.forward(outputs)), -1.0)


def critic_loss(yhat, y, critic, lam=1.0, rng=None):
    """E f(y_hat) - E f(y) + lambda * gradient penalty.

    yhat and y are detached arrays (the critic step does not backprop into
    the generator).  Returns (loss node, penalty node).
    """
    if len(yhat) == 0 or len(y) == 0:
        raise ValueError("empty batch")
    yhat = np.asarray(yhat, dtype=np.float64).reshape(len(yhat), -1)
    y = np.asarray(y, dtype=np.float64).reshape(len(y), -1)
    rng = rng if rng is not None else np.random.default_rng(0)
    n = min(len(yhat), len(y))
    gp = gradient_penalty(critic, yhat[:n], y[:n], rng)
    loss = de.sub(de.reduce_mean(critic.forward(yhat)),
                  de.reduce_mean(critic.forward(y)))
    return de.add(loss, de.scale(gp, lam)), gp


def wgan_losses(x, outputs, yhat, y, critic, lam=1.0, rng=None):
    """Both WGAN objectives at once: the generator ignores the weak cost,
    the critic loss is identical to the OT one."""
    gen = wgan_generator_loss(outputs, critic)
    cri, gp = critic_loss(yhat, y, critic, lam=lam, rng=rng)
    return gen, cri
