"""Hot numeric kernels, written once in batch numpy style.

Every function here is plain numpy and doubles as the fallback lane; the
numba lane compiles these same functions with ``njit`` (see
``kernels_numba``).  Keep the bodies numba-compatible and self-contained:
no kwargs, no None, no cross-function calls, contiguous arrays into
``np.dot``.

The RK4 stage and combine arithmetic is written in the exact same order in
the simulators and in the grey-box rollout so that a zero correction
reproduces the incomplete simulator bit for bit within a lane.
"""

import numpy as np


# ---------------------------------------------------------------------------
# pendulum: d2x/dt2 = -omega^2 sin(x) - xi dx/dt   (xi = 0 -> incomplete)
# ---------------------------------------------------------------------------

def pendulum_sim(s0, omega, xi, dt, n_steps, record_every):
    """RK4 integration of the (angle, velocity) pendulum state.

    s0: [N, 2]; omega, xi: [N].  Records the angle every ``record_every``
    steps; returns [N, n_steps // record_every].
    """
    N = s0.shape[0]
    n_rec = n_steps // record_every
    out = np.empty((N, n_rec))
    ang = s0[:, 0].copy()
    vel = s0[:, 1].copy()
    om2 = omega * omega
    r = 0
    for t in range(n_steps):
        k1a = vel
        k1v = -om2 * np.sin(ang) - xi * vel
        a2 = ang + (0.5 * dt) * k1a
        v2 = vel + (0.5 * dt) * k1v
        k2a = v2
        k2v = -om2 * np.sin(a2) - xi * v2
        a3 = ang + (0.5 * dt) * k2a
        v3 = vel + (0.5 * dt) * k2v
        k3a = v3
        k3v = -om2 * np.sin(a3) - xi * v3
        a4 = ang + dt * k3a
        v4 = vel + dt * k3v
        k4a = v4
        k4v = -om2 * np.sin(a4) - xi * v4
        ang = ang + (dt / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        vel = vel + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if (t + 1) % record_every == 0:
            out[:, r] = ang
            r += 1
    return out


# ---------------------------------------------------------------------------
# advection-diffusion: dT/dt = alpha T_ss - beta T_s  (beta = 0 -> incomplete)
# central second difference, first-order upwind, Dirichlet zeros at the ends
# ---------------------------------------------------------------------------

def advdiff_rhs(T, alpha, beta, inv_ds2, inv_ds):
    """T: [N, G]; alpha, beta: [N, 1] column vectors."""
    N, G = T.shape
    out = np.zeros((N, G))
    lap = (T[:, :-2] - 2.0 * T[:, 1:-1] + T[:, 2:]) * inv_ds2
    adv = (T[:, 1:-1] - T[:, :-2]) * inv_ds
    out[:, 1:-1] = alpha * lap - beta * adv
    return out


def advdiff_sim(T0, alpha, beta, inv_ds2, inv_ds, dt, n_steps, record_every,
                use_euler):
    """Explicit time stepping of the 1-D advection-diffusion field.

    T0: [N, G]; alpha, beta: [N].  Returns [N, n_steps // record_every, G].
    """
    N, G = T0.shape
    n_rec = n_steps // record_every
    out = np.empty((N, n_rec, G))
    T = T0.copy()
    al = alpha.reshape(N, 1)
    be = beta.reshape(N, 1)
    r = 0
    for t in range(n_steps):
        k1 = np.zeros((N, G))
        k1[:, 1:-1] = (al * ((T[:, :-2] - 2.0 * T[:, 1:-1] + T[:, 2:]) * inv_ds2)
                       - be * ((T[:, 1:-1] - T[:, :-2]) * inv_ds))
        if use_euler:
            T = T + dt * k1
        else:
            T2 = T + (0.5 * dt) * k1
            k2 = np.zeros((N, G))
            k2[:, 1:-1] = (al * ((T2[:, :-2] - 2.0 * T2[:, 1:-1] + T2[:, 2:]) * inv_ds2)
                           - be * ((T2[:, 1:-1] - T2[:, :-2]) * inv_ds))
            T3 = T + (0.5 * dt) * k2
            k3 = np.zeros((N, G))
            k3[:, 1:-1] = (al * ((T3[:, :-2] - 2.0 * T3[:, 1:-1] + T3[:, 2:]) * inv_ds2)
                           - be * ((T3[:, 1:-1] - T3[:, :-2]) * inv_ds))
            T4 = T + dt * k3
            k4 = np.zeros((N, G))
            k4[:, 1:-1] = (al * ((T4[:, :-2] - 2.0 * T4[:, 1:-1] + T4[:, 2:]) * inv_ds2)
                           - be * ((T4[:, 1:-1] - T4[:, :-2]) * inv_ds))
            T = T + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (t + 1) % record_every == 0:
            out[:, r, :] = T
            r += 1
    return out


# ---------------------------------------------------------------------------
# FitzHugh-Nagumo reaction-diffusion on a periodic square grid
#   du/dt = a lap(u) + u - u^3 - v - k      (k = 0 -> incomplete)
#   dv/dt = b lap(v) + u - v
# ---------------------------------------------------------------------------

def periodic_lap(f, inv_dx2):
    """5-point Laplacian with wrap-around boundaries; f: [N, G, G]."""
    up = np.concatenate((f[:, 1:, :], f[:, :1, :]), axis=1)
    dn = np.concatenate((f[:, -1:, :], f[:, :-1, :]), axis=1)
    lf = np.concatenate((f[:, :, 1:], f[:, :, :1]), axis=2)
    rt = np.concatenate((f[:, :, -1:], f[:, :, :-1]), axis=2)
    return (up + dn + lf + rt - 4.0 * f) * inv_dx2


def reactdiff_sim(uv0, a, b, k, inv_dx2, dt, n_steps, record_every):
    """RK4 stepping of the two-field system.

    uv0: [N, 2, G, G]; a, b, k: [N].  Returns
    [N, n_steps // record_every, 2, G, G].
    """
    N = uv0.shape[0]
    G = uv0.shape[2]
    n_rec = n_steps // record_every
    out = np.empty((N, n_rec, 2, G, G))
    u = uv0[:, 0].copy()
    v = uv0[:, 1].copy()
    a3 = a.reshape(N, 1, 1)
    b3 = b.reshape(N, 1, 1)
    k3c = k.reshape(N, 1, 1)
    r = 0
    for t in range(n_steps):
        ku = np.empty((4, N, G, G))
        kv = np.empty((4, N, G, G))
        for j in range(4):
            if j == 0:
                uj = u
                vj = v
            elif j == 1:
                uj = u + (0.5 * dt) * ku[0]
                vj = v + (0.5 * dt) * kv[0]
            elif j == 2:
                uj = u + (0.5 * dt) * ku[1]
                vj = v + (0.5 * dt) * kv[1]
            else:
                uj = u + dt * ku[2]
                vj = v + dt * kv[2]
            lap_u = (np.concatenate((uj[:, 1:, :], uj[:, :1, :]), axis=1)
                     + np.concatenate((uj[:, -1:, :], uj[:, :-1, :]), axis=1)
                     + np.concatenate((uj[:, :, 1:], uj[:, :, :1]), axis=2)
                     + np.concatenate((uj[:, :, -1:], uj[:, :, :-1]), axis=2)
                     - 4.0 * uj) * inv_dx2
            lap_v = (np.concatenate((vj[:, 1:, :], vj[:, :1, :]), axis=1)
                     + np.concatenate((vj[:, -1:, :], vj[:, :-1, :]), axis=1)
                     + np.concatenate((vj[:, :, 1:], vj[:, :, :1]), axis=2)
                     + np.concatenate((vj[:, :, -1:], vj[:, :, :-1]), axis=2)
                     - 4.0 * vj) * inv_dx2
            ku[j] = a3 * lap_u + uj - uj * uj * uj - vj - k3c
            kv[j] = b3 * lap_v + uj - vj
        u = u + (dt / 6.0) * (ku[0] + 2.0 * ku[1] + 2.0 * ku[2] + ku[3])
        v = v + (dt / 6.0) * (kv[0] + 2.0 * kv[1] + 2.0 * kv[2] + kv[3])
        if (t + 1) % record_every == 0:
            out[:, r, 0] = u
            out[:, r, 1] = v
            r += 1
    return out


# ---------------------------------------------------------------------------
# fused grey-box pendulum rollout: RK4 with an MLP correction added to the
# angular acceleration, plus hand-written backprop through the unrolled
# steps.  The MLP takes [ang, vel, fp_vel, fp_acc, emb, z] and sees the
# conditional embedding again at the second hidden layer.
# ---------------------------------------------------------------------------

def pendulum_rollout_fwd(s0, omega, emb, z, W1, b1, W2, b2, W3, b3, dt,
                         n_steps, record_every):
    """Returns (traj [B, n_rec], s_store [n_steps + 1, B, 2]).

    The embedding and latent are constant along a rollout, so their
    contribution to both hidden pre-activations is hoisted out of the step
    loop (K1, K2 below); only the 4 dynamic features [ang, vel, fp_vel,
    fp_acc] enter the per-stage matmul.
    """
    B = s0.shape[0]
    E = emb.shape[1]
    Zd = z.shape[1]
    H = W1.shape[1]
    n_rec = n_steps // record_every
    traj = np.empty((B, n_rec))
    s_store = np.empty((n_steps + 1, B, 2))
    ang = s0[:, 0].copy()
    vel = s0[:, 1].copy()
    om2 = omega * omega
    s_store[0, :, 0] = ang
    s_store[0, :, 1] = vel
    W1d = W1[:4].copy()
    K1 = np.dot(emb, W1[4:4 + E]) + b1
    if Zd > 0:
        K1 = K1 + np.dot(z, W1[4 + E:])
    W2d = W2[:H].copy()
    K2 = np.dot(emb, W2[H:]) + b2
    u4 = np.empty((B, 4))
    ka = np.empty((4, B))
    kv = np.empty((4, B))
    r = 0
    for t in range(n_steps):
        for j in range(4):
            if j == 0:
                aj = ang
                vj = vel
            elif j == 1:
                aj = ang + (0.5 * dt) * ka[0]
                vj = vel + (0.5 * dt) * kv[0]
            elif j == 2:
                aj = ang + (0.5 * dt) * ka[1]
                vj = vel + (0.5 * dt) * kv[1]
            else:
                aj = ang + dt * ka[2]
                vj = vel + dt * kv[2]
            fpa = -om2 * np.sin(aj)
            u4[:, 0] = aj
            u4[:, 1] = vj
            u4[:, 2] = vj
            u4[:, 3] = fpa
            h1 = np.tanh(np.dot(u4, W1d) + K1)
            h2 = np.tanh(np.dot(h1, W2d) + K2)
            corr = np.dot(h2, W3) + b3
            ka[j] = vj
            kv[j] = fpa + corr[:, 0]
        ang = ang + (dt / 6.0) * (ka[0] + 2.0 * ka[1] + 2.0 * ka[2] + ka[3])
        vel = vel + (dt / 6.0) * (kv[0] + 2.0 * kv[1] + 2.0 * kv[2] + kv[3])
        s_store[t + 1, :, 0] = ang
        s_store[t + 1, :, 1] = vel
        if (t + 1) % record_every == 0:
            traj[:, r] = ang
            r += 1
    return traj, s_store


def pendulum_rollout_bwd(gtraj, s_store, omega, emb, z, W1, b1, W2, b2, W3,
                         b3, dt, record_every):
    """Reverse sweep of pendulum_rollout_fwd.

    Stage activations are recomputed per step from s_store (checkpointing),
    so memory stays O(n_steps * B).  Gradient pieces that factor through the
    constant embedding / latent are accumulated as running sums (S1, S2) and
    turned into matrices once at the end.  Returns
    (gW1, gb1, gW2, gb2, gW3, gb3, gemb).
    """
    n_steps = s_store.shape[0] - 1
    B = s_store.shape[1]
    E = emb.shape[1]
    Zd = z.shape[1]
    H = W1.shape[1]
    om2 = omega * omega

    W1d = W1[:4].copy()
    W1e = W1[4:4 + E].copy()
    K1 = np.dot(emb, W1e) + b1
    if Zd > 0:
        K1 = K1 + np.dot(z, W1[4 + E:])
    W2d = W2[:H].copy()
    W2e = W2[H:].copy()
    K2 = np.dot(emb, W2e) + b2

    gW1 = np.zeros_like(W1)
    gW2 = np.zeros_like(W2)
    gW3 = np.zeros_like(W3)
    gb3 = np.zeros_like(b3)
    gW1d = np.zeros_like(W1d)
    gW2d = np.zeros_like(W2d)
    S1 = np.zeros((B, H))
    S2 = np.zeros((B, H))

    u4_st = np.empty((4, B, 4))
    h1_st = np.empty((4, B, H))
    h2_st = np.empty((4, B, H))
    a_st = np.empty((4, B))
    ka = np.empty((4, B))
    kv = np.empty((4, B))

    g_ang = np.zeros(B)
    g_vel = np.zeros(B)
    gka = np.empty((4, B))
    gkv = np.empty((4, B))

    for t in range(n_steps - 1, -1, -1):
        if (t + 1) % record_every == 0:
            rr = (t + 1) // record_every - 1
            g_ang = g_ang + gtraj[:, rr]
        ang = s_store[t, :, 0].copy()
        vel = s_store[t, :, 1].copy()
        # recompute the four stages
        for j in range(4):
            if j == 0:
                aj = ang
                vj = vel
            elif j == 1:
                aj = ang + (0.5 * dt) * ka[0]
                vj = vel + (0.5 * dt) * kv[0]
            elif j == 2:
                aj = ang + (0.5 * dt) * ka[1]
                vj = vel + (0.5 * dt) * kv[1]
            else:
                aj = ang + dt * ka[2]
                vj = vel + dt * kv[2]
            fpa = -om2 * np.sin(aj)
            u4 = u4_st[j]
            u4[:, 0] = aj
            u4[:, 1] = vj
            u4[:, 2] = vj
            u4[:, 3] = fpa
            h1 = np.tanh(np.dot(u4, W1d) + K1)
            h2 = np.tanh(np.dot(h1, W2d) + K2)
            corr = np.dot(h2, W3) + b3
            h1_st[j] = h1
            h2_st[j] = h2
            a_st[j] = aj
            ka[j] = vj
            kv[j] = fpa + corr[:, 0]
        # adjoint through the combine and the stages, last stage first
        gka[3] = (dt / 6.0) * g_ang
        gkv[3] = (dt / 6.0) * g_vel
        gka[2] = (dt / 3.0) * g_ang
        gkv[2] = (dt / 3.0) * g_vel
        gka[1] = (dt / 3.0) * g_ang
        gkv[1] = (dt / 3.0) * g_vel
        gka[0] = (dt / 6.0) * g_ang
        gkv[0] = (dt / 6.0) * g_vel
        gs_ang = g_ang.copy()
        gs_vel = g_vel.copy()
        for j in range(3, -1, -1):
            g1 = gka[j].copy()
            g2 = gkv[j].copy()
            u4 = u4_st[j]
            h1 = h1_st[j]
            h2 = h2_st[j]
            # MLP vector-Jacobian product
            dc = g2.reshape(B, 1)
            gW3 += np.dot(h2.T, dc)
            gb3[0] += np.sum(g2)
            dh2 = np.dot(dc, W3.T)
            da2 = dh2 * (1.0 - h2 * h2)
            gW2d += np.dot(h1.T, da2)
            S2 += da2
            dh1 = np.dot(da2, W2d.T)
            da1 = dh1 * (1.0 - h1 * h1)
            gW1d += np.dot(u4.T, da1)
            S1 += da1
            du = np.dot(da1, W1d.T)
            dang = du[:, 0].copy()
            dvel = du[:, 1] + du[:, 2]
            dfpa = g2 + du[:, 3]
            dang += dfpa * (-om2 * np.cos(a_st[j]))
            dvel += g1
            # chain into the stage input
            if j == 3:
                gka[2] += dt * dang
                gkv[2] += dt * dvel
            elif j == 2:
                gka[1] += (0.5 * dt) * dang
                gkv[1] += (0.5 * dt) * dvel
            elif j == 1:
                gka[0] += (0.5 * dt) * dang
                gkv[0] += (0.5 * dt) * dvel
            gs_ang += dang
            gs_vel += dvel
        g_ang = gs_ang
        g_vel = gs_vel
    # assemble full weight gradients from the factored pieces
    gW1[:4] = gW1d
    gW1[4:4 + E] = np.dot(emb.T, S1)
    if Zd > 0:
        gW1[4 + E:] = np.dot(z.T, S1)
    gb1 = np.sum(S1, axis=0)
    gW2[:H] = gW2d
    gW2[H:] = np.dot(emb.T, S2)
    gb2 = np.sum(S2, axis=0)
    gemb = np.dot(S2, W2e.T) + np.dot(S1, W1e.T)
    return gW1, gb1, gW2, gb2, gW3, gb3, gemb
