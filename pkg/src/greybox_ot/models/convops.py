"""Convolution graph builders used by the correction and black-box nets.

The public ``diffengine.conv1d`` primitive materializes the full im2col
matrix; inside rollouts that copy dominates, so these helpers evaluate the
same linear map as a per-tap sum of small matmuls instead.  Weight layout
is shared with conv1d: rows ordered tap-major, ``w[k * c_total + c]``.

``c_off`` selects a contiguous channel block, which lets callers split a
convolution into a per-step dynamic part and a per-rollout constant part
(conditioning channels do not change along a rollout).
"""

from __future__ import annotations

import numpy as np

from .. import diffengine as de


def conv1d_taps(x, w, c_total, c_off=0, K=3, pad="zero"):
    """x: [B, L, C] node; returns [B, L, F] node (no bias).

    Uses weight rows [k * c_total + c_off : k * c_total + c_off + C] for tap
    k; 'zero' padding keeps length L, 'none' requires the caller to pad.
    """
    B, L, C = x.value.shape
    F = w.value.shape[1]
    lo = (K - 1) // 2
    if pad == "zero":
        zc = de.constant(np.zeros((B, lo, C)))
        xp = de.concat([zc, x, zc], axis=1)
    else:
        xp = x
    out = None
    for k in range(K):
        wk = w[k * c_total + c_off:k * c_total + c_off + C, :]
        piece = de.matmul(de.reshape(xp[:, k:k + L, :], (B * L, C)), wk)
        out = piece if out is None else de.add(out, piece)
    return de.reshape(out, (B, L, F))


def conv2d_taps_periodic(x, w, c_total, c_off=0):
    """x: [B, G, G, C] node; 3x3 taps with wrap-around padding."""
    B, G, _, C = x.value.shape
    F = w.value.shape[1]
    xp = de.concat([x[:, G - 1:G], x, x[:, 0:1]], axis=1)
    xp = de.concat([xp[:, :, G - 1:G], xp, xp[:, :, 0:1]], axis=2)
    out = None
    for k, (i, j) in enumerate((i, j) for i in range(3) for j in range(3)):
        wk = w[k * c_total + c_off:k * c_total + c_off + C, :]
        piece = de.matmul(de.reshape(xp[:, i:i + G, j:j + G, :], (B * G * G, C)), wk)
        out = piece if out is None else de.add(out, piece)
    return de.reshape(out, (B, G, G, F))


def tile_channels(node, spatial_shape):
    """[B, C] node -> [B, *spatial_shape, C] constant-per-sample channels."""
    B, C = node.value.shape
    mid = (1,) * len(spatial_shape)
    return de.broadcast_to(de.reshape(node, (B,) + mid + (C,)),
                           (B,) + tuple(spatial_shape) + (C,))
