"""NumPy implementations of the hot kernels.

Always importable; used when the compiled extension is missing or when
``DUALHEAD_PD_PURE=1`` is set. Signatures match ``_ckernels`` exactly.
"""

import numpy as np


def conv1d_forward(x, w, b):
    """Same-padded stride-1 temporal convolution.

    x: (N, T, Cin), w: (K, Cin, Cout), b: (Cout,) -> (N, T, Cout)
    """
    k = w.shape[0]
    pad = (k - 1) // 2
    n, t, _ = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    out = np.empty((n, t, w.shape[2]), dtype=x.dtype)
    out[...] = b
    for i in range(k):
        out += xp[:, i:i + t, :] @ w[i]
    return out


def conv1d_backward(x, w, gy):
    """Gradients of conv1d_forward w.r.t. x, w and b."""
    k = w.shape[0]
    pad = (k - 1) // 2
    n, t, cin = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    g2 = gy.reshape(n * t, -1)
    for i in range(k):
        gw[i] = xp[:, i:i + t, :].reshape(n * t, cin).T @ g2
        gxp[:, i:i + t, :] += gy @ w[i].T
    gb = g2.sum(axis=0)
    return gxp[:, pad:pad + t, :], gw, gb


def dwt_step(frames, lo, hi):
    """One periodic analysis step over a stack of even-length rows.

    approx[m, k] = sum_n lo[n] * frames[m, (2k + n) mod N], same for detail.
    The high-pass taps sum to zero, so detail is taken on differences against
    each window's first sample; constant input then gives exact zeros.
    """
    n = frames.shape[1]
    half = n // 2
    idx = (2 * np.arange(half)[:, None] + np.arange(len(lo))[None, :]) % n
    windows = frames[:, idx]
    return windows @ lo, (windows - windows[:, :, :1]) @ hi


def hardest_pairs(emb, labels):
    """Hardest positive (max distance) and hardest negative (min distance).

    Returns (ip, jp, dp2, in_, jn, dn2) with squared distances; indices are
    -1 when the pair type is absent. Ties resolve to the smallest (i, j).
    """
    n = emb.shape[0]
    diff = emb[:, None, :] - emb[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    flat = d2[iu, ju]
    ip = jp = in_ = jn = -1
    dp2 = dn2 = 0.0
    if same.any():
        cand = np.flatnonzero(same)
        best = cand[np.argmax(flat[cand])]
        ip, jp, dp2 = int(iu[best]), int(ju[best]), float(flat[best])
    if (~same).any():
        cand = np.flatnonzero(~same)
        best = cand[np.argmin(flat[cand])]
        in_, jn, dn2 = int(iu[best]), int(ju[best]), float(flat[best])
    return ip, jp, dp2, in_, jn, dn2
