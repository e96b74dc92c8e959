"""Fused numerical kernels for MLP panel passes.

The hot loop of every fit is "forward over T steps" and "accumulate the
parameter gradient given per-step upstream weights". The numba kernels
below fuse those passes so no (T, hidden) intermediate ever hits memory;
weight layout is transposed to (input, hidden) so the inner loops
vectorize over the hidden dimension. Pure-numpy fallbacks with identical
semantics are used when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


@njit(cache=True, fastmath=True)
def _mlp_forward_numba(X, W1t, b1, w2, b2, out):
    T, m = X.shape
    h = b1.shape[0]
    z = np.empty(h, X.dtype)
    for t in range(T):
        for j in range(h):
            z[j] = b1[j]
        for k in range(m):
            xk = X[t, k]
            wk = W1t[k]
            for j in range(h):
                z[j] += wk[j] * xk
        acc = b2
        for j in range(h):
            if z[j] > 0.0:
                acc += w2[j] * z[j]
        out[t] = acc


@njit(cache=True, fastmath=True)
def _mlp_backward_numba(X, W1t, b1, w2, b2, u, gW1t, gb1, gw2):
    # recomputes the forward pass per step; accumulates into the g* buffers
    T, m = X.shape
    h = b1.shape[0]
    z = np.empty(h, X.dtype)
    gb2 = 0.0
    for t in range(T):
        ut = u[t]
        if ut == 0.0:
            continue
        for j in range(h):
            z[j] = b1[j]
        for k in range(m):
            xk = X[t, k]
            wk = W1t[k]
            for j in range(h):
                z[j] += wk[j] * xk
        gb2 += ut
        for j in range(h):
            if z[j] > 0.0:
                gw2[j] += z[j] * ut
                z[j] = ut * w2[j]  # reuse z as dz
            else:
                z[j] = 0.0
        for j in range(h):
            gb1[j] += z[j]
        for k in range(m):
            xk = X[t, k]
            gk = gW1t[k]
            for j in range(h):
                gk[j] += z[j] * xk
    return gb2


@njit(cache=True, fastmath=True)
def _shared_mlp_forward_numba(X, W1t, b1, W2, b2, out):
    # out is (n_outputs, T)
    T, m = X.shape
    h = b1.shape[0]
    n = b2.shape[0]
    z = np.empty(h, X.dtype)
    for t in range(T):
        for j in range(h):
            z[j] = b1[j]
        for k in range(m):
            xk = X[t, k]
            wk = W1t[k]
            for j in range(h):
                z[j] += wk[j] * xk
        for j in range(h):
            if z[j] < 0.0:
                z[j] = 0.0
        for i in range(n):
            acc = b2[i]
            wi = W2[i]
            for j in range(h):
                acc += wi[j] * z[j]
            out[i, t] = acc


@njit(cache=True, fastmath=True)
def _shared_mlp_backward_numba(X, W1t, b1, W2, b2, U, gW1t, gb1, gW2, gb2):
    T, m = X.shape
    h = b1.shape[0]
    n = gb2.shape[0]
    z = np.empty(h, X.dtype)
    a = np.empty(h, X.dtype)
    dz = np.empty(h, X.dtype)
    for t in range(T):
        for j in range(h):
            z[j] = b1[j]
        for k in range(m):
            xk = X[t, k]
            wk = W1t[k]
            for j in range(h):
                z[j] += wk[j] * xk
        for j in range(h):
            a[j] = z[j] if z[j] > 0.0 else 0.0
            dz[j] = 0.0
        for i in range(n):
            ut = U[i, t]
            if ut == 0.0:
                continue
            gb2[i] += ut
            gi = gW2[i]
            wi = W2[i]
            for j in range(h):
                gi[j] += a[j] * ut
                dz[j] += ut * wi[j]
        for j in range(h):
            if z[j] <= 0.0:
                dz[j] = 0.0
            gb1[j] += dz[j]
        for k in range(m):
            xk = X[t, k]
            gk = gW1t[k]
            for j in range(h):
                gk[j] += dz[j] * xk
    return 0.0


def _mlp_forward_numpy(X, W1t, b1, w2, b2, out):
    A = np.maximum(X @ W1t + b1, 0.0)
    out[:] = A @ w2 + b2


def _mlp_backward_numpy(X, W1t, b1, w2, b2, u, gW1t, gb1, gw2):
    Z = X @ W1t + b1
    A = np.maximum(Z, 0.0)
    gw2 += A.T @ u
    dZ = (u[:, None] * w2) * (Z > 0.0)
    gW1t += X.T @ dZ
    gb1 += dZ.sum(axis=0)
    return float(u.sum())


def _shared_mlp_forward_numpy(X, W1t, b1, W2, b2, out):
    A = np.maximum(X @ W1t + b1, 0.0)
    out[:] = (A @ W2.T + b2).T


def _shared_mlp_backward_numpy(X, W1t, b1, W2, b2, U, gW1t, gb1, gW2, gb2):
    Z = X @ W1t + b1
    A = np.maximum(Z, 0.0)
    gW2 += U @ A
    gb2 += U.sum(axis=1)
    dZ = (U.T @ W2) * (Z > 0.0)
    gW1t += X.T @ dZ
    gb1 += dZ.sum(axis=0)
    return 0.0


if HAVE_NUMBA:
    mlp_forward = _mlp_forward_numba
    mlp_backward = _mlp_backward_numba
    shared_mlp_forward = _shared_mlp_forward_numba
    shared_mlp_backward = _shared_mlp_backward_numba
else:  # pragma: no cover
    mlp_forward = _mlp_forward_numpy
    mlp_backward = _mlp_backward_numpy
    shared_mlp_forward = _shared_mlp_forward_numpy
    shared_mlp_backward = _shared_mlp_backward_numpy
