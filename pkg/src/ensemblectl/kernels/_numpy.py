"""Pure-numpy versions of the inner loops.

Time stepping stays a Python loop; the batch axis (parameter points or
trials) is vectorized.  Products are written as broadcast-multiply-sum so
that a row's arithmetic does not depend on how many rows share the batch.
"""

import numpy as np

BLOWUP = 1e12


def _mv(A, x):
    # A: (n, n); x: (r, n) -> (r, n)
    return (A[None, :, :] * x[:, None, :]).sum(-1)


def _gw(G, w):
    # G: (n, k); w: (r, k) -> (r, n)
    return (G[None, :, :] * w[:, None, :]).sum(-1)


def propagate(A_half, h, substeps, adjoint):
    nb, L, n, _ = A_half.shape
    M = (L - 1) // 2
    out = np.empty((nb, M // substeps + 1, n, n))
    Y = np.broadcast_to(np.eye(n), (nb, n, n)).copy()
    out[:, 0] = Y
    if adjoint:
        def rhs(Y, A):
            return -(Y @ A)
    else:
        def rhs(Y, A):
            return A @ Y
    for s in range(M):
        A0 = A_half[:, 2 * s]
        Am = A_half[:, 2 * s + 1]
        A1 = A_half[:, 2 * s + 2]
        k1 = rhs(Y, A0)
        k2 = rhs(Y + 0.5 * h * k1, Am)
        k3 = rhs(Y + 0.5 * h * k2, Am)
        k4 = rhs(Y + h * k3, A1)
        Y = Y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (s + 1) % substeps == 0:
            out[:, (s + 1) // substeps] = Y
    return out


def matrix_powers(E, N):
    nb, n, _ = E.shape
    out = np.empty((nb, N + 1, n, n))
    out[:, 0] = np.eye(n)
    for k in range(1, N + 1):
        out[:, k] = out[:, k - 1] @ E
    return out


def em(x0, A, f, G, h, dW, save):
    trials, S, k = dW.shape
    n = x0.shape[0]
    out = np.empty((trials, S + 1 if save else 1, n))
    ok = np.ones(trials, dtype=bool)
    x = np.broadcast_to(x0, (trials, n)).copy()
    if save:
        out[:, 0] = x
    for s in range(S):
        drift = _mv(A[s], x) + f[s]
        x = x + drift * h + _gw(G[s], dW[:, s])
        ok &= (np.abs(x) <= BLOWUP).all(axis=1)
        if not ok.all():
            break
        if save:
            out[:, s + 1] = x
    if not save:
        out[:, 0] = x
    return out, ok


def sri15(x0, A, f0, f1, G, h, dW, dZ, save):
    trials, S, k = dW.shape
    n = x0.shape[0]
    out = np.empty((trials, S + 1 if save else 1, n))
    ok = np.ones(trials, dtype=bool)
    x = np.broadcast_to(x0, (trials, n)).copy()
    if save:
        out[:, 0] = x
    for s in range(S):
        w = dW[:, s]
        z = dZ[:, s]
        a0 = _mv(A[s], x) + f0[s]
        gw = _gw(G[s], w)
        xbar = x + a0 * h + gw
        corr = _gw(G[s], z - 0.5 * h * w)
        gw = gw + _gw((G[s + 1] - G[s]) / h, w * h - z)
        a1 = _mv(A[s + 1], xbar) + f1[s]
        x = x + 0.5 * (a0 + a1) * h + gw + _mv(A[s], corr)
        ok &= (np.abs(x) <= BLOWUP).all(axis=1)
        if not ok.all():
            break
        if save:
            out[:, s + 1] = x
    if not save:
        out[:, 0] = x
    return out, ok


def rk4(x0, times, A_node, A_mid, f_left, f_mid, f_right, jumps, save):
    S = times.shape[0] - 1
    n = x0.shape[0]
    out = np.empty((S + 1 if save else 1, n))
    x = x0 + jumps[0]
    ok = True
    if save:
        out[0] = x
    for s in range(S):
        h = times[s + 1] - times[s]
        k1 = A_node[s] @ x + f_left[s]
        k2 = A_mid[s] @ (x + 0.5 * h * k1) + f_mid[s]
        k3 = A_mid[s] @ (x + 0.5 * h * k2) + f_mid[s]
        k4 = A_node[s + 1] @ (x + h * k3) + f_right[s]
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4) + jumps[s + 1]
        if not (np.abs(x) <= BLOWUP).all():
            ok = False
            break
        if save:
            out[s + 1] = x
    if not save:
        out[0] = x
    return out, ok
