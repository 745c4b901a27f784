"""Compiled inner loops.  Signatures mirror :mod:`._numpy` exactly."""

import numpy as np
from numba import njit, prange

BLOWUP = 1e12


@njit(cache=True)
def _mat_left(A, Y, out):
    # out = A @ Y
    n = A.shape[0]
    for i in range(n):
        for j in range(n):
            s = 0.0
            for l in range(n):
                s += A[i, l] * Y[l, j]
            out[i, j] = s


@njit(cache=True)
def _mat_right(Y, A, out):
    # out = Y @ A
    n = A.shape[0]
    for i in range(n):
        for j in range(n):
            s = 0.0
            for l in range(n):
                s += Y[i, l] * A[l, j]
            out[i, j] = s


@njit(cache=True)
def _propagate_one(A_half, h, substeps, adjoint, out):
    n = A_half.shape[1]
    M = (A_half.shape[0] - 1) // 2
    Y = np.eye(n)
    tmp = np.empty((n, n))
    k1 = np.empty((n, n))
    k2 = np.empty((n, n))
    k3 = np.empty((n, n))
    k4 = np.empty((n, n))
    sgn = -1.0 if adjoint else 1.0
    out[0] = Y
    for s in range(M):
        A0 = A_half[2 * s]
        Am = A_half[2 * s + 1]
        A1 = A_half[2 * s + 2]
        if adjoint:
            _mat_right(Y, A0, k1)
        else:
            _mat_left(A0, Y, k1)
        for i in range(n):
            for j in range(n):
                k1[i, j] *= sgn
                tmp[i, j] = Y[i, j] + 0.5 * h * k1[i, j]
        if adjoint:
            _mat_right(tmp, Am, k2)
        else:
            _mat_left(Am, tmp, k2)
        for i in range(n):
            for j in range(n):
                k2[i, j] *= sgn
                tmp[i, j] = Y[i, j] + 0.5 * h * k2[i, j]
        if adjoint:
            _mat_right(tmp, Am, k3)
        else:
            _mat_left(Am, tmp, k3)
        for i in range(n):
            for j in range(n):
                k3[i, j] *= sgn
                tmp[i, j] = Y[i, j] + h * k3[i, j]
        if adjoint:
            _mat_right(tmp, A1, k4)
        else:
            _mat_left(A1, tmp, k4)
        for i in range(n):
            for j in range(n):
                k4[i, j] *= sgn
                Y[i, j] += h / 6.0 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
        if (s + 1) % substeps == 0:
            out[(s + 1) // substeps] = Y


@njit(cache=True, parallel=True)
def propagate(A_half, h, substeps, adjoint):
    nb, L, n, _ = A_half.shape
    M = (L - 1) // 2
    out = np.empty((nb, M // substeps + 1, n, n))
    for b in prange(nb):
        _propagate_one(A_half[b], h, substeps, adjoint, out[b])
    return out


@njit(cache=True, parallel=True)
def matrix_powers(E, N):
    nb, n, _ = E.shape
    out = np.empty((nb, N + 1, n, n))
    for b in prange(nb):
        out[b, 0] = np.eye(n)
        for k in range(1, N + 1):
            _mat_right(out[b, k - 1], E[b], out[b, k])
    return out


@njit(cache=True)
def _blown(x):
    for i in range(x.shape[0]):
        if not abs(x[i]) <= BLOWUP:
            return True
    return False


@njit(cache=True, parallel=True)
def em(x0, A, f, G, h, dW, save):
    trials, S, k = dW.shape
    n = x0.shape[0]
    out = np.empty((trials, S + 1 if save else 1, n))
    ok = np.ones(trials, dtype=np.bool_)
    for r in prange(trials):
        x = x0.copy()
        y = np.empty(n)
        if save:
            out[r, 0] = x
        for s in range(S):
            for i in range(n):
                drift = f[s, i]
                for l in range(n):
                    drift += A[s, i, l] * x[l]
                noise = 0.0
                for l in range(k):
                    noise += G[s, i, l] * dW[r, s, l]
                y[i] = x[i] + drift * h + noise
            x[:] = y
            if _blown(x):
                ok[r] = False
                break
            if save:
                out[r, s + 1] = x
        if not save:
            out[r, 0] = x
    return out, ok


@njit(cache=True, parallel=True)
def sri15(x0, A, f0, f1, G, h, dW, dZ, save):
    trials, S, k = dW.shape
    n = x0.shape[0]
    out = np.empty((trials, S + 1 if save else 1, n))
    ok = np.ones(trials, dtype=np.bool_)
    for r in prange(trials):
        x = x0.copy()
        a0 = np.empty(n)
        gw = np.empty(n)
        xbar = np.empty(n)
        corr = np.empty(n)
        if save:
            out[r, 0] = x
        for s in range(S):
            # a0 = drift at the left node, gw = G dW
            for i in range(n):
                acc = f0[s, i]
                for l in range(n):
                    acc += A[s, i, l] * x[l]
                a0[i] = acc
                g = 0.0
                for l in range(k):
                    g += G[s, i, l] * dW[r, s, l]
                gw[i] = g
            # predictor; corr = G (dZ - h dW / 2) is premultiplied by A below
            # and the time derivative of G enters through (dW h - dZ)
            for i in range(n):
                xbar[i] = x[i] + a0[i] * h + gw[i]
                c = 0.0
                gt = 0.0
                for l in range(k):
                    c += G[s, i, l] * (dZ[r, s, l] - 0.5 * h * dW[r, s, l])
                    gt += (G[s + 1, i, l] - G[s, i, l]) / h * (dW[r, s, l] * h - dZ[r, s, l])
                corr[i] = c
                gw[i] += gt
            for i in range(n):
                a1 = f1[s, i]
                ac = 0.0
                for l in range(n):
                    a1 += A[s + 1, i, l] * xbar[l]
                    ac += A[s, i, l] * corr[l]
                x[i] = x[i] + 0.5 * (a0[i] + a1) * h + gw[i] + ac
            if _blown(x):
                ok[r] = False
                break
            if save:
                out[r, s + 1] = x
        if not save:
            out[r, 0] = x
    return out, ok


@njit(cache=True)
def rk4(x0, times, A_node, A_mid, f_left, f_mid, f_right, jumps, save):
    S = times.shape[0] - 1
    n = x0.shape[0]
    out = np.empty((S + 1 if save else 1, n))
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    ok = True
    for i in range(n):
        x[i] += jumps[0, i]
    if save:
        out[0] = x
    for s in range(S):
        h = times[s + 1] - times[s]
        for i in range(n):
            acc = f_left[s, i]
            for l in range(n):
                acc += A_node[s, i, l] * x[l]
            k1[i] = acc
        for i in range(n):
            tmp[i] = x[i] + 0.5 * h * k1[i]
        for i in range(n):
            acc = f_mid[s, i]
            for l in range(n):
                acc += A_mid[s, i, l] * tmp[l]
            k2[i] = acc
        for i in range(n):
            tmp[i] = x[i] + 0.5 * h * k2[i]
        for i in range(n):
            acc = f_mid[s, i]
            for l in range(n):
                acc += A_mid[s, i, l] * tmp[l]
            k3[i] = acc
        for i in range(n):
            tmp[i] = x[i] + h * k3[i]
        for i in range(n):
            acc = f_right[s, i]
            for l in range(n):
                acc += A_node[s + 1, i, l] * tmp[l]
            k4[i] = acc
        for i in range(n):
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) + jumps[s + 1, i]
        if _blown(x):
            ok = False
            break
        if save:
            out[s + 1] = x
    if not save:
        out[0] = x
    return out, ok
