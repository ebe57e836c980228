"""Numba-compiled twins of the kernels in ``_kernels_numpy``.

Loop-oriented rewrites of the same math; results agree with the numpy
backend to floating-point rounding (different summation order).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def quad_loss(diag, b, w, reg):
    acc = 0.0
    bw = 0.0
    ww = 0.0
    for i in range(w.shape[0]):
        acc += diag[i] * w[i] * w[i]
        bw += b[i] * w[i]
        ww += w[i] * w[i]
    return 0.5 * acc - bw + 0.5 * reg * ww


@njit(cache=True)
def quad_grad(diag, b, w, reg):
    g = np.empty_like(w)
    for i in range(w.shape[0]):
        g[i] = diag[i] * w[i] - b[i] + reg * w[i]
    return g


@njit(cache=True)
def logistic_loss(X, y, w, reg):
    n, d = X.shape
    acc = 0.0
    for i in range(n):
        z = 0.0
        for j in range(d):
            z += X[i, j] * w[j]
        m = -y[i] * z
        # stable log(1+exp(m))
        if m > 0.0:
            acc += m + np.log1p(np.exp(-m))
        else:
            acc += np.log1p(np.exp(m))
    ww = 0.0
    for j in range(d):
        ww += w[j] * w[j]
    return acc / n + 0.5 * reg * ww


@njit(cache=True)
def logistic_grad(X, y, w, reg):
    n, d = X.shape
    g = np.zeros(d)
    for i in range(n):
        z = 0.0
        for j in range(d):
            z += X[i, j] * w[j]
        s = 1.0 / (1.0 + np.exp(y[i] * z))
        c = -y[i] * s
        for j in range(d):
            g[j] += c * X[i, j]
    for j in range(d):
        g[j] = g[j] / n + reg * w[j]
    return g


@njit(cache=True)
def mlp_loss_grad(params, X, labels, n_hidden, n_classes):
    batch, n_in = X.shape
    o = 0
    W1 = params[o:o + n_in * n_hidden].copy().reshape(n_in, n_hidden)
    o += n_in * n_hidden
    b1 = params[o:o + n_hidden]
    o += n_hidden
    W2 = params[o:o + n_hidden * n_classes].copy().reshape(n_hidden, n_classes)
    o += n_hidden * n_classes
    b2 = params[o:o + n_classes]

    H = np.dot(X, W1)
    for i in range(batch):
        for j in range(n_hidden):
            H[i, j] = np.tanh(H[i, j] + b1[j])
    Z = np.dot(H, W2)
    loss = 0.0
    P = np.empty((batch, n_classes))
    for i in range(batch):
        zmax = Z[i, 0] + b2[0]
        for k in range(n_classes):
            Z[i, k] += b2[k]
            if Z[i, k] > zmax:
                zmax = Z[i, k]
        sumexp = 0.0
        for k in range(n_classes):
            P[i, k] = np.exp(Z[i, k] - zmax)
            sumexp += P[i, k]
        loss += np.log(sumexp) + zmax - Z[i, labels[i]]
        for k in range(n_classes):
            P[i, k] /= sumexp
        P[i, labels[i]] -= 1.0
        for k in range(n_classes):
            P[i, k] /= batch
    loss /= batch

    dW2 = np.dot(H.T.copy(), P)
    db2 = np.zeros(n_classes)
    for i in range(batch):
        for k in range(n_classes):
            db2[k] += P[i, k]
    dH = np.dot(P, W2.T.copy())
    for i in range(batch):
        for j in range(n_hidden):
            dH[i, j] *= 1.0 - H[i, j] * H[i, j]
    dW1 = np.dot(X.T.copy(), dH)
    db1 = np.zeros(n_hidden)
    for i in range(batch):
        for j in range(n_hidden):
            db1[j] += dH[i, j]

    grad = np.empty(params.shape[0])
    o = 0
    for j in range(n_in):
        for k in range(n_hidden):
            grad[o] = dW1[j, k]
            o += 1
    for k in range(n_hidden):
        grad[o] = db1[k]
        o += 1
    for j in range(n_hidden):
        for k in range(n_classes):
            grad[o] = dW2[j, k]
            o += 1
    for k in range(n_classes):
        grad[o] = db2[k]
        o += 1
    return loss, grad


@njit(cache=True)
def mix_states(W, states):
    m, n = states.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(m):
            wij = W[i, j]
            if wij != 0.0:
                for k in range(n):
                    out[i, k] += wij * states[j, k]
    return out


@njit(cache=True)
def mean_sq_dist(states, target):
    m, n = states.shape
    acc = 0.0
    for i in range(m):
        for k in range(n):
            diff = states[i, k] - target[k]
            acc += diff * diff
    return acc / m
