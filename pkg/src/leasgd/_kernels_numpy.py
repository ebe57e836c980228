"""Pure-numpy implementations of the hot numeric kernels.

Reference semantics for the numba twins in ``_kernels_numba``; selected at
import time by ``leasgd.backends``.
"""

import numpy as np


def quad_loss(diag, b, w, reg):
    """0.5*w'Aw - b'w + (reg/2)*||w||^2 for diagonal A."""
    return 0.5 * float(np.dot(diag * w, w)) - float(np.dot(b, w)) + 0.5 * reg * float(np.dot(w, w))


def quad_grad(diag, b, w, reg):
    return diag * w - b + reg * w


def logistic_loss(X, y, w, reg):
    """Mean log(1+exp(-y*Xw)) over rows, labels y in {-1,+1}, plus (reg/2)*||w||^2."""
    margins = y * (X @ w)
    return float(np.mean(np.logaddexp(0.0, -margins))) + 0.5 * reg * float(np.dot(w, w))


def logistic_grad(X, y, w, reg):
    margins = y * (X @ w)
    s = 1.0 / (1.0 + np.exp(margins))  # sigmoid(-margin)
    return -(X.T @ (y * s)) / X.shape[0] + reg * w


def mlp_loss_grad(params, X, labels, n_hidden, n_classes):
    """Loss and gradient of a tanh-hidden softmax classifier on one batch.

    ``params`` is the flat vector [W1, b1, W2, b2]; returns (mean cross-entropy,
    flat gradient of the batch mean).
    """
    n_in = X.shape[1]
    batch = X.shape[0]
    o = 0
    W1 = params[o:o + n_in * n_hidden].reshape(n_in, n_hidden)
    o += n_in * n_hidden
    b1 = params[o:o + n_hidden]
    o += n_hidden
    W2 = params[o:o + n_hidden * n_classes].reshape(n_hidden, n_classes)
    o += n_hidden * n_classes
    b2 = params[o:o + n_classes]

    H = np.tanh(X @ W1 + b1)
    Z = H @ W2 + b2
    zmax = Z.max(axis=1)
    expz = np.exp(Z - zmax[:, None])
    sumexp = expz.sum(axis=1)
    loss = float(np.mean(np.log(sumexp) + zmax - Z[np.arange(batch), labels]))

    P = expz / sumexp[:, None]
    P[np.arange(batch), labels] -= 1.0
    P /= batch
    dW2 = H.T @ P
    db2 = P.sum(axis=0)
    dH = P @ W2.T
    dA = (1.0 - H * H) * dH
    dW1 = X.T @ dA
    db1 = dA.sum(axis=0)

    grad = np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
    return loss, grad


def mix_states(W, states):
    """Row-stochastic mixing: returns W @ states for (m,m) x (m,n)."""
    return W @ states


def mean_sq_dist(states, target):
    """Mean over rows of squared euclidean distance to ``target``."""
    diff = states - target
    return float(np.mean(np.sum(diff * diff, axis=1)))
