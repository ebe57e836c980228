"""Optimization tasks, data shards and stochastic gradient oracles.

Three task families are supported:

* ``quadratic`` -- f(w) = 0.5*w'Aw - b'w with diagonal A whose eigenvalues
  span exactly [mu, L]; closed-form optimum w* = A^{-1}b.  Per-sample data
  carries sample-specific linear terms b_s so that minibatch gradients are
  noisy while the full-shard gradient is exact.
* ``logistic`` -- binary logistic regression with an L2 term.  The L2
  weight is applied as (reg/2)*||w||^2, which makes the objective
  reg-strongly convex (an unsquared norm penalty would not be).
* ``mlp`` -- a fixed one-hidden-layer tanh network with softmax output;
  carries no convexity constants and no optimum.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import backends
from .errors import ValidationError

MLP_HIDDEN = 16


@dataclass
class Problem:
    kind: str  # quadratic | logistic | mlp
    dimension: int
    mu: Optional[float] = None
    lipschitz: Optional[float] = None
    reg_lambda: float = 0.0
    optimum: Optional[np.ndarray] = None
    # quadratic payload
    diag: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    # mlp payload
    n_features: Optional[int] = None
    n_hidden: Optional[int] = None
    n_classes: Optional[int] = None

    @property
    def convex(self):
        return self.kind in ("quadratic", "logistic")


@dataclass
class DataShard:
    worker_id: int
    inputs: np.ndarray  # (samples, features) float64
    labels: np.ndarray  # (samples,) int64
    index_start: int
    index_stop: int
    _mean_input: Optional[np.ndarray] = field(default=None, repr=False)
    _labels_pm: Optional[np.ndarray] = field(default=None, repr=False)
    _full_index: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def sample_count(self):
        return self.inputs.shape[0]

    @property
    def mean_input(self):
        if self._mean_input is None:
            self._mean_input = self.inputs.mean(axis=0)
        return self._mean_input

    @property
    def labels_pm(self):
        """Labels remapped to {-1, +1} floats (cached)."""
        if self._labels_pm is None:
            self._labels_pm = 2.0 * self.labels.astype(np.float64) - 1.0
        return self._labels_pm

    @property
    def full_index(self):
        if self._full_index is None:
            self._full_index = np.arange(self.sample_count)
        return self._full_index


@dataclass
class GradientSample:
    gradient: np.ndarray
    minibatch_indices: np.ndarray
    sigma1_estimate: Optional[float] = None


def make_quadratic(dimension, mu, lipschitz, seed, b_scale=1.0):
    """Quadratic instance with eigenvalues spanning [mu, lipschitz] exactly.

    ``b_scale`` sets the magnitude of the linear term; 0 puts the optimum at
    the origin, which keeps late-iteration distances free of float
    cancellation when trajectories approach w*.
    """
    if mu <= 0:
        raise ValidationError(f"mu must be positive, got {mu}")
    if mu > lipschitz:
        raise ValidationError(f"mu={mu} exceeds lipschitz={lipschitz}")
    if dimension < 1:
        raise ValidationError("dimension must be >= 1")
    if dimension == 1:
        if mu != lipschitz:
            raise ValidationError("1-d quadratic requires mu == lipschitz")
        diag = np.array([mu], dtype=np.float64)
    else:
        diag = np.linspace(mu, lipschitz, dimension)
    rng = np.random.default_rng(seed)
    b = b_scale * rng.standard_normal(dimension)
    return Problem(
        kind="quadratic",
        dimension=dimension,
        mu=float(mu),
        lipschitz=float(lipschitz),
        optimum=b / diag,
        diag=diag,
        b=b,
    )


def make_logistic(X, y, reg_lambda=0.0):
    """Logistic problem over a fixed design matrix.

    mu comes from the L2 term; the smoothness constant uses the standard
    quarter bound on the sigmoid curvature: L = reg + max_i ||x_i||^2 / 4.
    """
    if reg_lambda < 0:
        raise ValidationError("reg_lambda must be >= 0")
    row_sq = float(np.max(np.sum(X * X, axis=1)))
    return Problem(
        kind="logistic",
        dimension=X.shape[1],
        mu=float(reg_lambda),
        lipschitz=float(reg_lambda) + 0.25 * row_sq,
        reg_lambda=float(reg_lambda),
    )


def make_mlp(n_features, n_hidden=MLP_HIDDEN, n_classes=2):
    """Fixed-architecture network task: n_features -> tanh(n_hidden) -> softmax."""
    dim = n_features * n_hidden + n_hidden + n_hidden * n_classes + n_classes
    return Problem(
        kind="mlp",
        dimension=dim,
        n_features=n_features,
        n_hidden=n_hidden,
        n_classes=n_classes,
    )


def _check_batch(shard, batch):
    if len(batch) == 0:
        raise ValidationError("empty batch")
    batch = np.asarray(batch)
    if batch.min() < 0 or batch.max() >= shard.sample_count:
        raise ValidationError("batch indices out of range for shard")
    return batch


def _batch_views(shard, batch):
    """(X, labels, labels_pm) for a batch; full-shard batches avoid copies."""
    if batch.shape[0] == shard.sample_count:
        return shard.inputs, shard.labels, shard.labels_pm
    return shard.inputs[batch], shard.labels[batch], None


def loss(problem, w, shard, batch):
    """Mean per-sample loss over ``batch`` plus (reg/2)*||w||^2."""
    batch = _check_batch(shard, batch)
    full = batch.shape[0] == shard.sample_count
    if problem.kind == "quadratic":
        b_mean = shard.mean_input if full else shard.inputs[batch].mean(axis=0)
        return backends.quad_loss(problem.diag, b_mean, w, problem.reg_lambda)
    if problem.kind == "logistic":
        X, _, ypm = _batch_views(shard, batch)
        if ypm is None:
            ypm = 2.0 * shard.labels[batch].astype(np.float64) - 1.0
        return backends.logistic_loss(X, ypm, w, problem.reg_lambda)
    if problem.kind == "mlp":
        X, lab, _ = _batch_views(shard, batch)
        value, _ = backends.mlp_loss_grad(
            w, X, lab, problem.n_hidden, problem.n_classes
        )
        return value
    raise ValidationError(f"unknown problem kind {problem.kind!r}")


def full_loss(problem, w, shard):
    return loss(problem, w, shard, shard.full_index)


def _batch_gradient(problem, w, shard, batch):
    full = batch.shape[0] == shard.sample_count
    if problem.kind == "quadratic":
        b_mean = shard.mean_input if full else shard.inputs[batch].mean(axis=0)
        return backends.quad_grad(problem.diag, b_mean, w, problem.reg_lambda)
    if problem.kind == "logistic":
        X, _, ypm = _batch_views(shard, batch)
        if ypm is None:
            ypm = 2.0 * shard.labels[batch].astype(np.float64) - 1.0
        return backends.logistic_grad(X, ypm, w, problem.reg_lambda)
    if problem.kind == "mlp":
        X, lab, _ = _batch_views(shard, batch)
        _, grad = backends.mlp_loss_grad(
            w, X, lab, problem.n_hidden, problem.n_classes
        )
        return grad
    raise ValidationError(f"unknown problem kind {problem.kind!r}")


def stochastic_gradient(problem, w, shard, batch_size, rng):
    """Unbiased minibatch gradient; sampling without replacement.

    A full-size batch takes the shard in order and consumes no randomness,
    so full-batch runs are gradient-exact and rng-stream neutral.
    """
    if batch_size <= 0:
        raise ValidationError("batch_size must be >= 1")
    if batch_size > shard.sample_count:
        raise ValidationError(
            f"batch_size {batch_size} exceeds shard size {shard.sample_count}"
        )
    if batch_size == shard.sample_count:
        batch = shard.full_index
    else:
        batch = rng.choice(shard.sample_count, size=batch_size, replace=False)
    grad = _batch_gradient(problem, w, shard, batch)
    return GradientSample(gradient=grad, minibatch_indices=batch)


def full_gradient(problem, w, shard):
    return _batch_gradient(problem, w, shard, shard.full_index)


def mlp_forward_backward(w, shard, batch, n_hidden=MLP_HIDDEN, n_classes=2):
    """Loss and exact backprop gradient of the fixed network on one batch."""
    batch = _check_batch(shard, batch)
    n_features = shard.inputs.shape[1]
    expect = n_features * n_hidden + n_hidden + n_hidden * n_classes + n_classes
    if w.shape[0] != expect:
        raise ValidationError(
            f"parameter vector has length {w.shape[0]}, architecture needs {expect}"
        )
    value, grad = backends.mlp_loss_grad(
        w, shard.inputs[batch], shard.labels[batch], n_hidden, n_classes
    )
    return value, GradientSample(gradient=grad, minibatch_indices=batch)


def estimate_sigma1(problem, w_samples, shard, batch_size, trials, rng):
    """Empirical upper estimate of E||g - grad_f||^2 (full-vector norm).

    Mean over ``trials`` minibatch draws at each supplied point, maximum over
    points, inflated by a 1.2 safety factor.
    """
    if trials < 30:
        raise ValidationError("trials must be >= 30")
    worst = 0.0
    for w in w_samples:
        exact = full_gradient(problem, w, shard)
        acc = 0.0
        for _ in range(trials):
            g = stochastic_gradient(problem, w, shard, batch_size, rng).gradient
            diff = g - exact
            acc += float(np.dot(diff, diff))
        worst = max(worst, acc / trials)
    return 1.2 * worst


# ---------------------------------------------------------------------------
# datasets and sharding


def load_csv(path):
    """CSV with header; last column integer label, the rest float features."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    X = np.ascontiguousarray(data[:, :-1], dtype=np.float64)
    y = data[:, -1].astype(np.int64)
    return X, y


def make_shards(X, y, m):
    """Contiguous equal-as-possible blocks, one per worker."""
    if m < 1:
        raise ValidationError("worker count must be >= 1")
    if X.shape[0] < m:
        raise ValidationError("fewer samples than workers")
    bounds = np.linspace(0, X.shape[0], m + 1).astype(int)
    shards = []
    for i in range(m):
        lo, hi = int(bounds[i]), int(bounds[i + 1])
        shards.append(
            DataShard(
                worker_id=i,
                inputs=np.ascontiguousarray(X[lo:hi]),
                labels=np.ascontiguousarray(y[lo:hi]),
                index_start=lo,
                index_stop=hi,
            )
        )
    return shards


def quadratic_shards(problem, m, samples_per_worker, noise_scale, seed):
    """Synthetic per-worker samples for a quadratic problem.

    Each sample s carries a linear term b_s = b + eps_s; deviations are
    centered within every shard, so each worker's full-shard gradient equals
    the exact global gradient while minibatches are noisy.  The cached shard
    mean is pinned to b itself, keeping full-batch evaluations free of the
    ~1e-17 centering residual that float subtraction leaves behind.
    """
    if problem.kind != "quadratic":
        raise ValidationError("quadratic_shards requires a quadratic problem")
    rng = np.random.default_rng(seed)
    shards = []
    for i in range(m):
        eps = rng.normal(scale=noise_scale, size=(samples_per_worker, problem.dimension))
        eps -= eps.mean(axis=0)
        shards.append(
            DataShard(
                worker_id=i,
                inputs=problem.b + eps,
                labels=np.zeros(samples_per_worker, dtype=np.int64),
                index_start=i * samples_per_worker,
                index_stop=(i + 1) * samples_per_worker,
                _mean_input=problem.b.copy(),
            )
        )
    return shards


def two_blobs(n_samples, n_features, separation, seed):
    """Balanced 2-class gaussian blobs, shuffled so contiguous shards mix classes."""
    rng = np.random.default_rng(seed)
    y = np.zeros(n_samples, dtype=np.int64)
    y[n_samples // 2:] = 1
    rng.shuffle(y)
    X = rng.standard_normal((n_samples, n_features))
    X[:, 0] += separation * (y - 0.5)
    return X, y


def split_holdout(X, y, fraction):
    """Deterministic tail split: ((X_train, y_train), (X_test, y_test))."""
    if not 0.0 < fraction < 1.0:
        raise ValidationError("holdout fraction must be in (0, 1)")
    cut = int(round(X.shape[0] * (1.0 - fraction)))
    return (X[:cut], y[:cut]), (X[cut:], y[cut:])
