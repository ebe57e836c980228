"""Decentralized parallel SGD baseline on a ring graph.

Each iteration every worker averages parameters with its two ring
neighbors through a doubly-stochastic mixing matrix, then takes a gradient
step evaluated at its pre-mix point.  Per round each worker ships its
vector to both neighbors: 2m transmitted vectors.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import backends
from . import privacy as privacy_mod
from .errors import ValidationError
from .optimizer import _finite_or_abort, _init_states, _sq_dist_mean
from .problems import full_loss, stochastic_gradient
from .trace import TraceRecorder


@dataclass
class MixingMatrix:
    W: np.ndarray
    graph: str = "ring"

    def check(self, tol=1e-12):
        W = self.W
        if not np.allclose(W, W.T, atol=tol):
            raise ValidationError("mixing matrix must be symmetric")
        if np.abs(W.sum(axis=1) - 1.0).max() > tol:
            raise ValidationError("mixing matrix rows must sum to 1")
        if np.abs(W.sum(axis=0) - 1.0).max() > tol:
            raise ValidationError("mixing matrix columns must sum to 1")
        eig = np.sort(np.abs(np.linalg.eigvalsh(W)))
        if len(eig) > 1 and eig[-2] >= 1.0:
            raise ValidationError("second-largest eigenvalue magnitude must be < 1")


def ring_mixing_matrix(m):
    """Uniform 1/3 weights on self and the two ring neighbors."""
    if m < 3:
        raise ValidationError("ring topology needs m >= 3")
    W = np.zeros((m, m))
    for i in range(m):
        W[i, i] = 1.0 / 3.0
        W[i, (i - 1) % m] = 1.0 / 3.0
        W[i, (i + 1) % m] = 1.0 / 3.0
    mix = MixingMatrix(W=W)
    mix.check()
    return mix


def dpsgd_comm_cost(m):
    """Transmitted vectors per round: each worker sends to 2 neighbors."""
    if m < 3:
        raise ValidationError("ring topology needs m >= 3")
    return 2 * m


def dpsgd_step(states, mixing, problem, shards, batch_size, eta, privacy=None,
               ledger=None):
    """Mix-then-step, simultaneously for all workers.

    Gradients are evaluated at the pre-mix parameters and privatized exactly
    like the elastic algorithm's when a privacy config is given.
    """
    m = len(states)
    stacked = np.stack([s.w for s in states])
    gradients = []
    for i in range(m):
        g = stochastic_gradient(
            problem, states[i].w, shards[i],
            batch_size if batch_size is not None else shards[i].sample_count,
            states[i].rng,
        ).gradient
        if privacy is not None:
            g = privacy_mod.privatize_gradient(g, privacy, states[i].noise_rng)
        _finite_or_abort(g, "gradient", i, states[i].local_step_count)
        gradients.append(g)
    if ledger is not None:
        privacy_mod.account_step(ledger, privacy)
    mixed = backends.mix_states(mixing.W, stacked)
    return [
        replace(
            states[i],
            w=mixed[i] - eta * gradients[i],
            local_step_count=states[i].local_step_count + 1,
        )
        for i in range(m)
    ]


def run_dpsgd(
    problem,
    shards,
    hp,
    batch_size,
    streams,
    privacy=None,
    mode="explore",
    seed=None,
    init_offset=0.0,
    init_jitter=1.0,
):
    """Ring D-PSGD for ``hp.iterations`` iterations; emits the shared trace schema."""
    m = len(shards)
    mixing = ring_mixing_matrix(m)
    if mode == "theory" and problem.optimum is None:
        raise ValidationError("theory mode requires a known optimum")
    w_star = problem.optimum if mode == "theory" else None
    ledger = privacy_mod.PrivacyLedger(privacy) if privacy is not None else None

    states = _init_states(problem, streams, init_offset, init_jitter)
    initial_w = np.stack([s.w for s in states])
    recorder = TraceRecorder(
        "dpsgd", seed, m, track_d=w_star is not None, track_eps=privacy is not None
    )
    per_round = dpsgd_comm_cost(m)
    vectors = 0

    for t in range(hp.iterations):
        losses = np.array(
            [full_loss(problem, states[i].w, shards[i]) for i in range(m)]
        )
        _finite_or_abort(losses, "loss", -1, t)
        recorder.add(
            t,
            losses,
            vectors,
            0,
            d=None if w_star is None else _sq_dist_mean(states, w_star),
            eps=None
            if ledger is None
            else (
                privacy_mod.spent_epsilon(ledger, privacy.delta)
                if ledger.steps_taken
                else 0.0
            ),
        )
        states = dpsgd_step(
            states, mixing, problem, shards, batch_size, hp.eta, privacy, ledger
        )
        vectors += per_round

    return recorder.freeze(
        initial_w=initial_w,
        final_w=np.stack([s.w for s in states]),
        final_losses=np.array(
            [full_loss(problem, states[i].w, shards[i]) for i in range(m)]
        ),
        final_epsilon=None
        if ledger is None
        else privacy_mod.spent_epsilon(ledger, privacy.delta),
        total_vectors=vectors,
        total_scalars=0,
        ledger=ledger,
    )
