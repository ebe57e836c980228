"""LEASGD update rules and the synchronous / asynchronous schedulers.

Update semantics at a communication round (all right-hand sides use the
round's pre-update vectors):

* leader i paired with follower f:  w_i <- w_i - eta*g_i + alpha*(w_f - w_i)
* follower f pulled by its assigned leaders (fan-in p_f, beta = p_f*alpha):
  w_f <- w_f - eta*g_f - beta*(w_f - mean of those leaders)
* a follower nobody picked takes a plain gradient step.

Between communication rounds every worker runs local SGD.  Pools are
re-sorted by full-shard loss every kappa*tau iterations; a fresh random
pairing is drawn at every communication round.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import backends
from . import privacy as privacy_mod
from .errors import RunAbort, ValidationError
from .problems import full_loss, stochastic_gradient
from .topology import (
    LEADER,
    draw_pairing,
    initial_roster,
    recat_message_cost,
    recategorize,
)
from .trace import TraceRecorder


@dataclass
class HyperParams:
    eta: float
    rho: float
    tau: int = 1
    kappa: int = 1
    iterations: int = 1

    def __post_init__(self):
        if self.eta <= 0:
            raise ValidationError("eta must be > 0")
        if self.rho < 0:
            raise ValidationError("rho must be >= 0")
        if self.tau < 1 or self.kappa < 1:
            raise ValidationError("tau and kappa must be >= 1")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if not 0.0 <= self.alpha < 1.0:
            raise ValidationError(f"alpha = eta*rho = {self.alpha} must be in [0, 1)")

    @property
    def alpha(self):
        return self.eta * self.rho


@dataclass
class WorkerState:
    worker_id: int
    w: np.ndarray
    role: str
    rng: np.random.Generator
    noise_rng: Optional[np.random.Generator] = None
    clock_rng: Optional[np.random.Generator] = None
    last_loss: float = math.nan
    local_step_count: int = 0


def check_theory_preconditions(problem, hp, max_fan_in):
    """Reject configurations outside the convergence guarantee's domain."""
    if not problem.convex or problem.mu is None or problem.mu <= 0:
        raise ValidationError(
            "theory mode requires a strongly convex problem with known mu, L"
        )
    if problem.optimum is None:
        raise ValidationError("theory mode requires a known optimum")
    beta_max = max_fan_in * hp.alpha
    if beta_max >= 1.0:
        raise ValidationError(
            f"beta_max = {max_fan_in}*alpha = {beta_max:.6g} must be < 1"
        )
    limit = 2.0 * (1.0 - beta_max) / (problem.mu + problem.lipschitz)
    if hp.eta > limit:
        raise ValidationError(
            f"eta = {hp.eta} exceeds 2*(1-beta_max)/(mu+L) = {limit:.6g}"
        )


def _finite_or_abort(vec, what, worker_id, t):
    if not np.all(np.isfinite(vec)):
        raise RunAbort(f"non-finite {what} for worker {worker_id} at iteration {t}")


def local_sgd_step(state, problem, shard, batch_size, hp, privacy=None):
    """One plain SGD step; gradient privatized first when a config is given.

    ``batch_size`` None means the worker's full shard.
    """
    if batch_size is None:
        batch_size = shard.sample_count
    g = stochastic_gradient(problem, state.w, shard, batch_size, state.rng).gradient
    if privacy is not None:
        g = privacy_mod.privatize_gradient(g, privacy, state.noise_rng)
    _finite_or_abort(g, "gradient", state.worker_id, state.local_step_count)
    return replace(
        state,
        w=state.w - hp.eta * g,
        local_step_count=state.local_step_count + 1,
    )


def _leader_half(w_leader, g_leader, w_follower, eta, alpha):
    return w_leader - eta * g_leader + alpha * (w_follower - w_leader)


def elastic_pair_update(leader, follower, g_leader, g_follower, hp):
    """Simultaneous pairwise elastic update from pre-update values."""
    if leader.w.shape != follower.w.shape:
        raise ValidationError("leader/follower dimension mismatch")
    if g_leader.shape != leader.w.shape or g_follower.shape != follower.w.shape:
        raise ValidationError("gradient dimension mismatch")
    alpha = hp.alpha
    new_leader = _leader_half(leader.w, g_leader, follower.w, hp.eta, alpha)
    new_follower = _leader_half(follower.w, g_follower, leader.w, hp.eta, alpha)
    return (
        replace(leader, w=new_leader, local_step_count=leader.local_step_count + 1),
        replace(
            follower, w=new_follower, local_step_count=follower.local_step_count + 1
        ),
    )


def follower_multi_pull(follower, leader_ws, g_follower, hp):
    """Aggregate pull toward the mean of the assigned leaders (beta = p_f*alpha)."""
    if len(leader_ws) == 0:
        raise ValidationError("follower_multi_pull needs at least one leader")
    beta = len(leader_ws) * hp.alpha
    if beta >= 1.0:
        raise ValidationError(f"beta = {beta:.6g} must be < 1")
    y = leader_ws[0] if len(leader_ws) == 1 else np.mean(leader_ws, axis=0)
    new_w = follower.w - hp.eta * g_follower - beta * (follower.w - y)
    return replace(
        follower, w=new_w, local_step_count=follower.local_step_count + 1
    )


def comm_round_update(states, pairing, gradients, hp):
    """Apply one communication round simultaneously to every worker."""
    pre = [s.w for s in states]
    new_states = list(states)
    for leader, f in pairing.assignments.items():
        new_states[leader] = replace(
            states[leader],
            w=_leader_half(pre[leader], gradients[leader], pre[f], hp.eta, hp.alpha),
            local_step_count=states[leader].local_step_count + 1,
        )
    for f, p_f in pairing.fan_in.items():
        if p_f == 0:
            new_states[f] = replace(
                states[f],
                w=pre[f] - hp.eta * gradients[f],
                local_step_count=states[f].local_step_count + 1,
            )
        else:
            leaders = [l for l, ff in pairing.assignments.items() if ff == f]
            new_states[f] = follower_multi_pull(
                states[f], [pre[l] for l in leaders], gradients[f], hp
            )
    return new_states


def _init_states(problem, streams, init_offset, init_jitter):
    """Initial worker vectors: a shared offset along a random direction from
    the coordinator stream plus per-worker jitter from the data streams.

    Consumed before any roster draw, so matched runs of different algorithms
    under one seed start from identical parameters.
    """
    m = streams.m
    n = problem.dimension
    offset = np.zeros(n)
    if init_offset != 0.0:
        direction = streams.coordinator.standard_normal(n)
        offset = init_offset * direction / np.linalg.norm(direction)
    states = []
    for i in range(m):
        w = offset.copy()
        if init_jitter != 0.0:
            w = w + init_jitter * streams.data[i].standard_normal(n)
        states.append(
            WorkerState(
                worker_id=i,
                w=w,
                role=LEADER,
                rng=streams.data[i],
                noise_rng=streams.noise[i],
                clock_rng=streams.clock[i],
            )
        )
    return states


def _apply_roles(states, roster):
    return [replace(s, role=roster.roles[i]) for i, s in enumerate(states)]


def _sq_dist_mean(states, w_star):
    return backends.mean_sq_dist(np.stack([s.w for s in states]), w_star)


def run_sync(
    problem,
    shards,
    hp,
    follower_count,
    batch_size,
    streams,
    privacy=None,
    mode="explore",
    algorithm="leasgd_sync",
    seed=None,
    init_offset=0.0,
    init_jitter=1.0,
):
    """Synchronous schedule for ``hp.iterations`` iterations; returns a RunTrace."""
    m = len(shards)
    if streams.m != m:
        raise ValidationError("stream bundle and shard list disagree on m")
    if mode == "theory":
        check_theory_preconditions(problem, hp, max_fan_in=m - follower_count)
    w_star = problem.optimum if mode == "theory" else None
    ledger = privacy_mod.PrivacyLedger(privacy) if privacy is not None else None

    states = _init_states(problem, streams, init_offset, init_jitter)
    roster = initial_roster(m, follower_count, streams.coordinator)
    states = _apply_roles(states, roster)
    initial_w = np.stack([s.w for s in states])

    recorder = TraceRecorder(
        algorithm, seed, m, track_d=w_star is not None, track_eps=privacy is not None
    )
    vectors = 0
    scalars = 0
    recat_period = hp.kappa * hp.tau

    for t in range(hp.iterations):
        losses = np.array(
            [full_loss(problem, states[i].w, shards[i]) for i in range(m)]
        )
        _finite_or_abort(losses, "loss", -1, t)
        states = [replace(s, last_loss=float(losses[i])) for i, s in enumerate(states)]

        recorder.add(
            t,
            losses,
            vectors,
            scalars,
            d=None if w_star is None else _sq_dist_mean(states, w_star),
            eps=None
            if ledger is None
            else (
                privacy_mod.spent_epsilon(ledger, privacy.delta)
                if ledger.steps_taken
                else 0.0
            ),
        )

        if t > 0 and t % recat_period == 0:
            roster = recategorize(losses, follower_count, roster.epoch)
            states = _apply_roles(states, roster)
            up, down = recat_message_cost(m)
            scalars += up + down

        if t % hp.tau == 0:
            pairing = draw_pairing(roster, streams.coordinator)
            gradients = []
            for i in range(m):
                g = stochastic_gradient(
                    problem, states[i].w, shards[i],
                    batch_size if batch_size is not None else shards[i].sample_count,
                    states[i].rng,
                ).gradient
                _finite_or_abort(g, "gradient", i, t)
                gradients.append(g)
            if privacy is not None:
                states = privacy_mod.private_update(
                    states, pairing, gradients, hp, privacy,
                    [s.noise_rng for s in states], ledger,
                )
            else:
                states = comm_round_update(states, pairing, gradients, hp)
            vectors += 2 * len(pairing.assignments)
        else:
            states = [
                local_sgd_step(states[i], problem, shards[i], batch_size, hp, privacy)
                for i in range(m)
            ]
            if ledger is not None:
                privacy_mod.account_step(ledger, privacy)

    final_losses = np.array(
        [full_loss(problem, states[i].w, shards[i]) for i in range(m)]
    )
    return recorder.freeze(
        initial_w=initial_w,
        final_w=np.stack([s.w for s in states]),
        final_losses=final_losses,
        final_epsilon=None
        if ledger is None
        else privacy_mod.spent_epsilon(ledger, privacy.delta),
        total_vectors=vectors,
        total_scalars=scalars,
        ledger=ledger,
    )


def run_async(
    problem,
    shards,
    hp,
    follower_count,
    batch_size,
    streams,
    rates,
    total_events,
    privacy=None,
    mode="explore",
    seed=None,
    init_offset=0.0,
    init_jitter=1.0,
):
    """Event-driven schedule: workers wake on independent poisson clocks.

    On each wake the worker takes a local step; every tau-th wake of a leader
    additionally exchanges with a random follower (the follower receives the
    elastic pull only -- it is not its wake, so it computes no gradient).
    Pools are re-sorted every kappa*tau*m global events using cached losses.
    """
    m = len(shards)
    rates = np.asarray(rates, dtype=np.float64)
    if rates.shape[0] != m or np.any(rates <= 0):
        raise ValidationError("need one positive rate per worker")
    if mode == "theory":
        check_theory_preconditions(problem, hp, max_fan_in=1)
    w_star = problem.optimum if mode == "theory" else None
    pure_local = m == 1 or follower_count == 0
    ledgers = (
        [privacy_mod.PrivacyLedger(privacy) for _ in range(m)]
        if privacy is not None
        else None
    )

    states = _init_states(problem, streams, init_offset, init_jitter)
    if not pure_local:
        roster = initial_roster(m, follower_count, streams.coordinator)
        states = _apply_roles(states, roster)
    else:
        roster = None
    initial_w = np.stack([s.w for s in states])
    losses = np.array([full_loss(problem, states[i].w, shards[i]) for i in range(m)])
    states = [replace(s, last_loss=float(losses[i])) for i, s in enumerate(states)]

    next_wake = np.array(
        [states[i].clock_rng.exponential(1.0 / rates[i]) for i in range(m)]
    )
    recorder = TraceRecorder(
        "leasgd_async", seed, m,
        track_d=w_star is not None, track_eps=privacy is not None, track_time=True,
    )
    vectors = 0
    scalars = 0
    recat_period = hp.kappa * hp.tau * m

    for event in range(total_events):
        recorder.add(
            event,
            losses.copy(),
            vectors,
            scalars,
            d=None if w_star is None else _sq_dist_mean(states, w_star),
            eps=None
            if ledgers is None
            else max(
                (
                    privacy_mod.spent_epsilon(led, privacy.delta)
                    if led.steps_taken
                    else 0.0
                )
                for led in ledgers
            ),
            vtime=float(np.min(next_wake)),
        )

        if roster is not None and event > 0 and event % recat_period == 0:
            roster = recategorize(losses, follower_count, roster.epoch)
            states = _apply_roles(states, roster)
            up, down = recat_message_cost(m)
            scalars += up + down

        i = int(np.argmin(next_wake))
        state = states[i]
        next_wake[i] += state.clock_rng.exponential(1.0 / rates[i])

        g = stochastic_gradient(
            problem, state.w, shards[i],
            batch_size if batch_size is not None else shards[i].sample_count,
            state.rng,
        ).gradient
        if privacy is not None:
            g = privacy_mod.privatize_gradient(g, privacy, state.noise_rng)
            privacy_mod.account_step(ledgers[i], privacy)
        _finite_or_abort(g, "gradient", i, event)

        wake_no = state.local_step_count + 1
        if (
            roster is not None
            and state.role == LEADER
            and wake_no % hp.tau == 0
        ):
            followers = roster.followers
            f = followers[
                int(streams.coordinator.integers(0, len(followers)))
            ]
            w_i_pre = state.w
            states[i] = replace(
                state,
                w=_leader_half(state.w, g, states[f].w, hp.eta, hp.alpha),
                local_step_count=wake_no,
            )
            states[f] = replace(
                states[f], w=states[f].w + hp.alpha * (w_i_pre - states[f].w)
            )
            vectors += 2
            losses[f] = full_loss(problem, states[f].w, shards[f])
        else:
            states[i] = replace(
                state, w=state.w - hp.eta * g, local_step_count=wake_no
            )
        losses[i] = full_loss(problem, states[i].w, shards[i])
        _finite_or_abort(losses, "loss", i, event)
        states[i] = replace(states[i], last_loss=float(losses[i]))

    final_eps = None
    if ledgers is not None:
        final_eps = max(
            privacy_mod.spent_epsilon(led, privacy.delta) if led.steps_taken else 0.0
            for led in ledgers
        )
    return recorder.freeze(
        initial_w=initial_w,
        final_w=np.stack([s.w for s in states]),
        final_losses=np.array(
            [full_loss(problem, states[i].w, shards[i]) for i in range(m)]
        ),
        final_epsilon=final_eps,
        total_vectors=vectors,
        total_scalars=scalars,
        ledger=None,
    )


def run_local_sgd(
    problem, shards, hp, batch_size, streams, privacy=None, mode="explore",
    seed=None, init_offset=0.0, init_jitter=1.0,
):
    """Independent per-worker SGD; the no-communication baseline."""
    m = len(shards)
    if mode == "theory" and problem.optimum is None:
        raise ValidationError("theory mode requires a known optimum")
    w_star = problem.optimum if mode == "theory" else None
    ledger = privacy_mod.PrivacyLedger(privacy) if privacy is not None else None
    states = _init_states(problem, streams, init_offset, init_jitter)
    initial_w = np.stack([s.w for s in states])
    recorder = TraceRecorder(
        "local_sgd", seed, m, track_d=w_star is not None, track_eps=privacy is not None
    )
    for t in range(hp.iterations):
        losses = np.array(
            [full_loss(problem, states[i].w, shards[i]) for i in range(m)]
        )
        _finite_or_abort(losses, "loss", -1, t)
        recorder.add(
            t, losses, 0, 0,
            d=None if w_star is None else _sq_dist_mean(states, w_star),
            eps=None
            if ledger is None
            else (
                privacy_mod.spent_epsilon(ledger, privacy.delta)
                if ledger.steps_taken
                else 0.0
            ),
        )
        states = [
            local_sgd_step(states[i], problem, shards[i], batch_size, hp, privacy)
            for i in range(m)
        ]
        if ledger is not None:
            privacy_mod.account_step(ledger, privacy)
    return recorder.freeze(
        initial_w=initial_w,
        final_w=np.stack([s.w for s in states]),
        final_losses=np.array(
            [full_loss(problem, states[i].w, shards[i]) for i in range(m)]
        ),
        final_epsilon=None
        if ledger is None
        else privacy_mod.spent_epsilon(ledger, privacy.delta),
        ledger=ledger,
    )
