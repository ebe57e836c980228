"""Per-iteration run records shared by every simulation loop.

Row ``t`` describes the state *before* iteration t's update, so the
communication counters say what it cost to reach that state and row 0 is
the initial condition.  The post-final state lives in the ``final_*``
fields.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class RunTrace:
    algorithm: str
    seed: object
    m: int
    t: np.ndarray
    losses: np.ndarray  # (rows, m) per-worker full-shard losses
    mean_loss: np.ndarray
    vectors_cum: np.ndarray
    scalars_cum: np.ndarray
    d_t: Optional[np.ndarray] = None
    epsilon: Optional[np.ndarray] = None
    virtual_time: Optional[np.ndarray] = None
    initial_w: Optional[np.ndarray] = None
    final_w: Optional[np.ndarray] = None
    final_losses: Optional[np.ndarray] = None
    final_epsilon: Optional[float] = None
    total_vectors: int = 0
    total_scalars: int = 0
    ledger_dict: Optional[dict] = None

    @property
    def rows(self):
        return len(self.t)

    @property
    def final_mean_loss(self):
        return float(np.mean(self.final_losses))


class TraceRecorder:
    """Accumulates rows during a run and freezes them into a RunTrace."""

    def __init__(self, algorithm, seed, m, track_d, track_eps, track_time=False):
        self.algorithm = algorithm
        self.seed = seed
        self.m = m
        self._t = []
        self._losses = []
        self._vec = []
        self._sca = []
        self._d = [] if track_d else None
        self._eps = [] if track_eps else None
        self._time = [] if track_time else None

    def add(self, t, losses, vectors_cum, scalars_cum, d=None, eps=None, vtime=None):
        self._t.append(t)
        self._losses.append(losses)
        self._vec.append(vectors_cum)
        self._sca.append(scalars_cum)
        if self._d is not None:
            self._d.append(d)
        if self._eps is not None:
            self._eps.append(eps)
        if self._time is not None:
            self._time.append(vtime)

    def freeze(
        self,
        initial_w,
        final_w,
        final_losses,
        final_epsilon=None,
        total_vectors=0,
        total_scalars=0,
        ledger=None,
    ):
        losses = np.asarray(self._losses)
        return RunTrace(
            algorithm=self.algorithm,
            seed=self.seed,
            m=self.m,
            t=np.asarray(self._t, dtype=np.int64),
            losses=losses,
            mean_loss=losses.mean(axis=1),
            vectors_cum=np.asarray(self._vec, dtype=np.int64),
            scalars_cum=np.asarray(self._sca, dtype=np.int64),
            d_t=None if self._d is None else np.asarray(self._d),
            epsilon=None if self._eps is None else np.asarray(self._eps),
            virtual_time=None if self._time is None else np.asarray(self._time),
            initial_w=np.asarray(initial_w),
            final_w=np.asarray(final_w),
            final_losses=np.asarray(final_losses),
            final_epsilon=final_epsilon,
            total_vectors=int(total_vectors),
            total_scalars=int(total_scalars),
            ledger_dict=ledger.to_dict() if ledger is not None else None,
        )
