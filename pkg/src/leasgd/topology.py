"""Leader/follower pool management and randomized pairing.

Workers with the highest current losses form the follower pool; everyone
else leads.  Leaders pick followers independently and uniformly at each
communication round, so one follower may serve several leaders (its fan-in
is the pull multiplier in the update rule).
"""

import json
from dataclasses import dataclass
from typing import Dict

import numpy as np

from .errors import ValidationError

LEADER = "leader"
FOLLOWER = "follower"


@dataclass
class Roster:
    m: int
    follower_count: int
    roles: tuple  # per-worker role strings
    epoch: int = 0

    @property
    def followers(self):
        return tuple(i for i, r in enumerate(self.roles) if r == FOLLOWER)

    @property
    def leaders(self):
        return tuple(i for i, r in enumerate(self.roles) if r == LEADER)

    def to_json(self):
        return json.dumps(
            {
                "m": self.m,
                "follower_count": self.follower_count,
                "epoch": self.epoch,
                "roles": {str(i): r for i, r in enumerate(self.roles)},
            },
            sort_keys=True,
        )


@dataclass
class Pairing:
    assignments: Dict[int, int]  # leader -> follower
    fan_in: Dict[int, int]  # follower -> number of assigned leaders

    def to_json(self):
        return json.dumps(
            {
                "assignments": {str(k): v for k, v in self.assignments.items()},
                "fan_in": {str(k): v for k, v in self.fan_in.items()},
            },
            sort_keys=True,
        )


def _check_pools(m, follower_count):
    if follower_count < 1:
        raise ValidationError("follower_count must be >= 1")
    if 2 * follower_count >= m:
        raise ValidationError(
            f"leader pool must outnumber followers: need 2*{follower_count} < m={m}"
        )


def _build(m, follower_count, follower_ids, epoch):
    roles = [LEADER] * m
    for f in follower_ids:
        roles[f] = FOLLOWER
    return Roster(m=m, follower_count=follower_count, roles=tuple(roles), epoch=epoch)


def initial_roster(m, follower_count, rng):
    """Uniformly random follower set; epoch 0."""
    _check_pools(m, follower_count)
    chosen = rng.choice(m, size=follower_count, replace=False)
    return _build(m, follower_count, chosen.tolist(), epoch=0)


def recategorize(losses, follower_count, epoch=0):
    """Workers with the highest losses become followers.

    Ties break toward the lower worker id, which keeps reruns deterministic.
    """
    m = len(losses)
    _check_pools(m, follower_count)
    losses = np.asarray(losses, dtype=np.float64)
    order = np.lexsort((np.arange(m), -losses))  # loss desc, id asc
    chosen = order[:follower_count].tolist()
    return _build(m, follower_count, chosen, epoch=epoch + 1)


def draw_pairing(roster, rng):
    """Each leader independently picks a uniform follower (with replacement)."""
    followers = roster.followers
    leaders = roster.leaders
    picks = rng.integers(0, len(followers), size=len(leaders))
    assignments = {}
    fan_in = {f: 0 for f in followers}
    for leader, k in zip(leaders, picks):
        f = followers[int(k)]
        assignments[leader] = f
        fan_in[f] += 1
    return Pairing(assignments=assignments, fan_in=fan_in)


def recat_message_cost(m):
    """Scalar traffic of one recategorization.

    Every other worker sends its loss to the coordinating worker and gets a
    role label back: (m-1) scalars in, (m-1) out.
    """
    if m < 2:
        raise ValidationError("recategorization needs at least 2 workers")
    return m - 1, m - 1
