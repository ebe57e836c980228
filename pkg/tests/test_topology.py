"""Pool recategorization and leader-follower pairing."""

import json

import numpy as np
import pytest

from leasgd.errors import ValidationError
from leasgd.topology import (
    FOLLOWER,
    LEADER,
    draw_pairing,
    initial_roster,
    recat_message_cost,
    recategorize,
)


class TestRecategorize:
    def test_two_largest_losses_become_followers(self):
        roster = recategorize([0.5, 0.9, 0.2, 0.7, 0.4], 2)
        assert set(roster.followers) == {1, 3}
        assert set(roster.leaders) == {0, 2, 4}
        assert roster.epoch == 1

    def test_equal_losses_tie_break_by_id(self):
        roster = recategorize([1.0] * 5, 2)
        assert set(roster.followers) == {0, 1}

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(7)
        losses = rng.random(15)
        roster = recategorize(losses.tolist(), 5)
        oracle = sorted(range(15), key=lambda i: (-losses[i], i))[:5]
        assert set(roster.followers) == set(oracle)

    def test_rejects_bad_follower_counts(self):
        with pytest.raises(ValidationError):
            recategorize([1.0, 2.0, 3.0], 0)
        with pytest.raises(ValidationError):
            recategorize([1.0, 2.0, 3.0, 4.0], 2)  # 2*2 >= 4

    def test_followers_dominate_leaders_up_to_ties(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            losses = np.round(rng.random(9), 1)  # coarse grid forces ties
            roster = recategorize(losses.tolist(), 3)
            worst_leader = max(losses[i] for i in roster.leaders)
            for f in roster.followers:
                assert losses[f] > worst_leader or (
                    losses[f] == worst_leader
                    and f < max(i for i in roster.leaders if losses[i] == worst_leader)
                )


class TestInitialRoster:
    def test_uniform_selection_frequency(self):
        rng = np.random.default_rng(9)
        counts = np.zeros(3)
        for _ in range(10_000):
            roster = initial_roster(3, 1, rng)
            counts[roster.followers[0]] += 1
        assert np.all(np.abs(counts / 10_000 - 1.0 / 3.0) <= 0.02)

    def test_fixed_seed_reproducible(self):
        a = initial_roster(9, 3, np.random.default_rng(5))
        b = initial_roster(9, 3, np.random.default_rng(5))
        assert a == b
        assert a.epoch == 0

    def test_equal_pools_rejected(self):
        with pytest.raises(ValidationError):
            initial_roster(2, 1, np.random.default_rng(0))


class TestDrawPairing:
    def test_single_pair_is_forced(self):
        roster = recategorize([0.1, 0.2, 0.9], 1)
        pairing = draw_pairing(roster, np.random.default_rng(0))
        assert pairing.assignments == {0: 2, 1: 2}
        assert pairing.fan_in == {2: 2}

    def test_fan_in_sums_to_leader_count(self):
        rng = np.random.default_rng(1)
        losses = list(range(16))
        roster = recategorize(losses, 5)
        for _ in range(100):
            pairing = draw_pairing(roster, rng)
            assert sum(pairing.fan_in.values()) == 11
            assert set(pairing.assignments) == set(roster.leaders)
            assert all(f in roster.followers for f in pairing.assignments.values())

    def test_two_by_two_combinations_uniform(self):
        # built directly: the pool-size guard forbids 2v2 rosters in runs,
        # but pairing uniformity is a property of the draw alone
        from leasgd.topology import Roster

        roster = Roster(m=4, follower_count=2,
                        roles=(LEADER, LEADER, FOLLOWER, FOLLOWER))
        assert set(roster.followers) == {2, 3}
        rng = np.random.default_rng(2)
        counts = {}
        for _ in range(100_000):
            pairing = draw_pairing(roster, rng)
            key = (pairing.assignments[0], pairing.assignments[1])
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 4
        for value in counts.values():
            assert abs(value / 100_000 - 0.25) <= 0.02

    def test_expected_fan_in_marginals(self):
        rng = np.random.default_rng(3)
        roster = recategorize(list(range(12)), 4)
        n_draws = 20_000
        totals = {f: 0 for f in roster.followers}
        for _ in range(n_draws):
            pairing = draw_pairing(roster, rng)
            for f, c in pairing.fan_in.items():
                totals[f] += c
        # each of 8 leaders picks a given follower with prob 1/4
        expect = 8 / 4
        sigma = np.sqrt(8 * 0.25 * 0.75 / n_draws)
        for f, total in totals.items():
            assert abs(total / n_draws - expect) <= 3 * sigma


class TestMessageCost:
    def test_counting_examples(self):
        assert recat_message_cost(15) == (14, 14)
        assert recat_message_cost(2) == (1, 1)
        with pytest.raises(ValidationError):
            recat_message_cost(1)


class TestSerialization:
    def test_roster_and_pairing_round_trip(self):
        roster = recategorize([0.3, 0.1, 0.9], 1)
        blob = json.loads(roster.to_json())
        assert blob["roles"]["2"] == FOLLOWER
        assert blob["roles"]["0"] == LEADER
        assert blob["epoch"] == 1
        pairing = draw_pairing(roster, np.random.default_rng(4))
        pblob = json.loads(pairing.to_json())
        assert pblob["assignments"] == {"0": 2, "1": 2}
        assert pblob["fan_in"] == {"2": 2}

    def test_pool_size_invariant_after_every_operation(self):
        rng = np.random.default_rng(6)
        roster = initial_roster(11, 4, rng)
        for _ in range(20):
            assert len(roster.leaders) > len(roster.followers)
            assert len(roster.followers) == 4
            roster = recategorize(rng.random(11).tolist(), 4, roster.epoch)
