"""Learning machinery: Q-functions, softmax policy, mean action, updates."""

import math

import numpy as np
import pytest

from ridepool.dispatch import (
    ACTION_DIM,
    MLP,
    DispatchError,
    ObservationEncoder,
    QFunction,
    ReplayBuffer,
    TrainConfig,
    Transition,
    dqn_update,
    mean_action,
    mfql_update,
    q_loss,
    select_action,
    softmax_probs,
)
from ridepool.fleet import Observation
from ridepool.hexgrid import HexGrid
from ridepool.network import make_grid_network
from ridepool.oracles import softmax_by_definition


def mask_first(n):
    m = np.zeros(ACTION_DIM, dtype=bool)
    m[:n] = True
    return m


def chain_transition(reward=1.0, action=0, done=False, obs="s"):
    """Single-state loop with one valid action, for tabular diagnostics."""
    return Transition(
        obs=obs,
        mean_action=np.zeros(ACTION_DIM),
        action=action,
        reward=reward,
        next_obs=obs,
        next_mean_action=np.zeros(ACTION_DIM),
        next_mask=mask_first(1),
        done=done,
    )


class TestSoftmax:
    def test_frozen_values(self):
        p = softmax_probs(np.array([1.0, 2.0, 3.0]), 1.0)
        np.testing.assert_allclose(
            p, [0.09003057317038046, 0.24472847105479767, 0.6652409557748219],
            rtol=0, atol=1e-12,
        )

    def test_matches_definition(self):
        rng = np.random.default_rng(71)
        for _ in range(50):
            q = rng.normal(size=rng.integers(2, 12))
            temp = float(rng.uniform(0.1, 4.0))
            np.testing.assert_allclose(
                softmax_probs(q, temp), softmax_by_definition(q, temp), atol=1e-12
            )

    def test_mask_zeroes_invalid_slots(self):
        q = np.arange(19.0)
        mask = mask_first(4)
        p = softmax_probs(q, 1.0, mask)
        assert p[4:].sum() == 0.0
        assert p.sum() == pytest.approx(1.0)

    def test_zero_temperature_is_greedy(self):
        q = np.array([3.0, 9.0, 9.0, 1.0])
        p = softmax_probs(q, 0.0)
        assert p.tolist() == [0.0, 1.0, 0.0, 0.0]  # first of the tied maxima

    def test_zero_temperature_respects_mask(self):
        q = np.array([3.0, 9.0, 2.0, 1.0])
        mask = np.array([True, False, True, True])
        p = softmax_probs(q, 0.0, mask)
        assert p.tolist() == [1.0, 0.0, 0.0, 0.0]

    def test_shift_invariance(self):
        rng = np.random.default_rng(73)
        for _ in range(20):
            q = rng.normal(size=8)
            shift = float(rng.uniform(-100, 100))
            np.testing.assert_allclose(
                softmax_probs(q, 0.7), softmax_probs(q + shift, 0.7), atol=1e-12
            )

    def test_entropy_grows_with_temperature(self):
        rng = np.random.default_rng(79)

        def entropy(p):
            nz = p[p > 0]
            return float(-(nz * np.log(nz)).sum())

        for _ in range(20):
            q = rng.normal(size=6) * 3
            temps = [0.1, 0.5, 1.0, 2.0, 8.0]
            hs = [entropy(softmax_probs(q, t)) for t in temps]
            for a, b in zip(hs, hs[1:]):
                assert b >= a - 1e-12

    def test_extreme_values_are_stable(self):
        p = softmax_probs(np.array([1e6, 0.0, -1e6]), 1.0)
        assert p[0] == pytest.approx(1.0)
        assert np.isfinite(p).all()

    def test_errors(self):
        with pytest.raises(DispatchError):
            softmax_probs(np.ones(3), -1.0)
        with pytest.raises(DispatchError):
            softmax_probs(np.ones(3), 1.0, np.zeros(3, dtype=bool))
        with pytest.raises(DispatchError):
            softmax_probs(np.ones(3), 1.0, np.ones(4, dtype=bool))


class TestSelectAction:
    def test_frequencies_follow_policy(self):
        q = QFunction("tabular")
        q._row("s")[:3] = [1.0, 2.0, 3.0]
        rng = np.random.default_rng(83)
        counts = np.zeros(ACTION_DIM)
        n = 20_000
        for _ in range(n):
            counts[select_action(q, "s", np.zeros(ACTION_DIM), mask_first(3), 1.0, rng)] += 1
        freq = counts / n
        expect = softmax_probs(np.array([1.0, 2.0, 3.0, *[0.0] * 16]), 1.0, mask_first(3))
        np.testing.assert_allclose(freq, expect, atol=0.01)

    def test_greedy_at_zero_temperature(self):
        q = QFunction("tabular")
        q._row("s")[:3] = [1.0, 5.0, 3.0]
        rng = np.random.default_rng(89)
        picks = {select_action(q, "s", np.zeros(ACTION_DIM), mask_first(3), 0.0, rng)
                 for _ in range(50)}
        assert picks == {1}


class TestMeanAction:
    def setup_method(self):
        self.net = make_grid_network(1, 8, edge_seconds=60.0)

    def test_zero_before_any_actions(self):
        out = mean_action({}, 0, {0: 0}, self.net, k=6)
        assert out.tolist() == [0.0] * ACTION_DIM

    def test_nearest_neighbors_average(self):
        positions = {0: 0, 1: 1, 2: 2, 3: 7}
        prev = {0: 3, 1: 5, 2: 5, 3: 1}
        out = mean_action(prev, 0, positions, self.net, k=2)
        expect = np.zeros(ACTION_DIM)
        expect[5] = 1.0  # neighbors are vehicles 1 and 2, both chose 5
        np.testing.assert_allclose(out, expect)
        out3 = mean_action(prev, 0, positions, self.net, k=3)
        expect3 = np.zeros(ACTION_DIM)
        expect3[5] = 2.0 / 3.0
        expect3[1] = 1.0 / 3.0
        np.testing.assert_allclose(out3, expect3)

    def test_excludes_self(self):
        out = mean_action({0: 4}, 0, {0: 0}, self.net, k=6)
        assert out.sum() == 0.0

    def test_simplex_membership(self):
        rng = np.random.default_rng(97)
        nodes = self.net.nodes
        for _ in range(100):
            n = int(rng.integers(1, 8))
            positions = {i: int(nodes[rng.integers(len(nodes))]) for i in range(n)}
            prev = {i: int(rng.integers(ACTION_DIM)) for i in range(n)}
            k = int(rng.integers(1, 7))
            out = mean_action(prev, 0, positions, self.net, k)
            assert (out >= 0).all()
            total = out.sum()
            assert total == pytest.approx(1.0) or (n == 1 and total == 0.0)
            if total > 0:
                m = min(k, n - 1)
                scaled = out * m
                np.testing.assert_allclose(scaled, np.round(scaled), atol=1e-9)

    def test_k_validation(self):
        with pytest.raises(DispatchError):
            mean_action({1: 0}, 0, {0: 0, 1: 1}, self.net, k=0)


class TestTabularUpdates:
    def test_single_step_worked_example(self):
        # Q=1, step size 0.5 toward a terminal target of 2 lands on 1.5.
        q = QFunction("tabular")
        q._row("s")[0] = 1.0
        target = q.clone()
        tr = chain_transition(reward=2.0, done=True)
        mfql_update(q, target, [tr], lr=0.5, discount=0.9, temperature=1.0)
        assert q.values("s", np.zeros(ACTION_DIM))[0] == pytest.approx(1.5)

    def test_fixed_point_of_unit_reward_chain(self):
        # r=1, discount 0.9: the self-loop's value must settle at 10.
        for update in ("dqn", "mfql"):
            q = QFunction("tabular")
            tr = chain_transition()
            for _ in range(1000):
                if update == "dqn":
                    dqn_update(q, q, [tr], lr=0.5, discount=0.9)
                else:
                    mfql_update(q, q, [tr], lr=0.5, discount=0.9, temperature=1.0)
            assert q.values("s", np.zeros(ACTION_DIM))[0] == pytest.approx(10.0, abs=1e-3)

    def test_bootstrap_values_differ_between_variants(self):
        # Next-state values [2, 1]: max bootstraps 2.0, the Boltzmann policy
        # bootstraps its expectation 1.7310585786300049.
        target = QFunction("tabular")
        target._row("s2")[:2] = [2.0, 1.0]
        tr = Transition(
            obs="s1",
            mean_action=np.zeros(ACTION_DIM),
            action=0,
            reward=0.0,
            next_obs="s2",
            next_mean_action=np.zeros(ACTION_DIM),
            next_mask=mask_first(2),
            done=False,
        )
        q1 = QFunction("tabular")
        dqn_update(q1, target, [tr], lr=1.0, discount=0.9)
        assert q1.values("s1", np.zeros(ACTION_DIM))[0] == pytest.approx(1.8)
        q2 = QFunction("tabular")
        mfql_update(q2, target, [tr], lr=1.0, discount=0.9, temperature=1.0)
        assert q2.values("s1", np.zeros(ACTION_DIM))[0] == pytest.approx(
            0.9 * 1.7310585786300049
        )

    def test_done_transition_ignores_bootstrap(self):
        target = QFunction("tabular")
        target._row("s")[0] = 100.0
        q = QFunction("tabular")
        dqn_update(q, target, [chain_transition(reward=3.0, done=True)], lr=1.0, discount=0.9)
        assert q.values("s", np.zeros(ACTION_DIM))[0] == pytest.approx(3.0)

    def test_q_loss_reports_without_mutating(self):
        q = QFunction("tabular")
        q._row("s")[0] = 1.0
        loss = q_loss(q, [chain_transition()], np.array([3.0]))
        assert loss == pytest.approx(4.0)
        assert q.values("s", np.zeros(ACTION_DIM))[0] == 1.0


class TestMLP:
    def test_seeded_init_is_reproducible(self):
        a = QFunction("mlp", obs_dim=10, hidden=(8,), seed=5)
        b = QFunction("mlp", obs_dim=10, hidden=(8,), seed=5)
        c = QFunction("mlp", obs_dim=10, hidden=(8,), seed=6)
        assert np.array_equal(a.net.params_vector(), b.net.params_vector())
        assert not np.array_equal(a.net.params_vector(), c.net.params_vector())

    def test_clone_is_independent(self):
        q = QFunction("mlp", obs_dim=6, hidden=(8,), seed=1)
        t = q.clone()
        before = t.net.params_vector().copy()
        q.net.W[0] += 1.0
        assert np.array_equal(t.net.params_vector(), before)
        t.copy_from(q)
        assert np.array_equal(t.net.params_vector(), q.net.params_vector())

    def test_batch_values_match_single(self):
        q = QFunction("mlp", obs_dim=4, hidden=(8,), seed=3)
        rng = np.random.default_rng(0)
        obs = rng.normal(size=(5, 4))
        mean = rng.normal(size=(5, ACTION_DIM))
        X = np.hstack([obs, mean])
        batch = q.batch_values(X)
        for i in range(5):
            np.testing.assert_allclose(batch[i], q.values(obs[i], mean[i]), atol=1e-12)

    def test_params_vector_round_trip(self):
        net = MLP([3, 7, 2], np.random.default_rng(2))
        vec = net.params_vector()
        other = MLP([3, 7, 2], np.random.default_rng(9))
        other.set_params_vector(vec)
        np.testing.assert_array_equal(other.params_vector(), vec)
        with pytest.raises(DispatchError):
            other.set_params_vector(vec[:-1])

    def test_q_loss_gradient_check(self):
        # Analytic gradients of the squared TD error on taken actions vs
        # central finite differences.
        rng = np.random.default_rng(101)
        net = MLP([5, 8, 4], rng)
        X = rng.normal(size=(6, 5))
        actions = rng.integers(0, 4, size=6)
        targets = rng.normal(size=6)

        def loss_at(vec):
            net.set_params_vector(vec)
            out, _ = net.forward(X)
            taken = out[np.arange(6), actions]
            return float(np.mean((taken - targets) ** 2))

        theta = net.params_vector().copy()
        out, acts = net.forward(X)
        dout = np.zeros_like(out)
        err = out[np.arange(6), actions] - targets
        dout[np.arange(6), actions] = 2.0 * err / 6
        gW, gb = net.backward(acts, dout)
        analytic = np.concatenate([g.ravel() for g in (*gW, *gb)])

        eps = 1e-6
        idx = rng.choice(theta.size, size=60, replace=False)
        for i in idx:
            plus = theta.copy()
            plus[i] += eps
            minus = theta.copy()
            minus[i] -= eps
            fd = (loss_at(plus) - loss_at(minus)) / (2 * eps)
            denom = max(abs(fd), abs(analytic[i]), 1e-8)
            assert abs(fd - analytic[i]) / denom < 1e-4
        net.set_params_vector(theta)

    def test_mlp_update_reduces_loss_on_fixed_batch(self):
        q = QFunction("mlp", obs_dim=5, hidden=(16,), seed=11)
        target = q.clone()
        rng = np.random.default_rng(13)
        batch = [
            Transition(
                obs=rng.normal(size=5),
                mean_action=np.zeros(ACTION_DIM),
                action=int(rng.integers(ACTION_DIM)),
                reward=float(rng.normal()),
                next_obs=rng.normal(size=5),
                next_mean_action=np.zeros(ACTION_DIM),
                next_mask=mask_first(ACTION_DIM),
                done=True,
            )
            for _ in range(16)
        ]
        first = dqn_update(q, target, batch, lr=0.01, discount=0.9)
        for _ in range(60):
            last = dqn_update(q, target, batch, lr=0.01, discount=0.9)
        assert last < first


class TestReplayBuffer:
    def test_ring_overwrite(self):
        buf = ReplayBuffer(3, np.random.default_rng(0))
        trs = [chain_transition(reward=float(i)) for i in range(5)]
        for tr in trs:
            buf.push(tr)
        assert len(buf) == 3
        rewards = sorted(tr.reward for tr in buf.sample(3))
        assert rewards == [2.0, 3.0, 4.0]

    def test_sample_without_replacement(self):
        buf = ReplayBuffer(10, np.random.default_rng(1))
        for i in range(10):
            buf.push(chain_transition(reward=float(i)))
        got = buf.sample(10)
        assert sorted(tr.reward for tr in got) == [float(i) for i in range(10)]

    def test_oversample_rejected(self):
        buf = ReplayBuffer(5, np.random.default_rng(2))
        buf.push(chain_transition())
        with pytest.raises(DispatchError):
            buf.sample(2)

    def test_bad_capacity_rejected(self):
        with pytest.raises(DispatchError):
            ReplayBuffer(0, np.random.default_rng(0))


class TestEncoder:
    def setup_method(self):
        net = make_grid_network(4, 4)
        self.grid = HexGrid(
            {0: (0, 0), 1: (1, 0), 2: (0, 1)},
            {n: n % 3 for n in net.nodes},
        )

    def obs(self, **kw):
        base = dict(
            vehicle_id=0,
            own_region=0,
            action_regions=(0, 1, 2),
            action_mask=mask_first(3),
            avail_counts=np.zeros(ACTION_DIM),
            request_counts=np.zeros(ACTION_DIM),
            vehicle_counts=np.zeros(ACTION_DIM),
            load=0,
            tod_frac=0.0,
        )
        base.update(kw)
        return Observation(**base)

    def test_dimension(self):
        enc = ObservationEncoder(self.grid)
        assert enc.dim == 3 * ACTION_DIM + 5
        vec = enc.encode(self.obs())
        assert vec.shape == (enc.dim,)

    def test_counts_are_log_compressed(self):
        enc = ObservationEncoder(self.grid)
        counts = np.zeros(ACTION_DIM)
        counts[1] = 7.0
        vec = enc.encode(self.obs(request_counts=counts))
        assert vec[ACTION_DIM + 1] == pytest.approx(math.log1p(7.0))

    def test_head_features(self):
        enc = ObservationEncoder(self.grid)
        vec = enc.encode(self.obs(load=3, tod_frac=0.25, own_region=1))
        head = vec[3 * ACTION_DIM :]
        assert head[0] == pytest.approx(math.log1p(3))
        assert head[1] == pytest.approx(1.0)  # sin at quarter day
        assert head[2] == pytest.approx(0.0, abs=1e-12)
        assert head[3] == pytest.approx(1.0)  # q=1 is the grid's max
        assert head[4] == pytest.approx(-1.0)  # r=0 is the grid's min


class TestTrainConfig:
    def test_defaults_are_valid(self):
        TrainConfig()

    def test_validation(self):
        with pytest.raises(DispatchError):
            TrainConfig(discount=1.0)
        with pytest.raises(DispatchError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(DispatchError):
            TrainConfig(temperature=-0.1)
        with pytest.raises(DispatchError):
            TrainConfig(temperature_final=-0.1)
        with pytest.raises(DispatchError):
            TrainConfig(eval_episodes=200, episodes=100)
        with pytest.raises(DispatchError):
            TrainConfig(neighbor_k=0)

    def test_q_mode_validation(self):
        with pytest.raises(DispatchError):
            QFunction("nonsense")
        with pytest.raises(DispatchError):
            QFunction("mlp", obs_dim=None)
