"""Regional dispatch policies learned by temporal-difference control.

A shared action-value function scores the (at most 19) dispatch targets in a
vehicle's action set.  Two update rules are supported: independent Q-learning
with a max target, and a mean-field variant that conditions on the average
one-hot action of the k nearest neighboring vehicles and bootstraps through
the Boltzmann policy's expected value.  Action selection is Boltzmann softmax
over the valid actions; temperature 0 degenerates to greedy argmax with ties
going to the lowest action index.

The function approximator is a small dense network implemented directly on
numpy in float64 with explicit backpropagation, so analytic gradients can be
audited against finite differences and runs stay bit-reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .hexgrid import MAX_ACTIONS
from .network import StreetNetwork

ACTION_DIM = MAX_ACTIONS

VARIANT_DQN = "DQN"
VARIANT_DQN_MI = "DQN+MI"
VARIANT_MFQL = "MFQL"
VARIANT_MFQL_MI = "MFQL+MI"
RL_VARIANTS = (VARIANT_DQN, VARIANT_DQN_MI, VARIANT_MFQL, VARIANT_MFQL_MI)


class DispatchError(ValueError):
    """Invalid policy configuration or inputs."""


@dataclass
class TrainConfig:
    """Hyperparameters of the dispatch learner."""

    learning_rate: float = 0.005
    discount: float = 0.9
    temperature: float = 1.0
    temperature_final: float = 0.05
    neighbor_k: int = 6
    mi_coef: float = 0.09
    episodes: int = 200
    eval_episodes: int = 50
    batch_size: int = 32
    target_sync: int = 50
    buffer_capacity: int = 50_000
    hidden: tuple[int, ...] = (64, 64)
    mi_lr: float = 0.05

    def __post_init__(self):
        if not 0 <= self.discount < 1:
            raise DispatchError("discount must lie in [0, 1)")
        if self.learning_rate <= 0 or self.temperature < 0:
            raise DispatchError("learning rate must be positive, temperature non-negative")
        if self.temperature_final < 0:
            raise DispatchError("temperature_final must be non-negative")
        if self.neighbor_k < 1 or self.episodes < 1 or self.batch_size < 1:
            raise DispatchError("neighbor_k, episodes, batch_size must be >= 1")
        if self.eval_episodes < 1 or self.eval_episodes > self.episodes:
            raise DispatchError("eval_episodes must be in [1, episodes]")


class MLP:
    """Dense tanh network, linear output, float64, analytic gradients."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise DispatchError("network needs input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes, self.sizes[1:]):
            scale = 1.0 / math.sqrt(fan_in)
            self.W.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
            self.b.append(np.zeros(fan_out))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (output, activations); activations[i] feeds layer i."""
        acts = [np.asarray(x, dtype=np.float64)]
        h = acts[0]
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            z = h @ W + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        return h, acts

    def backward(
        self, acts: list[np.ndarray], dout: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Gradients of a scalar loss given d(loss)/d(output)."""
        gW = [np.zeros_like(W) for W in self.W]
        gb = [np.zeros_like(b) for b in self.b]
        delta = np.asarray(dout, dtype=np.float64)
        for i in range(len(self.W) - 1, -1, -1):
            gW[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                # acts[i] is tanh(z_i) for hidden layers.
                delta = (delta @ self.W[i].T) * (1.0 - acts[i] ** 2)
        return gW, gb

    def sgd_step(self, gW, gb, lr: float):
        for i in range(len(self.W)):
            self.W[i] -= lr * gW[i]
            self.b[i] -= lr * gb[i]

    def clone(self) -> "MLP":
        other = MLP.__new__(MLP)
        other.sizes = self.sizes
        other.W = [W.copy() for W in self.W]
        other.b = [b.copy() for b in self.b]
        return other

    def copy_from(self, other: "MLP"):
        if other.sizes != self.sizes:
            raise DispatchError("cannot copy parameters across architectures")
        self.W = [W.copy() for W in other.W]
        self.b = [b.copy() for b in other.b]

    def params_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (*self.W, *self.b)])

    def set_params_vector(self, vec: np.ndarray):
        expected = sum(arr.size for arr in (*self.W, *self.b))
        if vec.size != expected:
            raise DispatchError(
                f"parameter vector has {vec.size} entries, expected {expected}"
            )
        pos = 0
        for arr in (*self.W, *self.b):
            n = arr.size
            arr[...] = vec[pos : pos + n].reshape(arr.shape)
            pos += n


class QFunction:
    """Action values over the padded action slots.

    ``mlp`` mode concatenates the encoded observation with the mean-action
    vector.  ``tabular`` mode keys rows by a hashable observation and ignores
    the mean action (small diagnostic MDPs fold it into the key if needed).
    """

    def __init__(
        self,
        mode: str = "mlp",
        obs_dim: int | None = None,
        hidden: tuple[int, ...] = (64, 64),
        seed: int = 0,
    ):
        if mode not in ("mlp", "tabular"):
            raise DispatchError(f"unknown Q-function mode {mode!r}")
        self.mode = mode
        self.obs_dim = obs_dim
        self.hidden = tuple(hidden)
        if mode == "mlp":
            if obs_dim is None or obs_dim < 1:
                raise DispatchError("mlp mode needs a positive obs_dim")
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x51]))
            self.net = MLP([obs_dim + ACTION_DIM, *self.hidden, ACTION_DIM], rng)
            self.table = None
        else:
            self.net = None
            self.table: dict = {}

    def _row(self, key) -> np.ndarray:
        row = self.table.get(key)
        if row is None:
            row = np.zeros(ACTION_DIM)
            self.table[key] = row
        return row

    def values(self, obs, mean_action: np.ndarray) -> np.ndarray:
        if self.mode == "tabular":
            return self._row(obs).copy()
        x = np.concatenate([np.asarray(obs, dtype=np.float64), mean_action])
        out, _ = self.net.forward(x[None, :])
        return out[0]

    def batch_values(self, X: np.ndarray) -> np.ndarray:
        out, _ = self.net.forward(X)
        return out

    def clone(self) -> "QFunction":
        other = QFunction.__new__(QFunction)
        other.mode = self.mode
        other.obs_dim = self.obs_dim
        other.hidden = self.hidden
        if self.mode == "mlp":
            other.net = self.net.clone()
            other.table = None
        else:
            other.net = None
            other.table = {k: v.copy() for k, v in self.table.items()}
        return other

    def copy_from(self, other: "QFunction"):
        if self.mode != other.mode:
            raise DispatchError("cannot sync Q-functions of different modes")
        if self.mode == "mlp":
            self.net.copy_from(other.net)
        else:
            self.table = {k: v.copy() for k, v in other.table.items()}


def softmax_probs(
    qvals: np.ndarray, temperature: float, mask: np.ndarray | None = None
) -> np.ndarray:
    """Boltzmann distribution over valid actions.

    Invalid actions get probability zero.  Temperature zero returns a one-hot
    on the greedy action (lowest index on ties).
    """
    q = np.asarray(qvals, dtype=np.float64)
    if mask is None:
        mask = np.ones(q.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if q.shape != mask.shape:
        raise DispatchError("qvals and mask shapes differ")
    if not mask.any():
        raise DispatchError("no valid actions")
    p = np.zeros_like(q)
    if temperature < 0:
        raise DispatchError("temperature must be non-negative")
    if temperature == 0:
        valid = np.where(mask)[0]
        best = valid[int(np.argmax(q[valid]))]
        p[best] = 1.0
        return p
    z = q[mask] / temperature
    z = z - z.max()
    e = np.exp(z)
    p[mask] = e / e.sum()
    return p


def select_action(
    q: QFunction,
    obs,
    mean_action: np.ndarray,
    mask: np.ndarray,
    temperature: float,
    rng: np.random.Generator,
) -> int:
    probs = softmax_probs(q.values(obs, mean_action), temperature, mask)
    return int(rng.choice(ACTION_DIM, p=probs))


def mean_action(
    prev_actions: Mapping[int, int],
    vid: int,
    positions: Mapping[int, int],
    net: StreetNetwork,
    k: int,
) -> np.ndarray:
    """Average one-hot previous action of the k nearest neighbors.

    Neighbors are ranked by shortest travel time from this vehicle's position
    (ties by vehicle id).  Before any action has been taken the mean action is
    the zero vector.
    """
    out = np.zeros(ACTION_DIM)
    if not prev_actions:
        return out
    if k < 1:
        raise DispatchError("k must be >= 1")
    me = positions[vid]
    ranked = sorted(
        (net.shortest_travel_time(me, positions[u]), u)
        for u in prev_actions
        if u != vid and u in positions
    )
    chosen = [u for _, u in ranked[:k]]
    if not chosen:
        return out
    for u in chosen:
        out[prev_actions[u]] += 1.0
    out /= len(chosen)
    return out


@dataclass(frozen=True)
class Transition:
    obs: object
    mean_action: np.ndarray
    action: int
    reward: float
    next_obs: object
    next_mean_action: np.ndarray
    next_mask: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer with seeded uniform sampling."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise DispatchError("buffer capacity must be positive")
        self.capacity = capacity
        self._rng = rng
        self._items: list[Transition] = []
        self._pos = 0

    def push(self, item: Transition):
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._pos] = item
            self._pos = (self._pos + 1) % self.capacity

    def sample(self, n: int) -> list[Transition]:
        if n > len(self._items):
            raise DispatchError(f"cannot sample {n} of {len(self._items)} transitions")
        idx = self._rng.choice(len(self._items), size=n, replace=False)
        return [self._items[int(i)] for i in idx]

    def __len__(self) -> int:
        return len(self._items)


def _bootstrap_value(
    target_q: QFunction,
    tr: Transition,
    temperature: float,
    mean_field: bool,
) -> float:
    qn = target_q.values(tr.next_obs, tr.next_mean_action)
    mask = np.asarray(tr.next_mask, dtype=bool)
    if mean_field:
        pi = softmax_probs(qn, temperature, mask)
        return float(np.dot(pi[mask], qn[mask]))
    valid = np.where(mask)[0]
    return float(qn[valid].max())


def _td_targets(
    target_q: QFunction,
    batch: Sequence[Transition],
    discount: float,
    temperature: float,
    mean_field: bool,
) -> np.ndarray:
    ys = np.empty(len(batch))
    for i, tr in enumerate(batch):
        if tr.done:
            ys[i] = tr.reward
        else:
            ys[i] = tr.reward + discount * _bootstrap_value(
                target_q, tr, temperature, mean_field
            )
    return ys


def q_loss(q: QFunction, batch: Sequence[Transition], targets: np.ndarray) -> float:
    """Mean squared TD error on the taken actions (no parameter update)."""
    if q.mode == "tabular":
        errs = [q.values(tr.obs, tr.mean_action)[tr.action] - y for tr, y in zip(batch, targets)]
        return float(np.mean(np.square(errs)))
    X = np.stack([np.concatenate([tr.obs, tr.mean_action]) for tr in batch])
    out = q.batch_values(X)
    taken = out[np.arange(len(batch)), [tr.action for tr in batch]]
    return float(np.mean((taken - targets) ** 2))


def _apply_update(
    q: QFunction, batch: Sequence[Transition], targets: np.ndarray, lr: float
) -> float:
    if q.mode == "tabular":
        errs = []
        for tr, y in zip(batch, targets):
            row = q._row(tr.obs)
            errs.append(row[tr.action] - y)
            row[tr.action] = (1.0 - lr) * row[tr.action] + lr * y
        return float(np.mean(np.square(errs)))
    X = np.stack([np.concatenate([tr.obs, tr.mean_action]) for tr in batch])
    actions = np.asarray([tr.action for tr in batch])
    out, acts = q.net.forward(X)
    taken = out[np.arange(len(batch)), actions]
    err = taken - targets
    loss = float(np.mean(err**2))
    dout = np.zeros_like(out)
    dout[np.arange(len(batch)), actions] = 2.0 * err / len(batch)
    gW, gb = q.net.backward(acts, dout)
    q.net.sgd_step(gW, gb, lr)
    return loss


def dqn_update(
    q: QFunction,
    target_q: QFunction,
    batch: Sequence[Transition],
    lr: float,
    discount: float,
) -> float:
    """One independent Q-learning step with a max bootstrap."""
    ys = _td_targets(target_q, batch, discount, temperature=0.0, mean_field=False)
    return _apply_update(q, batch, ys, lr)


def mfql_update(
    q: QFunction,
    target_q: QFunction,
    batch: Sequence[Transition],
    lr: float,
    discount: float,
    temperature: float,
) -> float:
    """One mean-field step: bootstrap through the Boltzmann policy's value."""
    ys = _td_targets(target_q, batch, discount, temperature, mean_field=True)
    return _apply_update(q, batch, ys, lr)


class ObservationEncoder:
    """Flatten an Observation into the network input vector."""

    def __init__(self, grid):
        self.grid = grid
        qs = [grid.axial(r)[0] for r in grid.regions]
        rs = [grid.axial(r)[1] for r in grid.regions]
        self._q_lo, self._q_hi = min(qs), max(qs)
        self._r_lo, self._r_hi = min(rs), max(rs)
        self.dim = 3 * ACTION_DIM + 5

    @staticmethod
    def _norm(v: float, lo: float, hi: float) -> float:
        if hi == lo:
            return 0.0
        return 2.0 * (v - lo) / (hi - lo) - 1.0

    def encode(self, obs) -> np.ndarray:
        aq, ar = self.grid.axial(obs.own_region)
        tod = 2.0 * math.pi * obs.tod_frac
        head = np.array(
            [
                math.log1p(obs.load),
                math.sin(tod),
                math.cos(tod),
                self._norm(aq, self._q_lo, self._q_hi),
                self._norm(ar, self._r_lo, self._r_hi),
            ]
        )
        return np.concatenate(
            [
                np.log1p(obs.avail_counts),
                np.log1p(obs.request_counts),
                np.log1p(obs.vehicle_counts),
                head,
            ]
        )


def train(env, config: TrainConfig, variant: str, seed: int):
    """Run the episodic training loop against an environment.

    The environment contract: reset(episode) -> {vehicle: Observation};
    step(actions) -> (next_observations, rewards, done, info);
    positions() -> {vehicle: node}; episode_metrics() -> dict with revenue and
    served; episode_mi_bound() -> float; attributes net and grid.

    Returns the trained Q-function and one log row per episode.
    """
    if variant not in RL_VARIANTS:
        raise DispatchError(f"unknown training variant {variant!r}")
    mean_field = variant in (VARIANT_MFQL, VARIANT_MFQL_MI)
    encoder = ObservationEncoder(env.grid)
    root = np.random.SeedSequence([int(seed), 0xD15B])
    q_seed, policy_seed, buffer_seed = root.spawn(3)
    q = QFunction(
        "mlp",
        obs_dim=encoder.dim,
        hidden=config.hidden,
        seed=int(q_seed.generate_state(1)[0]),
    )
    target = q.clone()
    policy_rng = np.random.default_rng(policy_seed)
    buffer = ReplayBuffer(config.buffer_capacity, np.random.default_rng(buffer_seed))
    zero = np.zeros(ACTION_DIM)
    log: list[dict] = []
    updates = 0

    anneal_span = max(1, config.episodes - config.eval_episodes)
    for episode in range(config.episodes):
        # Linear exploration schedule: the temperature hits its floor when
        # the evaluation window opens, so scored episodes run near-greedy.
        frac = min(1.0, episode / anneal_span)
        temp = config.temperature + frac * (config.temperature_final - config.temperature)
        obs_map = env.reset(episode)
        enc = {vid: encoder.encode(o) for vid, o in obs_map.items()}
        prev_actions: dict[int, int] = {}
        losses: list[float] = []
        done = False
        while not done:
            if mean_field and prev_actions:
                positions = env.positions()
                abar = {
                    vid: mean_action(prev_actions, vid, positions, env.net, config.neighbor_k)
                    for vid in sorted(obs_map)
                }
            else:
                abar = {vid: zero for vid in obs_map}
            actions = {
                vid: select_action(
                    q, enc[vid], abar[vid], obs_map[vid].action_mask,
                    temp, policy_rng,
                )
                for vid in sorted(obs_map)
            }
            next_obs, rewards, done, _ = env.step(actions)
            next_enc = {vid: encoder.encode(o) for vid, o in next_obs.items()}
            if mean_field:
                positions = env.positions()
                next_abar = {
                    vid: mean_action(actions, vid, positions, env.net, config.neighbor_k)
                    for vid in sorted(next_obs)
                }
            else:
                next_abar = {vid: zero for vid in next_obs}
            for vid in sorted(actions):
                buffer.push(
                    Transition(
                        obs=enc[vid],
                        mean_action=abar[vid],
                        action=actions[vid],
                        reward=rewards[vid],
                        next_obs=next_enc[vid],
                        next_mean_action=next_abar[vid],
                        next_mask=next_obs[vid].action_mask.copy(),
                        done=done,
                    )
                )
            if len(buffer) >= config.batch_size:
                batch = buffer.sample(config.batch_size)
                if mean_field:
                    loss = mfql_update(
                        q, target, batch, config.learning_rate,
                        config.discount, temp,
                    )
                else:
                    loss = dqn_update(
                        q, target, batch, config.learning_rate, config.discount
                    )
                losses.append(loss)
                updates += 1
                if updates % config.target_sync == 0:
                    target.copy_from(q)
            prev_actions = actions
            obs_map = next_obs
            enc = next_enc
        metrics = env.episode_metrics()
        log.append(
            {
                "episode": episode,
                "revenue": metrics["revenue"],
                "served": metrics["served"],
                "mi_estimate": env.episode_mi_bound(),
                "loss": float(np.mean(losses)) if losses else 0.0,
            }
        )
    return q, log
