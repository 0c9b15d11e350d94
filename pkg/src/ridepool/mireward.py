"""Intrinsic reward from a variational mutual-information lower bound.

Each epoch yields a sample pair: the demand's distribution over regions (the
context) and the fleet's distribution over regions (the behavior).  Writing X
for the region of a fleet member drawn at random and K for the context, the
mutual information I(X; K) admits the classic variational lower bound

    I(X; K) >= H(marginal of X) - E[ CE(p_x|k || q(.|k)) ]

for any conditional model q, with equality when q matches the true
conditional.  Cross entropy is linear in its first argument, so the optimal q
for a context key is just the mean behavior distribution observed under that
key; the TabularPosterior implements that exact conditional, while
MLPPosterior learns an amortized approximation shaped like the one used
during training (one hidden layer, softmax head).

The bound, in nats, is added to the extrinsic reward scaled by a coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dispatch import MLP

_LOG_FLOOR = 1e-12
_NORM_TOL = 1e-9

POSTERIOR_HIDDEN = 32


class MIError(ValueError):
    """Invalid distribution or sample input."""


def _as_distribution(p, name: str = "p") -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise MIError(f"{name} must be a non-empty vector")
    if (arr < -1e-12).any():
        raise MIError(f"{name} has negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > _NORM_TOL:
        raise MIError(f"{name} sums to {total!r}, not 1")
    return np.clip(arr, 0.0, None)


def normalize_counts(counts, size: int | None = None) -> np.ndarray:
    """Counts to a distribution; all-zero counts become uniform."""
    arr = np.asarray(counts, dtype=np.float64)
    if size is not None and arr.size != size:
        raise MIError(f"expected {size} counts, got {arr.size}")
    if (arr < 0).any():
        raise MIError("counts must be non-negative")
    total = arr.sum()
    if total <= 0:
        return np.full(arr.size, 1.0 / arr.size)
    return arr / total


def entropy(p) -> float:
    """Shannon entropy in nats; rejects non-normalized input."""
    arr = _as_distribution(p)
    nz = arr[arr > 0]
    return float(-(nz * np.log(nz)).sum())


def cross_entropy(p, q) -> float:
    """CE(p || q) in nats with q floored at 1e-12 inside the log."""
    ap = _as_distribution(p, "p")
    aq = _as_distribution(q, "q")
    if ap.shape != aq.shape:
        raise MIError("p and q must have the same length")
    return float(-(ap * np.log(np.maximum(aq, _LOG_FLOOR))).sum())


@dataclass(frozen=True)
class MIEstimate:
    h_marginal: float
    mean_ce: float

    @property
    def bound(self) -> float:
        return self.h_marginal - self.mean_ce


def mi_lower_bound(samples: Sequence[tuple], posterior) -> MIEstimate:
    """Evaluate the bound over (context, behavior) sample pairs."""
    if not samples:
        raise MIError("need at least one sample")
    behaviors = [_as_distribution(pv, "behavior") for _, pv in samples]
    marginal = np.mean(behaviors, axis=0)
    ces = [
        cross_entropy(pv, posterior.predict(pe))
        for (pe, _), pv in zip(samples, behaviors)
    ]
    return MIEstimate(h_marginal=entropy(marginal), mean_ce=float(np.mean(ces)))


def exact_mi(samples: Sequence[tuple]) -> float:
    """Mutual information between the context key and the behavior variable.

    Contexts are grouped by exact equality of the context vector; this is the
    supremum of the variational bound over posteriors keyed the same way.
    """
    if not samples:
        raise MIError("need at least one sample")
    groups: dict[tuple, list[np.ndarray]] = {}
    behaviors = []
    for pe, pv in samples:
        key = tuple(np.asarray(pe, dtype=np.float64).tolist())
        dist = _as_distribution(pv, "behavior")
        groups.setdefault(key, []).append(dist)
        behaviors.append(dist)
    total = len(behaviors)
    mi = entropy(np.mean(behaviors, axis=0))
    for members in groups.values():
        mi -= (len(members) / total) * entropy(np.mean(members, axis=0))
    return mi


def total_reward(extrinsic: float, mi_term: float, coef: float) -> float:
    """Extrinsic reward plus the scaled intrinsic term."""
    if coef < 0:
        raise MIError("mi coefficient must be non-negative")
    return extrinsic + coef * mi_term


class TabularPosterior:
    """Exact conditional: mean behavior per distinct context vector."""

    def __init__(self):
        self._sums: dict[tuple, np.ndarray] = {}
        self._counts: dict[tuple, int] = {}
        self._dim: int | None = None

    @staticmethod
    def _key(pe) -> tuple:
        return tuple(np.asarray(pe, dtype=np.float64).tolist())

    def fit(self, samples: Iterable[tuple]) -> "TabularPosterior":
        for pe, pv in samples:
            self.update(pe, pv)
        return self

    def update(self, pe, pv):
        dist = _as_distribution(pv, "behavior")
        self._dim = dist.size
        key = self._key(pe)
        if key in self._sums:
            self._sums[key] += dist
            self._counts[key] += 1
        else:
            self._sums[key] = dist.copy()
            self._counts[key] = 1

    def predict(self, pe) -> np.ndarray:
        key = self._key(pe)
        if key not in self._sums:
            if self._dim is None:
                raise MIError("posterior has seen no samples")
            return np.full(self._dim, 1.0 / self._dim)
        return self._sums[key] / self._counts[key]


class MLPPosterior:
    """Amortized conditional q(.|context): one hidden layer, softmax output."""

    def __init__(self, dim: int, hidden: int = POSTERIOR_HIDDEN, seed: int = 0):
        if dim < 1:
            raise MIError("distribution dimension must be positive")
        self.dim = dim
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xF1]))
        self.net = MLP([dim, hidden, dim], rng)

    def predict(self, pe) -> np.ndarray:
        logits, _ = self.net.forward(np.asarray(pe, dtype=np.float64)[None, :])
        return _softmax_rows(logits)[0]

    def ce_loss(self, contexts: np.ndarray, behaviors: np.ndarray) -> float:
        logits, _ = self.net.forward(contexts)
        logp = _log_softmax_rows(logits)
        return float(-(behaviors * logp).sum(axis=1).mean())

    def step(self, contexts, behaviors, lr: float) -> float:
        """One gradient step on the mean cross entropy; returns the loss."""
        X = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
        P = np.atleast_2d(np.asarray(behaviors, dtype=np.float64))
        if X.shape[0] != P.shape[0]:
            raise MIError("contexts and behaviors must align")
        logits, acts = self.net.forward(X)
        logp = _log_softmax_rows(logits)
        loss = float(-(P * logp).sum(axis=1).mean())
        dlogits = (np.exp(logp) - P) / X.shape[0]
        gW, gb = self.net.backward(acts, dlogits)
        self.net.sgd_step(gW, gb, lr)
        return loss


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    m = z - z.max(axis=1, keepdims=True)
    e = np.exp(m)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax_rows(z: np.ndarray) -> np.ndarray:
    m = z - z.max(axis=1, keepdims=True)
    return m - np.log(np.exp(m).sum(axis=1, keepdims=True))


def fit_posterior(
    samples: Sequence[tuple],
    steps: int = 2000,
    lr: float = 0.5,
    hidden: int = POSTERIOR_HIDDEN,
    seed: int = 0,
) -> MLPPosterior:
    """Train an amortized posterior on fixed samples by full-batch descent."""
    if not samples:
        raise MIError("need at least one sample")
    X = np.stack([np.asarray(pe, dtype=np.float64) for pe, _ in samples])
    P = np.stack([_as_distribution(pv, "behavior") for _, pv in samples])
    post = MLPPosterior(P.shape[1], hidden=hidden, seed=seed)
    for _ in range(steps):
        post.step(X, P, lr)
    return post
