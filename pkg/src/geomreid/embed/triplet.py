"""Triplet loss with online batch-hard mining and a plain SGD training loop."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InsufficientData, SingletonLabel
from ..synth import counter_rng
from .model import EmbeddingModel, backward, forward, init_model


def triplet_loss(d_ap: float, d_an: float, margin: float) -> float:
    return max(0.0, d_ap - d_an + margin)


def sq_dists(E: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, exactly symmetric with zero diagonal."""
    diff = E[:, None, :] - E[None, :, :]
    return (diff * diff).sum(axis=2)


def batch_hard_mine(dist, labels):
    """Per anchor: farthest same-label sample and nearest other-label sample.

    Ties go to the lowest index (``argmax``/``argmin`` return the first hit).
    """
    dist = np.asarray(dist, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(labels)
    uniq, counts = np.unique(labels, return_counts=True)
    if np.any(counts < 2):
        raise SingletonLabel(f"labels with a single sample: {uniq[counts < 2].tolist()}")
    same = labels[:, None] == labels[None, :]
    eye = np.eye(n, dtype=bool)
    pos = np.where(same & ~eye, dist, -np.inf).argmax(axis=1)
    if len(uniq) < 2:
        raise SingletonLabel("batch-hard mining needs at least two distinct labels")
    neg = np.where(~same, dist, np.inf).argmin(axis=1)
    return [(i, int(pos[i]), int(neg[i])) for i in range(n)]


def batch_hard_loss(E, labels, margin, with_grad=True):
    """Mean batch-hard triplet loss over anchors on squared distances.

    Returns (loss, dLoss/dE or None, info) where info holds the mined triplets
    and the hinge arguments.
    """
    D = sq_dists(E)
    trip = np.array(batch_hard_mine(D, labels), dtype=np.int64)
    a, p, n = trip[:, 0], trip[:, 1], trip[:, 2]
    arg = D[a, p] - D[a, n] + margin
    active = arg > 0
    loss = float(np.where(active, arg, 0.0).sum() / len(a))
    info = {"triplets": trip, "hinge": arg, "D": D}
    if not with_grad:
        return loss, None, info
    g = np.zeros_like(E)
    s = 2.0 / len(a)
    for i, j, k in trip[active]:
        # d/dE of |e_i - e_j|^2 - |e_i - e_k|^2
        g[i] += s * (E[k] - E[j])
        g[j] += s * (E[j] - E[i])
        g[k] += s * (E[i] - E[k])
    return loss, g, info


def explicit_triplet_loss(E, triplets, margin, with_grad=True):
    """Mean hinge over a fixed list of (anchor, positive, negative) rows."""
    trip = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    a, p, n = trip.T
    dap = ((E[a] - E[p]) ** 2).sum(axis=1)
    dan = ((E[a] - E[n]) ** 2).sum(axis=1)
    arg = dap - dan + margin
    active = arg > 0
    loss = float(np.where(active, arg, 0.0).sum() / len(trip))
    if not with_grad:
        return loss, None
    g = np.zeros_like(E)
    s = 2.0 / len(trip)
    for i, j, k in trip[active]:
        g[i] += s * (E[k] - E[j])
        g[j] += s * (E[j] - E[i])
        g[k] += s * (E[i] - E[k])
    return loss, g


def loss_and_grads(model: EmbeddingModel, X, labels, margin):
    E, cache = forward(model, X)
    loss, dE, info = batch_hard_loss(E, labels, margin)
    grads, _ = backward(model, cache, dE)
    return loss, grads, info


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 0.3
    learning_rate: float = 1e-3
    epochs: int = 40
    batch_P: int = 8
    batch_K: int = 4
    seed: int = 0
    weight_decay: float = 0.0   # L2 penalty on weight matrices (not biases)
    hidden: tuple = (64, 64)
    out_dim: int = 32

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        if self.batch_P < 2 or self.batch_K < 2:
            raise ValueError("batch_P and batch_K must both be at least 2")
        if self.learning_rate < 0 or self.epochs < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate, epochs and weight_decay must be non-negative")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def pk_batches(labels, P, K, rng):
    """One epoch of P-identities-by-K-samples index batches.

    Identities are visited in a shuffled cycle; within an identity, samples are
    drawn without replacement from a shuffled list. The number of batches is
    enough to cover the training set once on average.
    """
    labels = np.asarray(labels)
    ids = np.unique(labels)
    members = {lab: np.flatnonzero(labels == lab) for lab in ids}
    n_batches = max(1, int(np.ceil(len(labels) / (P * K))))
    id_order = np.concatenate([rng.permutation(ids) for _ in range(
        int(np.ceil(n_batches * P / len(ids))) + 1)])
    batches = []
    for b in range(n_batches):
        chosen = id_order[b * P:(b + 1) * P]
        idx = [rng.permutation(members[lab])[:K] for lab in chosen]
        batches.append(np.concatenate(idx))
    return batches


def train_embedding(X, labels, config: TrainConfig, model: EmbeddingModel | None = None):
    """SGD on batch-hard triplet loss.

    Returns (model, loss_curve). ``loss_curve[e]`` is the batch-hard loss of
    the whole training set after epoch ``e`` (entry 0 is before any update),
    so a zero learning rate gives an exactly flat curve.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    ids, counts = np.unique(labels, return_counts=True)
    if len(ids) < config.batch_P:
        raise InsufficientData(f"{len(ids)} identities, batch_P={config.batch_P}")
    if np.any(counts < config.batch_K):
        raise InsufficientData(f"identity {ids[counts.argmin()]!r} has {counts.min()} "
                               f"samples, batch_K={config.batch_K}")
    if model is None:
        model = init_model(X.shape[1], config.hidden, config.out_dim, config.seed)
    else:
        model = model.copy()
    rng = counter_rng(config.seed, "batches")

    def full_loss():
        E, _ = forward(model, X)
        return batch_hard_loss(E, labels, config.margin, with_grad=False)[0]

    curve = [full_loss()]
    params = model.params()
    for _ in range(config.epochs):
        for idx in pk_batches(labels, config.batch_P, config.batch_K, rng):
            _, grads, _ = loss_and_grads(model, X[idx], labels[idx], config.margin)
            if config.learning_rate:
                for k, (p, g) in enumerate(zip(params, grads)):
                    if config.weight_decay and k % 2 == 0:
                        g = g + config.weight_decay * p
                    p -= config.learning_rate * g
        curve.append(full_loss())
    return model, np.array(curve)
