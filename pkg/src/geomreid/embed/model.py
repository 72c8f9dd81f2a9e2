"""Descriptor-to-embedding network: affine layers, ReLU between them, unit-norm output."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, NormalizationDegenerate
from ..synth import counter_rng

NORM_EPS = 1e-12


@dataclass
class EmbeddingModel:
    weights: list   # weights[l] has shape (out, in)
    biases: list

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatch(f"layer {l}: weight {w.shape} / bias {b.shape}")
            if l and w.shape[1] != self.weights[l - 1].shape[0]:
                raise DimensionMismatch(f"layer {l} expects {w.shape[1]} inputs, "
                                        f"previous layer gives {self.weights[l - 1].shape[0]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {l} has non-finite parameters")

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    def params(self):
        """Parameter arrays in a fixed order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_params(self):
        return sum(p.size for p in self.params())

    def copy(self):
        return EmbeddingModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_model(in_dim: int, hidden=(64, 64), out_dim: int = 32, seed: int = 0) -> EmbeddingModel:
    """He-style scaled-uniform weights from the run seed, zero biases."""
    rng = counter_rng(seed, "init")
    dims = [in_dim, *hidden, out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return EmbeddingModel(weights, biases)


def forward(model: EmbeddingModel, X: np.ndarray):
    """Batch forward. Returns (unit embeddings, cache for :func:`backward`)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.in_dim:
        raise DimensionMismatch(f"model expects {model.in_dim} inputs, got {X.shape[1]}")
    acts = [X]
    pre = []
    h = X
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if l == last else np.maximum(z, 0.0)
        acts.append(h)
    norms = np.sqrt((h * h).sum(axis=1))
    if np.any(norms < NORM_EPS):
        raise NormalizationDegenerate("embedding output is (numerically) zero and cannot be normalized")
    E = h / norms[:, None]
    return E, {"acts": acts, "pre": pre, "norms": norms, "E": E}


def backward(model: EmbeddingModel, cache, dE: np.ndarray):
    """Gradients of a scalar loss w.r.t. params, given dLoss/dE.

    Returns (param grads in :meth:`EmbeddingModel.params` order, dLoss/dX).
    """
    E, norms = cache["E"], cache["norms"]
    # d(o/|o|)/do = (I - e e^T)/|o|
    g = (dE - E * (dE * E).sum(axis=1, keepdims=True)) / norms[:, None]
    grads = []
    last = len(model.weights) - 1
    for l in range(last, -1, -1):
        if l != last:
            g = g * (cache["pre"][l] > 0)
        grads.append(g.sum(axis=0))            # bias
        grads.append(g.T @ cache["acts"][l])    # weight
        g = g @ model.weights[l]
    grads.reverse()
    return grads, g


def model_forward(model: EmbeddingModel, d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1:
        raise DimensionMismatch(f"expected a single descriptor vector, got shape {d.shape}")
    return forward(model, d[None, :])[0][0]


@dataclass
class Standardizer:
    """Per-feature affine input scaling fitted on training descriptors.

    ``kind='zscore'`` is used for mixed-unit geometric features; ``'none'``
    for hue histograms, whose bins already share one probability scale and
    whose near-constant bins would only have their noise amplified.
    """
    mean: np.ndarray
    scale: np.ndarray
    kind: str = "zscore"

    @classmethod
    def fit(cls, X, kind: str = "zscore", floor: float = 1e-8):
        X = np.asarray(X, dtype=np.float64)
        if kind == "none":
            return cls(np.zeros(X.shape[1]), np.ones(X.shape[1]), kind)
        if kind != "zscore":
            raise ValueError(f"unknown standardizer kind {kind!r}")
        return cls(X.mean(axis=0), np.maximum(X.std(axis=0), floor), kind)

    def __call__(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=float), np.array(d["scale"], dtype=float), d["kind"])


def save_checkpoint(model: EmbeddingModel, config: dict, seed: int, scaler=None, extra=None) -> str:
    doc = {
        "v": 1,
        "shapes": [list(w.shape) for w in model.weights],
        "weights": [w.ravel(order="C").tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "config": config,
        "seed": seed,
        "scaler": scaler.to_dict() if scaler is not None else None,
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc)


def load_checkpoint(text: str):
    doc = json.loads(text)
    weights = [np.array(w, dtype=np.float64).reshape(shape)
               for w, shape in zip(doc["weights"], doc["shapes"])]
    model = EmbeddingModel(weights, [np.array(b, dtype=np.float64) for b in doc["biases"]])
    scaler = Standardizer.from_dict(doc["scaler"]) if doc.get("scaler") else None
    return model, scaler, doc
