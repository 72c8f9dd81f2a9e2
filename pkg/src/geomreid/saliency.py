"""Input-gradient saliency over the descriptor -> embedding pipeline.

A pipeline maps a rendered sequence to an output vector and can pull a
gradient on that vector back to the pixels (depth for the geometric arm,
color for the appearance arm). An objective turns the output into a scalar.
The map is |d objective / d pixel| summed over channels, normalized to sum 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embed.descriptors import (SOFT_TAU, appearance_descriptor, appearance_pixel_grad,
                                geometric_descriptor, geometric_pixel_grad)
from .embed.model import backward, forward
from .errors import NonDifferentiablePath, ShapeMismatch
from .synth import FEET_PARTS, HEAD_PARTS


class DescriptorPipeline:
    """Descriptor extractor, optional input scaler and optional embedding model."""

    def __init__(self, kind: str, fps: float = 30.0, scaler=None, model=None,
                 binning: str = "soft", tau: float = SOFT_TAU):
        if kind not in ("geometric", "appearance"):
            raise ValueError(f"unknown descriptor kind {kind!r}")
        self.kind, self.fps, self.scaler, self.model = kind, fps, scaler, model
        self.binning, self.tau = binning, tau

    def descriptor(self, seq_images):
        if self.kind == "geometric":
            return geometric_descriptor(seq_images, self.fps)
        return appearance_descriptor(seq_images, binning=self.binning, tau=self.tau)

    def _run(self, seq_images):
        x = self.descriptor(seq_images)
        if self.scaler is not None:
            x = self.scaler(x)
        if self.model is None:
            return x, None
        E, cache = forward(self.model, x[None, :])
        return E[0], cache

    def forward(self, seq_images):
        return self._run(seq_images)[0]

    def vjp(self, seq_images, gy):
        if self.kind == "appearance" and self.binning != "soft":
            raise NonDifferentiablePath("saliency needs the soft-binned appearance descriptor")
        _, cache = self._run(seq_images)
        g = np.asarray(gy, dtype=np.float64)
        if self.model is not None:
            _, gx = backward(self.model, cache, g[None, :])
            g = gx[0]
        if self.scaler is not None:
            g = g / self.scaler.scale
        if self.kind == "geometric":
            return geometric_pixel_grad(seq_images, self.fps, g)
        return appearance_pixel_grad(seq_images, g, binning="soft", tau=self.tau)


@dataclass(frozen=True)
class LinearHead:
    """Softmax-regression identity head on top of a pipeline output."""
    weight: np.ndarray   # (C, D)
    bias: np.ndarray     # (C,)
    classes: tuple

    def logits(self, y):
        return self.weight @ y + self.bias


def fit_linear_head(Y, labels, l2: float = 1e-2, lr: float = 0.5, steps: int = 500) -> LinearHead:
    """Full-batch gradient descent on L2-regularized softmax cross-entropy."""
    Y = np.asarray(Y, dtype=np.float64)
    classes = tuple(sorted(set(labels)))
    idx = np.array([classes.index(l) for l in labels])
    n, d = Y.shape
    C = len(classes)
    onehot = np.eye(C)[idx]
    W = np.zeros((C, d))
    b = np.zeros(C)
    for _ in range(steps):
        z = Y @ W.T + b
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        gz = (p - onehot) / n
        W -= lr * (gz.T @ Y + l2 * W)
        b -= lr * gz.sum(axis=0)
    return LinearHead(W, b, classes)


class IdentityLogit:
    def __init__(self, head: LinearHead, identity):
        self.head = head
        self.row = head.classes.index(identity)

    def value(self, y):
        return float(self.head.logits(y)[self.row])

    def grad(self, y):
        return self.head.weight[self.row].copy()


class MatchScore:
    """Negative squared distance to a reference embedding."""

    def __init__(self, reference):
        self.reference = np.asarray(reference, dtype=np.float64)

    def value(self, y):
        return -float(((y - self.reference) ** 2).sum())

    def grad(self, y):
        return -2.0 * (y - self.reference)


@dataclass(frozen=True)
class SaliencyMap:
    weights: np.ndarray    # (T, H, W) nonnegative, sums to 1 unless all_zero
    valid: np.ndarray      # (T, H, W) silhouette masks
    all_zero: bool

    def aggregate(self):
        """Frame-summed (H, W) map."""
        return self.weights.sum(axis=0)

    def entropy(self) -> float:
        """Normalized Shannon entropy over valid pixels (1 = perfectly diffuse)."""
        n = int(self.valid.sum())
        if self.all_zero or n < 2:
            return 0.0
        w = self.weights[self.valid]
        w = w[w > 0]
        return float(-(w * np.log(w)).sum() / np.log(n))


def _normalized_map(raw, valid):
    raw = np.where(valid, raw, 0.0)
    total = raw.sum()
    if total <= 0 or not np.isfinite(total):
        return SaliencyMap(np.zeros_like(raw), valid, True)
    return SaliencyMap(raw / total, valid, False)


def input_gradient_saliency(pipeline, seq_images, objective) -> SaliencyMap:
    y = pipeline.forward(seq_images)
    grad = pipeline.vjp(seq_images, objective.grad(y))
    grad = np.abs(np.asarray(grad, dtype=np.float64))
    valid = np.stack([img.mask for img in seq_images])
    if grad.ndim == valid.ndim + 1:
        grad = grad.sum(axis=-1)
    if grad.shape != valid.shape:
        raise ShapeMismatch(f"pixel gradient {grad.shape} vs images {valid.shape}")
    return _normalized_map(grad, valid)


@dataclass(frozen=True)
class RegionShares:
    saliency: dict   # part -> share of saliency on labeled pixels
    area: dict       # part -> share of labeled pixels

    def combined(self, parts):
        return (sum(self.saliency.get(p, 0.0) for p in parts),
                sum(self.area.get(p, 0.0) for p in parts))

    def rows(self):
        return [(p, self.saliency[p], self.area[p]) for p in sorted(self.area)]


def region_attribution(smap, parts) -> RegionShares:
    """Per-part saliency and area shares over pixels carrying a part label."""
    w = smap.weights if isinstance(smap, SaliencyMap) else np.asarray(smap, dtype=np.float64)
    parts = np.asarray(parts)
    if w.shape != parts.shape:
        raise ShapeMismatch(f"map {w.shape} vs parts {parts.shape}")
    labeled = parts >= 0
    labels = np.unique(parts[labeled])
    mass = w[labeled].sum()
    n = labeled.sum()
    sal, area = {}, {}
    for p in labels:
        sel = parts == p
        sal[int(p)] = float(w[sel].sum() / mass) if mass > 0 else 0.0
        area[int(p)] = float(sel.sum() / n)
    return RegionShares(sal, area)


def feet_head_shares(shares: RegionShares):
    return shares.combined(FEET_PARTS + HEAD_PARTS)


def heat_rgb(v):
    """Black-red-yellow-white ramp for values in [0, 1]."""
    v = np.clip(v, 0.0, 1.0)
    return np.stack([np.clip(3 * v, 0, 1), np.clip(3 * v - 1, 0, 1), np.clip(3 * v - 2, 0, 1)], axis=-1)


def overlay(color, weights, valid, alpha: float = 0.5):
    """Blend an 8-bit quantized heat map onto a color image where valid."""
    peak = weights.max()
    v = weights / peak if peak > 0 else np.zeros_like(weights)
    v = np.rint(v * 255.0) / 255.0
    out = color.copy()
    out[valid] = (1 - alpha) * color[valid] + alpha * heat_rgb(v)[valid]
    return out
