"""Finite-difference verification of the analytic training gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..synth import counter_rng
from .model import EmbeddingModel, forward
from .triplet import batch_hard_loss, loss_and_grads


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_skipped: int        # parameters whose +-step crossed a kink


def _pattern(model, X, labels, margin):
    """Loss value plus the discrete state that decides which branch is taken."""
    E, cache = forward(model, X)
    loss, _, info = batch_hard_loss(E, labels, margin, with_grad=False)
    relus = tuple((z > 0).tobytes() for z in cache["pre"][:-1])
    return loss, (info["triplets"].tobytes(), (info["hinge"] > 0).tobytes(), relus)


def near_kink(model: EmbeddingModel, X, labels, margin, tol: float = 1e-6) -> bool:
    """True if the batch sits within ``tol`` of a hinge, ReLU or mining switch."""
    E, cache = forward(model, X)
    _, _, info = batch_hard_loss(E, labels, margin, with_grad=False)
    if np.any(np.abs(info["hinge"]) < tol):
        return True
    if any(np.any(np.abs(z) < tol) for z in cache["pre"][:-1]):
        return True
    D = info["D"]
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    for i in range(len(labels)):
        pos = np.sort(D[i][same[i]])[::-1]
        other = labels != labels[i]
        neg = np.sort(D[i][other])
        if (len(pos) > 1 and pos[0] - pos[1] < tol) or (len(neg) > 1 and neg[1] - neg[0] < tol):
            return True
    return False


def gradient_check_report(model: EmbeddingModel, X, labels, margin: float = 0.3,
                          n_params: int = 200, step: float = 1e-4, seed: int = 0) -> GradCheckResult:
    """Compare backprop gradients with central differences on random parameters.

    A parameter whose +step / -step evaluations land in a different branch
    (mined triplet, active hinge or ReLU pattern) is skipped and another one is
    drawn, since a finite difference across a kink measures nothing useful.
    """
    model = model.copy()
    X = np.asarray(X, dtype=np.float64)
    _, grads, _ = loss_and_grads(model, X, labels, margin)
    params = model.params()
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    _, base_pat = _pattern(model, X, labels, margin)

    order = counter_rng(seed, "gradcheck").permutation(total)
    want = min(n_params, total)
    worst, checked, skipped = 0.0, 0, 0
    for flat in order:
        if checked >= want:
            break
        li = int(np.searchsorted(offsets, flat, side="right") - 1)
        p = params[li].reshape(-1)
        j = flat - offsets[li]
        orig = p[j]
        p[j] = orig + step
        lp, pat_p = _pattern(model, X, labels, margin)
        p[j] = orig - step
        lm, pat_m = _pattern(model, X, labels, margin)
        p[j] = orig
        if pat_p != base_pat or pat_m != base_pat:
            skipped += 1
            continue
        gn = (lp - lm) / (2 * step)
        ga = grads[li].reshape(-1)[j]
        err = abs(ga - gn) / max(1e-8, abs(ga) + abs(gn))
        worst = max(worst, err)
        checked += 1
    return GradCheckResult(float(worst), checked, skipped)


def gradient_check(model: EmbeddingModel, batch, margin: float = 0.3,
                   n_params: int = 200, step: float = 1e-4, seed: int = 0) -> float:
    """Max relative error between analytic and numeric gradients; ``batch = (X, labels)``."""
    X, labels = batch
    return gradient_check_report(model, X, labels, margin, n_params, step, seed).max_rel_error
