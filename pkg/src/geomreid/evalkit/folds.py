"""Surgery-partitioned cross-validation folds."""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import TooFewSurgeries


@dataclass(frozen=True)
class FoldSpec:
    fold_index: int
    train_surgeries: frozenset
    test_surgeries: frozenset


def make_folds(manifest, k: int) -> list:
    """Sorted surgeries dealt round-robin into ``k`` test sets.

    ``manifest`` may be a DatasetManifest or any iterable of surgery ids.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if hasattr(manifest, "surgeries"):
        surgeries = manifest.surgeries()
    else:
        surgeries = sorted(set(manifest))
    if len(surgeries) < k:
        raise TooFewSurgeries(f"{len(surgeries)} surgeries cannot fill {k} folds")
    every = frozenset(surgeries)
    folds = []
    for f in range(k):
        test = frozenset(surgeries[f::k])
        folds.append(FoldSpec(f, every - test, test))
    return folds
