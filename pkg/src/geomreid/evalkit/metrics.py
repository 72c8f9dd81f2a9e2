"""Probe-gallery ranking metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NoPositive, UnknownProbeIdentity

CMC_RANK = 3


@dataclass(frozen=True)
class MetricsReport:
    map: float
    cmc3: float
    acc_micro: float
    acc_macro: float
    per_probe_ranks: tuple          # 1-based rank of the first correct match
    per_identity_acc: dict = field(default_factory=dict)

    def as_dict(self):
        return {"map": self.map, "cmc3": self.cmc3,
                "acc_micro": self.acc_micro, "acc_macro": self.acc_macro}


METRIC_NAMES = ("map", "cmc3", "acc_micro", "acc_macro")


def average_precision(ranked_labels, probe_identity) -> float:
    hits = np.asarray([lab == probe_identity for lab in ranked_labels], dtype=bool)
    if hits.size == 0 or not hits.any():
        raise NoPositive(f"no gallery entry has identity {probe_identity!r}")
    ranks = np.flatnonzero(hits) + 1.0
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def rank_gallery(probe, gallery) -> np.ndarray:
    """Gallery indices sorted by squared distance, ties by gallery index."""
    d = ((gallery - probe) ** 2).sum(axis=1)
    return np.argsort(d, kind="stable")


def evaluate_probe_gallery(probe_emb, probe_labels, gallery_emb, gallery_labels) -> MetricsReport:
    probe_emb = np.atleast_2d(np.asarray(probe_emb, dtype=np.float64))
    gallery_emb = np.atleast_2d(np.asarray(gallery_emb, dtype=np.float64))
    probe_labels = list(probe_labels)
    gallery_labels = list(gallery_labels)
    if not probe_labels:
        raise ValueError("no probes")
    known = set(gallery_labels)
    missing = sorted({str(p) for p in probe_labels if p not in known})
    if missing:
        raise UnknownProbeIdentity(f"probe identities absent from gallery: {missing}")
    glab = np.asarray(gallery_labels, dtype=object)

    aps, first, top1 = [], [], []
    for e, lab in zip(probe_emb, probe_labels):
        ranked = glab[rank_gallery(e, gallery_emb)]
        aps.append(average_precision(ranked, lab))
        r = int(np.flatnonzero(ranked == lab)[0]) + 1
        first.append(r)
        top1.append(r == 1)
    first = np.array(first)
    top1 = np.array(top1)
    per_id = {}
    for lab in dict.fromkeys(probe_labels):
        sel = np.array([p == lab for p in probe_labels])
        per_id[lab] = float(top1[sel].mean())
    return MetricsReport(
        map=float(np.mean(aps)),
        cmc3=float(np.mean(first <= CMC_RANK)),
        acc_micro=float(top1.mean()),
        acc_macro=float(np.mean(list(per_id.values()))),
        per_probe_ranks=tuple(int(r) for r in first),
        per_identity_acc=per_id,
    )
