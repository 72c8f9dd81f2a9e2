import dataclasses
import functools

import numpy as np
import pytest

from geomreid.core import PersonFrame
from geomreid.synth import GenMode, generate_sequence, sample_identity


def random_frame(rng, n=200, colors=True, labels=True, float32=True):
    pts = rng.normal(0, 0.5, size=(n, 3)) + [0, 1, 0]
    if float32:
        pts = pts.astype(np.float32).astype(np.float64)
    col = rng.integers(0, 256, size=(n, 3)) / 255.0 if colors else None
    lab = rng.integers(0, 11, size=n) if labels else None
    return PersonFrame(points=pts, colors=col, part_labels=lab)


def person(height=1.80, cadence=1.0, seed=7, id_index=0):
    p = sample_identity(seed, id_index)
    return dataclasses.replace(p, height_m=height, cadence_hz=cadence)


@functools.lru_cache(maxsize=None)
def walk(height=1.80, cadence=1.0, mode="standardized", n_frames=72, seq_seed=3,
         noise=0.005, id_index=0):
    return generate_sequence(person(height, cadence, id_index=id_index), GenMode(mode, noise),
                             n_frames, 30.0, seq_seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
