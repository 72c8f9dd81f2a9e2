"""Person point-cloud data model and frame canonicalization.

Coordinates are metric, y is vertical (up-positive). Arrays are stored as
read-only float64 copies so frames can be shared freely between workers.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFrame, InvalidFrame, InvalidSequence


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PersonFrame:
    points: np.ndarray
    colors: np.ndarray | None = None
    part_labels: np.ndarray | None = None
    timestamp_s: float = 0.0

    def __post_init__(self):
        pts = _frozen(self.points, np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidFrame(f"points must be (N, 3), got {pts.shape}")
        if len(pts) < 1:
            raise InvalidFrame("frame has no points")
        if not np.all(np.isfinite(pts)):
            raise InvalidFrame("non-finite coordinate")
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            col = _frozen(self.colors, np.float64)
            if col.shape != pts.shape:
                raise InvalidFrame(f"colors shape {col.shape} != points shape {pts.shape}")
            object.__setattr__(self, "colors", col)
        if self.part_labels is not None:
            lab = _frozen(self.part_labels, np.int64)
            if lab.shape != (len(pts),):
                raise InvalidFrame(f"part_labels shape {lab.shape} != ({len(pts)},)")
            object.__setattr__(self, "part_labels", lab)
        object.__setattr__(self, "timestamp_s", float(self.timestamp_s))

    def __len__(self):
        return len(self.points)

    def replace(self, **changes) -> "PersonFrame":
        kw = dict(points=self.points, colors=self.colors,
                  part_labels=self.part_labels, timestamp_s=self.timestamp_s)
        kw.update(changes)
        return PersonFrame(**kw)

    def equals(self, other: "PersonFrame") -> bool:
        """Exact (bitwise) equality of all fields."""
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)
        return (same(self.points, other.points) and same(self.colors, other.colors)
                and same(self.part_labels, other.part_labels)
                and self.timestamp_s == other.timestamp_s)


@dataclass(frozen=True, eq=False)
class PersonSequence:
    frames: tuple
    identity_id: str
    surgery_id: str
    sequence_id: str
    fps: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise InvalidSequence("sequence has no frames")
        if not self.identity_id or not self.surgery_id:
            raise InvalidSequence("identity_id and surgery_id must be nonempty")
        if not self.fps > 0:
            raise InvalidSequence(f"fps must be positive, got {self.fps}")
        ts = np.array([f.timestamp_s for f in frames])
        if np.any(np.diff(ts) <= 0):
            raise InvalidSequence(f"timestamps not strictly increasing in {self.sequence_id}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", float(self.fps))

    def __len__(self):
        return len(self.frames)


def normalize_frame(frame: PersonFrame) -> PersonFrame:
    """Rigidly canonicalize a segmented person cloud.

    Horizontal centroid goes to the origin, the 1st percentile of y to 0, and
    the dominant horizontal direction to +x. The sign of that direction is
    chosen so the first half of the points (file order) has a non-negative
    x-sum. Metric scale is never touched: height is an identity cue.
    """
    p = frame.points
    xz = p[:, [0, 2]]
    centered = xz - xz.mean(axis=0)
    y = p[:, 1] - np.percentile(p[:, 1], 1.0)

    cov = centered.T @ centered / len(centered)
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 1e-18:
        warnings.warn("all points coincide in the horizontal plane; frame left unrotated",
                      DegenerateFrame, stacklevel=2)
        out = np.column_stack([centered[:, 0], y, centered[:, 1]])
        return frame.replace(points=out)

    ux, uz = evecs[:, -1]
    # rotation about +y taking (ux, uz) to (1, 0); det = +1, never a mirror
    x_new = ux * centered[:, 0] + uz * centered[:, 1]
    z_new = -uz * centered[:, 0] + ux * centered[:, 1]
    half = max(1, len(p) // 2)
    if x_new[:half].sum() < 0:
        x_new, z_new = -x_new, -z_new
    return frame.replace(points=np.column_stack([x_new, y, z_new]))
