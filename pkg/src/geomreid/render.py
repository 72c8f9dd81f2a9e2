"""Orthographic front-view projection of a person cloud into co-registered images.

The imaging volume is fixed and metric: rows cover y in [0, 2] m (row 0 at the
top), columns cover x in [-1, 1] m and depth is the z coordinate. Depth,
color and part images are all filled from one z-buffer assignment, so each
valid pixel is backed by the same point in every modality.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PersonFrame, PersonSequence, normalize_frame
from .errors import EmptyProjection, InvalidArg

Y_RANGE = (0.0, 2.0)
X_RANGE = (-1.0, 1.0)
NEAR_DEPTH_M = -1.0
FAR_DEPTH_M = 1.0
DEFAULT_RESOLUTION = (64, 64)
NO_COLOR = (0.5, 0.5, 0.5)


@dataclass(frozen=True, eq=False)
class ProjectedImages:
    depth: np.ndarray          # (H, W), NaN where empty
    color: np.ndarray          # (H, W, 3), zero where empty
    parts: np.ndarray          # (H, W), -1 where empty or unlabeled
    source_index: np.ndarray   # (H, W), index of the winning point, -1 where empty
    near_depth_m: float = NEAR_DEPTH_M
    far_depth_m: float = FAR_DEPTH_M
    has_color: bool = True

    @property
    def mask(self) -> np.ndarray:
        return self.source_index >= 0

    @property
    def resolution(self):
        return self.depth.shape

    @property
    def pixel_size_m(self):
        h, w = self.depth.shape
        return (Y_RANGE[1] - Y_RANGE[0]) / h, (X_RANGE[1] - X_RANGE[0]) / w


def pixel_coords(points: np.ndarray, resolution):
    """Row/column of each point plus an in-volume flag (closed intervals)."""
    h, w = resolution
    x, y = points[:, 0], points[:, 1]
    inside = (x >= X_RANGE[0]) & (x <= X_RANGE[1]) & (y >= Y_RANGE[0]) & (y <= Y_RANGE[1])
    rows = np.floor((Y_RANGE[1] - y) / (Y_RANGE[1] - Y_RANGE[0]) * h).astype(np.int64)
    cols = np.floor((x - X_RANGE[0]) / (X_RANGE[1] - X_RANGE[0]) * w).astype(np.int64)
    return np.clip(rows, 0, h - 1), np.clip(cols, 0, w - 1), inside


def row_heights(resolution) -> np.ndarray:
    """Height in meters of each pixel row's center."""
    h = resolution[0]
    return Y_RANGE[1] - (np.arange(h) + 0.5) * (Y_RANGE[1] - Y_RANGE[0]) / h


def project_person(frame: PersonFrame, resolution=DEFAULT_RESOLUTION,
                   near_depth_m: float = NEAR_DEPTH_M,
                   far_depth_m: float = FAR_DEPTH_M) -> ProjectedImages:
    h, w = map(int, resolution)
    if h < 8 or w < 8:
        raise InvalidArg(f"resolution must be at least 8x8, got {h}x{w}")
    pts = frame.points
    rows, cols, inside = pixel_coords(pts, (h, w))
    z = pts[:, 2]
    inside &= (z >= near_depth_m) & (z <= far_depth_m)
    idx = np.flatnonzero(inside)
    if idx.size == 0:
        raise EmptyProjection("no point falls inside the imaging volume")

    pix = rows[idx] * w + cols[idx]
    # z-buffer: per pixel, smallest z wins, lowest point index breaks ties
    order = np.lexsort((idx, z[idx], pix))
    pix_sorted = pix[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    win_pix = pix_sorted[first]
    win_pt = idx[order][first]

    source = np.full(h * w, -1, dtype=np.int64)
    source[win_pix] = win_pt
    depth = np.full(h * w, np.nan)
    depth[win_pix] = z[win_pt]
    color = np.zeros((h * w, 3))
    if frame.colors is not None:
        color[win_pix] = frame.colors[win_pt]
    else:
        color[win_pix] = NO_COLOR
    parts = np.full(h * w, -1, dtype=np.int64)
    if frame.part_labels is not None:
        parts[win_pix] = frame.part_labels[win_pt]

    return ProjectedImages(depth=depth.reshape(h, w), color=color.reshape(h, w, 3),
                           parts=parts.reshape(h, w), source_index=source.reshape(h, w),
                           near_depth_m=near_depth_m, far_depth_m=far_depth_m,
                           has_color=frame.colors is not None)


def _render_one(args):
    frame, resolution = args
    return project_person(normalize_frame(frame), resolution)


def render_sequence(seq: PersonSequence, resolution=DEFAULT_RESOLUTION) -> list:
    out = []
    for k, frame in enumerate(seq.frames):
        try:
            out.append(_render_one((frame, resolution)))
        except EmptyProjection as exc:
            raise EmptyProjection(f"frame {k} of {seq.sequence_id!r}: {exc}", frame_index=k) from None
    return out


# debug dumps ---------------------------------------------------------------

def depth_to_pgm(img: ProjectedImages) -> bytes:
    """16-bit PGM in millimeters above the near plane, offset by 1 so 0 marks empty."""
    h, w = img.depth.shape
    mm = np.zeros((h, w), dtype=">u2")
    m = img.mask
    mm[m] = np.rint((img.depth[m] - img.near_depth_m) * 1000.0).astype(np.int64) + 1
    return f"P5\n{w} {h}\n65535\n".encode("ascii") + mm.tobytes()


def color_to_ppm(rgb: np.ndarray) -> bytes:
    h, w, _ = rgb.shape
    q = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def parts_to_pgm(img: ProjectedImages) -> bytes:
    h, w = img.parts.shape
    q = np.clip(img.parts + 1, 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def read_pnm(data: bytes) -> np.ndarray:
    """Decode the binary P5/P6 files written above (no comments)."""
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    body = data[pos + 1:]  # exactly one whitespace byte follows maxval
    dt = ">u2" if maxval > 255 else "u1"
    ch = 3 if magic == b"P6" else 1
    arr = np.frombuffer(body, dtype=dt, count=w * h * ch)
    return arr.reshape((h, w, 3) if ch == 3 else (h, w))
