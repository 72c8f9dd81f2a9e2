"""Sequence-level descriptors computed from rendered image stacks.

Geometric (16 values, metric units)::

    0  stature p99        99th percentile over frames of the silhouette top (m)
    1  height p50         mean over frames of the median pixel height (m)
    2  shoulder width     p95 of row extents in the 75-85% stature band (m)
    3  hip width          p95 of row extents in the 45-55% stature band (m)
    4  mean area, 5 max area (m^2)
    6  gait frequency (Hz), 7 stride amplitude (m)
    8-15  mean depth of 8 equal-height body bands (m)

The gait signal is the signed left/right depth difference of the lower body.
It swings once per stride, so its autocorrelation peaks at fps/cadence.

Appearance (48 values): 16-bin hue histograms (bin 0 = achromatic) for the
head, torso and feet bands of the silhouette, averaged over frames.

Both descriptors can return pixel gradients for the saliency audit; the
appearance one only through its soft-binned variant.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import NoColorData, NonDifferentiablePath, TooFewFrames
from ..render import row_heights

GEOMETRIC_DIM = 16
APPEARANCE_DIM = 48
N_HUE_BINS = 15
GRAY_SATURATION = 0.1
SOFT_TAU = 0.05
APPEARANCE_BANDS = (("head", 0.0, 0.15), ("torso", 0.25, 0.75), ("feet", 0.85, 1.0))
N_DEPTH_BANDS = 8
LOWER_BODY_FRACTION = 0.45
GEOMETRIC_NAMES = ("stature_p99", "height_p50", "shoulder_width", "hip_width",
                   "area_mean", "area_max", "gait_hz", "stride_amp",
                   *[f"depth_band_{j}" for j in range(N_DEPTH_BANDS)])


class _FrameGeom:
    """Per-frame silhouette bookkeeping shared by value and gradient code."""

    def __init__(self, img):
        self.img = img
        self.mask = img.mask
        h, w = self.mask.shape
        rows = np.flatnonzero(self.mask.any(axis=1))
        self.top, self.bottom = int(rows[0]), int(rows[-1])
        self.heights = row_heights((h, w))
        self.stature = float(self.heights[self.top])
        rel = self.heights / self.stature
        self.row_band = np.clip(np.floor(rel * N_DEPTH_BANDS), 0, N_DEPTH_BANDS - 1).astype(int)
        lower_rows = rel < LOWER_BODY_FRACTION
        cols = np.arange(w)
        self.left = self.mask & lower_rows[:, None] & (cols < w // 2)[None, :]
        self.right = self.mask & lower_rows[:, None] & (cols >= w // 2)[None, :]

    def asymmetry(self):
        d = self.img.depth
        if not self.left.any() or not self.right.any():
            return 0.0
        return float(d[self.left].mean() - d[self.right].mean())


def _row_extents(mask, rows, px_w):
    out = []
    for r in rows:
        c = np.flatnonzero(mask[r])
        if c.size:
            out.append((c[-1] - c[0] + 1) * px_w)
    return out


def gait_frequency(signal, fps: float) -> float:
    """Cadence from the autocorrelation peak over lags [fps/1.5, fps/0.5].

    Returns 0 when the signal is flat, too short for the lag window, or has no
    positive correlation there.
    """
    x = np.asarray(signal, dtype=float)
    x = x - x.mean()
    energy = float(np.dot(x, x))
    if len(x) < 3 or energy <= 1e-18 * len(x):
        return 0.0
    kmin = max(1, math.ceil(fps / 1.5))
    kmax = min(math.floor(fps / 0.5), len(x) - 2)
    if kmin > kmax:
        return 0.0
    r = np.array([np.dot(x[:-k], x[k:]) / energy for k in range(1, kmax + 2)])  # r[k-1] = lag k
    lags = np.arange(kmin, kmax + 1)
    k = int(lags[np.argmax(r[lags - 1])])
    if r[k - 1] <= 0:
        return 0.0
    lag = float(k)
    if k - 1 >= 1 and k + 1 <= kmax + 1:
        a, b, c = r[k - 2], r[k - 1], r[k]
        denom = a - 2 * b + c
        if denom < 0:
            lag += 0.5 * (a - c) / denom
    return fps / lag


def geometric_descriptor(seq_images, fps: float) -> np.ndarray:
    if len(seq_images) < 2:
        raise TooFewFrames(f"need >= 2 frames, got {len(seq_images)}")
    frames = [_FrameGeom(img) for img in seq_images]
    px_h, px_w = seq_images[0].pixel_size_m

    statures = np.array([f.stature for f in frames])
    med = np.array([np.median(np.broadcast_to(f.heights[:, None], f.mask.shape)[f.mask])
                    for f in frames])
    shoulder, hip = [], []
    for f in frames:
        rel = f.heights / f.stature
        shoulder += _row_extents(f.mask, np.flatnonzero((rel >= 0.75) & (rel <= 0.85)), px_w)
        hip += _row_extents(f.mask, np.flatnonzero((rel >= 0.45) & (rel <= 0.55)), px_w)
    area = np.array([f.mask.sum() * px_h * px_w for f in frames])
    asym = np.array([f.asymmetry() for f in frames])

    out = np.zeros(GEOMETRIC_DIM)
    out[0] = np.percentile(statures, 99)
    out[1] = med.mean()
    out[2] = np.percentile(shoulder, 95) if shoulder else 0.0
    out[3] = np.percentile(hip, 95) if hip else 0.0
    out[4] = area.mean()
    out[5] = area.max()
    out[6] = gait_frequency(asym, fps)
    out[7] = asym.std()
    out[8:] = _depth_bands(frames)[0]
    return out


def _depth_bands(frames):
    sums = np.zeros(N_DEPTH_BANDS)
    used = np.zeros(N_DEPTH_BANDS, dtype=int)
    for f in frames:
        band_img = np.broadcast_to(f.row_band[:, None], f.mask.shape)
        for j in range(N_DEPTH_BANDS):
            sel = f.mask & (band_img == j)
            if sel.any():
                sums[j] += f.img.depth[sel].mean()
                used[j] += 1
    return np.where(used > 0, sums / np.maximum(used, 1), 0.0), used


def geometric_pixel_grad(seq_images, fps: float, g: np.ndarray) -> np.ndarray:
    """d(g . descriptor)/d(depth) as a (T, H, W) stack.

    Only the stride amplitude and the depth bands depend on depth values; the
    rest depend on the silhouette mask alone and contribute nothing.
    """
    frames = [_FrameGeom(img) for img in seq_images]
    T = len(frames)
    out = np.zeros((T,) + frames[0].mask.shape)
    _, used = _depth_bands(frames)
    for t, f in enumerate(frames):
        band_img = np.broadcast_to(f.row_band[:, None], f.mask.shape)
        for j in range(N_DEPTH_BANDS):
            sel = f.mask & (band_img == j)
            n = sel.sum()
            if n:
                out[t][sel] += g[8 + j] / (used[j] * n)
    asym = np.array([f.asymmetry() for f in frames])
    sd = asym.std()
    if sd > 0 and g[7] != 0:
        dsd = (asym - asym.mean()) / (T * sd)
        for t, f in enumerate(frames):
            if f.left.any() and f.right.any():
                out[t][f.left] += g[7] * dsd[t] / f.left.sum()
                out[t][f.right] -= g[7] * dsd[t] / f.right.sum()
    return out


# appearance ----------------------------------------------------------------

def hue_saturation(rgb: np.ndarray):
    """Circular hue in turns (atan2 form) and HSV saturation."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    X = 2 * r - g - b
    Y = math.sqrt(3) * (g - b)
    hue = (np.arctan2(Y, X) / (2 * math.pi)) % 1.0
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    sat = np.where(mx > 0, (mx - mn) / np.where(mx > 0, mx, 1.0), 0.0)
    return hue, sat


def hue_bin(rgb) -> int:
    """Hard bin index of a single color: 0 for achromatic, else 1..15."""
    h, s = hue_saturation(np.asarray(rgb, dtype=float)[None, :])
    return int(_hard_bins(h, s)[0])


def _hard_bins(h, s):
    return np.where(s < GRAY_SATURATION, 0, 1 + np.minimum((h * N_HUE_BINS).astype(int), N_HUE_BINS - 1))


_CENTERS = (np.arange(N_HUE_BINS) + 0.5) / N_HUE_BINS


def _wrap(d):
    return (d + 0.5) % 1.0 - 0.5


def _soft_parts(h, s, tau):
    gate = 1.0 / (1.0 + np.exp(-(GRAY_SATURATION - s) / tau))
    d = _wrap(h[:, None] - _CENTERS[None, :])
    z = -d ** 2 / (2 * tau ** 2)
    z -= z.max(axis=1, keepdims=True)
    w = np.exp(z)
    w /= w.sum(axis=1, keepdims=True)
    return gate, w, d


def _soft_hist(rgb, tau):
    h, s = hue_saturation(rgb)
    gate, w, _ = _soft_parts(h, s, tau)
    return np.column_stack([gate, (1 - gate)[:, None] * w])


def _band_masks(img):
    m = img.mask
    rows = np.flatnonzero(m.any(axis=1))
    top, bottom = rows[0], rows[-1]
    u = (np.arange(m.shape[0]) - top + 0.5) / (bottom - top + 1)
    out = []
    for _, lo, hi in APPEARANCE_BANDS:
        sel_rows = (u >= lo) & ((u < hi) if hi < 1.0 else (u <= hi))
        out.append(m & sel_rows[:, None])
    return out


def appearance_descriptor(seq_images, binning: str = "hard", tau: float = SOFT_TAU) -> np.ndarray:
    if binning not in ("hard", "soft"):
        raise ValueError(f"binning must be 'hard' or 'soft', got {binning!r}")
    if not any(img.has_color for img in seq_images):
        raise NoColorData("no frame carries color")
    sums = np.zeros((len(APPEARANCE_BANDS), N_HUE_BINS + 1))
    used = np.zeros(len(APPEARANCE_BANDS), dtype=int)
    for img in seq_images:
        for b, sel in enumerate(_band_masks(img)):
            if not sel.any():
                continue
            rgb = img.color[sel]
            if binning == "hard":
                h, s = hue_saturation(rgb)
                hist = np.bincount(_hard_bins(h, s), minlength=N_HUE_BINS + 1).astype(float)
            else:
                hist = _soft_hist(rgb, tau).sum(axis=0)
            sums[b] += hist / sel.sum()
            used[b] += 1
    return (sums / np.maximum(used, 1)[:, None]).ravel()


def appearance_pixel_grad(seq_images, g: np.ndarray, binning: str = "soft",
                          tau: float = SOFT_TAU) -> np.ndarray:
    """d(g . soft descriptor)/d(color) as a (T, H, W, 3) stack."""
    if binning != "soft":
        raise NonDifferentiablePath("hard hue binning has no useful gradient; use binning='soft'")
    G = np.asarray(g, dtype=float).reshape(len(APPEARANCE_BANDS), N_HUE_BINS + 1)
    masks = [_band_masks(img) for img in seq_images]
    used = np.array([sum(m[b].any() for m in masks) for b in range(len(APPEARANCE_BANDS))])
    T = len(seq_images)
    out = np.zeros((T,) + seq_images[0].color.shape)
    for t, img in enumerate(seq_images):
        for b, sel in enumerate(masks[t]):
            n = sel.sum()
            if not n:
                continue
            rgb = img.color[sel]
            gb = G[b] / (used[b] * n)
            out[t][sel] = _soft_hist_vjp(rgb, gb, tau)
    return out


def _soft_hist_vjp(rgb, gb, tau):
    """Vector-Jacobian product of the per-pixel soft histogram w.r.t. rgb."""
    h, s = hue_saturation(rgb)
    gate, w, d = _soft_parts(h, s, tau)
    d_gate = gb[0] - w @ gb[1:]
    d_w = (1 - gate)[:, None] * gb[None, 1:]
    d_z = w * (d_w - (w * d_w).sum(axis=1, keepdims=True))
    d_h = (d_z * (-d / tau ** 2)).sum(axis=1)
    d_s = d_gate * (-gate * (1 - gate) / tau)

    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    X = 2 * r - g - b
    Y = math.sqrt(3) * (g - b)
    rr = X ** 2 + Y ** 2
    safe = np.where(rr > 1e-24, rr, 1.0)
    dh_dX = np.where(rr > 1e-24, -Y / (2 * math.pi * safe), 0.0)
    dh_dY = np.where(rr > 1e-24, X / (2 * math.pi * safe), 0.0)
    grad = np.zeros_like(rgb)
    grad[:, 0] += d_h * 2 * dh_dX
    grad[:, 1] += d_h * (-dh_dX + math.sqrt(3) * dh_dY)
    grad[:, 2] += d_h * (-dh_dX - math.sqrt(3) * dh_dY)

    n = len(rgb)
    imax = rgb.argmax(axis=1)
    imin = rgb.argmin(axis=1)
    mx = rgb[np.arange(n), imax]
    mn = rgb[np.arange(n), imin]
    ok = (mx > 0) & (imax != imin)
    mx_safe = np.where(ok, mx, 1.0)
    grad[np.arange(n), imax] += np.where(ok, d_s * mn / mx_safe ** 2, 0.0)
    grad[np.arange(n), imin] += np.where(ok, -d_s / mx_safe, 0.0)
    return grad
