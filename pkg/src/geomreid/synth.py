"""Synthetic OR-personnel walkers built from capsule-skinned skeletons.

Identity lives in geometry (stature, bone proportions, gait). Appearance is
either standardized (everyone in the same scrubs) or confounded, where shoe
and eyewear colors are a deterministic function of the identity index, i.e. a
shortcut a color model can latch onto.

All randomness comes from Philox streams keyed by hashed (seed, path) tuples,
so any sequence can be regenerated in isolation, in any order, on any worker.
"""
from __future__ import annotations

import colorsys
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import PersonFrame, PersonSequence
from .errors import InvalidArg
from .manifest import DatasetManifest, ManifestEntry, write_sequence

BONES = ("pelvis", "spine", "head",
         "l_upper_arm", "r_upper_arm", "l_forearm", "r_forearm",
         "l_thigh", "r_thigh", "l_shin_foot", "r_shin_foot")
PELVIS, SPINE, HEAD, L_UARM, R_UARM, L_FARM, R_FARM, L_THIGH, R_THIGH, L_SHIN, R_SHIN = range(11)
FEET_PARTS = (L_SHIN, R_SHIN)
HEAD_PARTS = (HEAD,)
BILATERAL = ((L_UARM, R_UARM), (L_FARM, R_FARM), (L_THIGH, R_THIGH), (L_SHIN, R_SHIN))

# Capsules: one per bone plus a foot capsule belonging to each shin+foot part.
L_FOOT, R_FOOT = 11, 12
CAPSULE_PART = np.array([*range(len(BONES)), L_SHIN, R_SHIN])

# body-frame convention: +x is the person's right, forward is -z
_EMIT_ORDER = (R_UARM, R_FARM, R_THIGH, R_SHIN, R_FOOT, PELVIS, SPINE, HEAD,
               L_UARM, L_FARM, L_THIGH, L_SHIN, L_FOOT)
_POINT_SHARE = np.array([0.07, 0.27, 0.18, 0.045, 0.045, 0.035, 0.035,
                         0.075, 0.075, 0.055, 0.055, 0.03, 0.03])

# lengths and radii as fractions of stature, before per-bone scaling
_LEN = dict(shin=0.245, thigh=0.245, spine=0.30, head=0.04, hip_half=0.085,
            upper_arm=0.17, forearm=0.16, shoulder_half=0.13, shoulder_drop=0.03,
            heel=0.03, toe=0.11)
_RAD = np.array([0.05, 0.09, 0.055, 0.028, 0.028, 0.024, 0.024, 0.045, 0.045, 0.028, 0.028,
                 0.03, 0.03])
_SPINE_DEPTH_RATIO = 2.0 / 3.0  # torso is wider than deep
_ELBOW_FLEX = 0.3

SCRUB_COLOR = (0.35, 0.55, 0.65)
COLOR_NOISE_SD = 0.02
GOLDEN = 0.6180339887498949
HUE_OFFSET = 0.057  # keeps the first 8 identity hues >2.5 deg from hue-bin edges
ACCENT_SAT, ACCENT_VAL = 0.85, 0.9
EYEWEAR_VAL = 0.6   # same hue as the shoes, darker

HEIGHT_RANGE = (1.55, 1.95)
CADENCE_RANGE = (0.7, 1.3)
STRIDE_RANGE = (0.3, 0.8)
ARM_SWING_RANGE = (0.1, 0.6)
LIMB_SCALE_RANGE = (0.9, 1.1)
BILATERAL_JITTER = 0.012


def _word(x) -> int:
    if isinstance(x, (int, np.integer)):
        return int(x) & 0xFFFFFFFFFFFFFFFF
    return int.from_bytes(hashlib.blake2b(str(x).encode(), digest_size=8).digest(), "little")


def counter_rng(seed, *path) -> np.random.Generator:
    """Philox generator whose key is derived from ``(seed, *path)``."""
    key = np.random.SeedSequence([_word(seed)] + [_word(p) for p in path]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed, *path) -> int:
    return int(np.random.SeedSequence([_word(seed)] + [_word(p) for p in path]).generate_state(1, np.uint64)[0])


def identity_hue(id_index: int) -> float:
    return (HUE_OFFSET + id_index * GOLDEN) % 1.0


def accent_color(hue: float, value: float = ACCENT_VAL):
    return tuple(colorsys.hsv_to_rgb(hue % 1.0, ACCENT_SAT, value))


@dataclass(frozen=True)
class IdentityParams:
    height_m: float
    limb_scale: tuple
    cadence_hz: float
    stride_amp_rad: float
    arm_swing_rad: float
    phase_rad: float
    attire_palette: dict = field(default_factory=dict)
    id_index: int = 0

    def __post_init__(self):
        checks = [(HEIGHT_RANGE, self.height_m, "height_m"),
                  (CADENCE_RANGE, self.cadence_hz, "cadence_hz"),
                  (STRIDE_RANGE, self.stride_amp_rad, "stride_amp_rad"),
                  (ARM_SWING_RANGE, self.arm_swing_rad, "arm_swing_rad")]
        for (lo, hi), v, name in checks:
            if not lo <= v <= hi:
                raise InvalidArg(f"{name}={v} outside [{lo}, {hi}]")
        if not 0 <= self.phase_rad < 2 * math.pi:
            raise InvalidArg(f"phase_rad={self.phase_rad} outside [0, 2pi)")
        if len(self.limb_scale) != len(BONES) or min(self.limb_scale) <= 0:
            raise InvalidArg(f"limb_scale needs {len(BONES)} positive factors")
        for l, r in BILATERAL:
            a, b = self.limb_scale[l], self.limb_scale[r]
            if abs(a - b) > 0.03 * min(a, b):
                raise InvalidArg(f"{BONES[l]}/{BONES[r]} scales differ by more than 3%")


@dataclass(frozen=True)
class GenMode:
    tag: str
    noise_sd_m: float = 0.005
    color_noise_sd: float = COLOR_NOISE_SD

    def __post_init__(self):
        if self.tag not in ("confounded", "standardized"):
            raise InvalidArg(f"unknown mode tag {self.tag!r}")
        if self.noise_sd_m < 0 or self.color_noise_sd < 0:
            raise InvalidArg("noise levels must be non-negative")


def sample_identity(seed: int, id_index: int) -> IdentityParams:
    rng = counter_rng(seed, "identity", id_index)
    height = rng.uniform(*HEIGHT_RANGE)
    cadence = rng.uniform(*CADENCE_RANGE)
    stride = rng.uniform(*STRIDE_RANGE)
    arm = rng.uniform(*ARM_SWING_RANGE)
    phase = rng.uniform(0.0, 2 * math.pi)
    scale = rng.uniform(*LIMB_SCALE_RANGE, size=len(BONES))
    jitter = rng.uniform(1 - BILATERAL_JITTER, 1 + BILATERAL_JITTER, size=len(BILATERAL))
    for (l, r), j in zip(BILATERAL, jitter):
        scale[r] = scale[l] * j
    hue = identity_hue(id_index)
    palette = {"scrub": SCRUB_COLOR, "feet": accent_color(hue), "eyewear": accent_color(hue, EYEWEAR_VAL)}
    return IdentityParams(height_m=float(height), limb_scale=tuple(float(s) for s in scale),
                          cadence_hz=float(cadence), stride_amp_rad=float(stride),
                          arm_swing_rad=float(arm), phase_rad=float(phase),
                          attire_palette=palette, id_index=int(id_index))


# skeleton ------------------------------------------------------------------

def _body_dims(params: IdentityParams):
    s = params.limb_scale
    L = {
        "shin": _LEN["shin"] * s[L_SHIN], "shin_r": _LEN["shin"] * s[R_SHIN],
        "thigh": _LEN["thigh"] * s[L_THIGH], "thigh_r": _LEN["thigh"] * s[R_THIGH],
        "spine": _LEN["spine"] * s[SPINE], "head": _LEN["head"] * s[HEAD],
        "hip_half": _LEN["hip_half"] * s[PELVIS],
        "uarm": _LEN["upper_arm"] * s[L_UARM], "uarm_r": _LEN["upper_arm"] * s[R_UARM],
        "farm": _LEN["forearm"] * s[L_FARM], "farm_r": _LEN["forearm"] * s[R_FARM],
        "shoulder_half": _LEN["shoulder_half"], "shoulder_drop": _LEN["shoulder_drop"],
        "heel": _LEN["heel"] * s[L_SHIN], "heel_r": _LEN["heel"] * s[R_SHIN],
        "toe": _LEN["toe"] * s[L_SHIN], "toe_r": _LEN["toe"] * s[R_SHIN],
    }
    rad = _RAD.copy()
    # hip height follows the longer leg; standing stature is foot sole to crown
    leg = max(L["shin"] + L["thigh"], L["shin_r"] + L["thigh_r"])
    stature = rad[L_FOOT] + leg + L["spine"] + L["head"] + rad[HEAD]
    f = params.height_m / stature
    L = {k: v * f for k, v in L.items()}
    L["hip_y"] = (rad[L_FOOT] + leg) * f
    return L, rad * f


def _sagittal(angle):
    """Unit vector pointing down, swung forward (toward -z) by ``angle``."""
    return np.array([0.0, -math.cos(angle), -math.sin(angle)])


def skeleton_pose(params: IdentityParams, t: float):
    """Capsule segments (13, 2, 3) at time ``t`` in the body frame."""
    L, _ = _body_dims(params)
    psi = 2 * math.pi * params.cadence_hz * t + params.phase_rad
    amp = params.stride_amp_rad / 2
    th_l = amp * math.sin(psi)
    th_r = -th_l
    k_l = 1.2 * amp * max(0.0, math.cos(psi)) ** 2
    k_r = 1.2 * amp * max(0.0, -math.cos(psi)) ** 2
    a_l = -params.arm_swing_rad * math.sin(psi)
    a_r = -a_l

    hip_y = L["hip_y"]
    hip_l = np.array([-L["hip_half"], hip_y, 0.0])
    hip_r = np.array([L["hip_half"], hip_y, 0.0])
    knee_l = hip_l + L["thigh"] * _sagittal(th_l)
    knee_r = hip_r + L["thigh_r"] * _sagittal(th_r)
    ankle_l = knee_l + L["shin"] * _sagittal(th_l - k_l)
    ankle_r = knee_r + L["shin_r"] * _sagittal(th_r - k_r)
    # feet stay level and point forward so no sole ever dips below the floor
    foot_l = foot_r = _sagittal(math.pi / 2)
    pelvis_c = np.array([0.0, hip_y, 0.0])
    neck = pelvis_c + np.array([0.0, L["spine"], 0.0])
    crown = neck + np.array([0.0, L["head"], 0.0])
    sh_y = neck[1] - L["shoulder_drop"]
    sh_l = np.array([-L["shoulder_half"], sh_y, 0.0])
    sh_r = np.array([L["shoulder_half"], sh_y, 0.0])
    el_l = sh_l + L["uarm"] * _sagittal(a_l)
    el_r = sh_r + L["uarm_r"] * _sagittal(a_r)
    wr_l = el_l + L["farm"] * _sagittal(a_l + _ELBOW_FLEX)
    wr_r = el_r + L["farm_r"] * _sagittal(a_r + _ELBOW_FLEX)

    seg = np.empty((len(CAPSULE_PART), 2, 3))
    seg[PELVIS] = hip_l, hip_r
    seg[SPINE] = pelvis_c, neck
    seg[HEAD] = neck, crown
    seg[L_UARM] = sh_l, el_l
    seg[R_UARM] = sh_r, el_r
    seg[L_FARM] = el_l, wr_l
    seg[R_FARM] = el_r, wr_r
    seg[L_THIGH] = hip_l, knee_l
    seg[R_THIGH] = hip_r, knee_r
    seg[L_SHIN] = knee_l, ankle_l
    seg[R_SHIN] = knee_r, ankle_r
    seg[L_FOOT] = ankle_l - L["heel"] * foot_l, ankle_l + L["toe"] * foot_l
    seg[R_FOOT] = ankle_r - L["heel_r"] * foot_r, ankle_r + L["toe_r"] * foot_r
    return seg


def point_allocation(n_points: int) -> np.ndarray:
    """Per-capsule point counts summing to ``n_points`` (largest remainder)."""
    raw = _POINT_SHARE * n_points
    counts = np.floor(raw).astype(np.int64)
    rest = n_points - counts.sum()
    order = np.lexsort((np.arange(len(raw)), -(raw - counts)))
    counts[order[:rest]] += 1
    return counts


def sample_capsules(rng, segments, radii, capsule_of_point):
    """Area-uniform samples on the capsule each point belongs to."""
    n = len(capsule_of_point)
    a = segments[capsule_of_point, 0]
    b = segments[capsule_of_point, 1]
    axis = b - a
    length = np.linalg.norm(axis, axis=1)
    d = axis / length[:, None]
    # lateral reference: x, or z for bones that run along x
    ref = np.where((np.abs(d[:, 0]) > 0.9)[:, None], [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = ref - (ref * d).sum(axis=1, keepdims=True) * d
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(d, e1)
    r1 = radii[capsule_of_point]
    r2 = np.where(capsule_of_point == SPINE, r1 * _SPINE_DEPTH_RATIO, r1)
    rbar = 0.5 * (r1 + r2)

    u = rng.random(n)
    s = rng.random(n) * length
    phi = rng.random(n) * 2 * math.pi
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)

    on_cyl = u < length / (length + 2 * rbar)
    c1 = np.where(on_cyl, np.cos(phi), v[:, 0])
    c2 = np.where(on_cyl, np.sin(phi), v[:, 1])
    along = np.where(on_cyl, s, np.where(v[:, 2] >= 0, length + rbar * v[:, 2], rbar * v[:, 2]))
    return a + along[:, None] * d + (r1 * c1)[:, None] * e1 + (r2 * c2)[:, None] * e2


def _yaw(points, angle):
    c, s = math.cos(angle), math.sin(angle)
    x, z = points[:, 0], points[:, 2]
    return np.column_stack([c * x + s * z, points[:, 1], -s * x + c * z])


def generate_sequence(params: IdentityParams, mode: GenMode, n_frames: int, fps: float,
                      seq_seed: int, n_points: int = 2048, identity_id=None,
                      surgery_id="S01", sequence_id=None) -> PersonSequence:
    if n_frames < 2:
        raise InvalidArg(f"n_frames must be >= 2, got {n_frames}")
    if not fps > 0:
        raise InvalidArg(f"fps must be positive, got {fps}")
    geo = counter_rng(seq_seed, "geometry")
    col = counter_rng(seq_seed, "color")
    heading = geo.uniform(0, 2 * math.pi)
    offset = geo.uniform(-2.0, 2.0, size=2)
    t0 = geo.uniform(0, 1.0 / params.cadence_hz)

    _, radii = _body_dims(params)
    counts = point_allocation(n_points)
    capsule_of_point = np.concatenate([np.full(counts[c], c) for c in _EMIT_ORDER])
    part_of_point = CAPSULE_PART[capsule_of_point]
    palette = params.attire_palette
    base = np.tile(np.asarray(SCRUB_COLOR), (n_points, 1))
    if mode.tag == "confounded":
        base[np.isin(part_of_point, FEET_PARTS)] = palette["feet"]

    frames = []
    for k in range(n_frames):
        t = k / fps
        seg = skeleton_pose(params, t0 + t)
        pts = sample_capsules(geo, seg, radii, capsule_of_point)
        pts += geo.normal(0.0, 1.0, size=pts.shape) * mode.noise_sd_m
        rgb = base.copy()
        if mode.tag == "confounded":
            head_c = 0.5 * (seg[HEAD, 0] + seg[HEAD, 1])
            rel_y = pts[:, 1] - head_c[1]
            r = radii[HEAD]
            band = ((part_of_point == HEAD) & (rel_y > -0.1 * r) & (rel_y < 0.35 * r)
                    & (pts[:, 2] < head_c[2]))
            rgb[band] = palette["eyewear"]
        rgb = np.clip(rgb + col.normal(0.0, 1.0, size=rgb.shape) * mode.color_noise_sd, 0.0, 1.0)
        pts = _yaw(pts, heading)
        pts[:, 0] += offset[0]
        pts[:, 2] += offset[1]
        frames.append(PersonFrame(points=pts, colors=rgb, part_labels=part_of_point,
                                  timestamp_s=t))
    ident = identity_id if identity_id is not None else f"P{params.id_index:02d}"
    return PersonSequence(frames=frames, identity_id=ident, surgery_id=surgery_id,
                          sequence_id=sequence_id or f"{surgery_id}_{ident}_0", fps=fps,
                          meta={"seq_seed": int(seq_seed), "mode": mode.tag,
                                "noise_sd_m": mode.noise_sd_m,
                                "color_noise_sd": mode.color_noise_sd})


@dataclass(frozen=True)
class PlannedSequence:
    """Everything needed to regenerate one dataset sequence on its own."""
    params: IdentityParams
    mode: GenMode
    seq_seed: int
    identity_id: str
    surgery_id: str
    sequence_id: str
    n_frames: int
    fps: float
    n_points: int

    def generate(self) -> PersonSequence:
        return generate_sequence(self.params, self.mode, self.n_frames, self.fps, self.seq_seed,
                                 n_points=self.n_points, identity_id=self.identity_id,
                                 surgery_id=self.surgery_id, sequence_id=self.sequence_id)


def plan_dataset(n_identities: int, n_surgeries: int, seqs_per_surgery: int, mode: GenMode,
                 seed: int, n_frames: int = 72, fps: float = 30.0, n_points: int = 2048):
    """Manifest plus per-sequence generation recipes, without generating points."""
    if min(n_identities, n_surgeries, seqs_per_surgery) < 1:
        raise InvalidArg("all counts must be >= 1")
    params = [sample_identity(seed, i) for i in range(n_identities)]
    entries, plans = [], []
    for s in range(n_surgeries):
        surgery = f"S{s + 1:02d}"
        for i, p in enumerate(params):
            ident = f"P{i:02d}"
            for k in range(seqs_per_surgery):
                sid = f"{surgery}_{ident}_{k}"
                plans.append(PlannedSequence(p, mode, derive_seed(seed, "seq", s, i, k), ident,
                                             surgery, sid, n_frames, float(fps), n_points))
                entries.append(ManifestEntry(sid, ident, surgery, f"sequences/{sid}", float(fps)))
    return DatasetManifest(entries=tuple(entries), mode_tag=mode.tag), plans


def make_dataset(n_identities: int, n_surgeries: int, seqs_per_surgery: int, mode: GenMode,
                 seed: int, n_frames: int = 72, fps: float = 30.0, n_points: int = 2048):
    """Every identity walks ``seqs_per_surgery`` times in every surgery."""
    manifest, plans = plan_dataset(n_identities, n_surgeries, seqs_per_surgery, mode, seed,
                                   n_frames, fps, n_points)
    return manifest, [p.generate() for p in plans]


def write_dataset(manifest: DatasetManifest, sequences, out_dir, form: str = "binary_le") -> Path:
    out = Path(out_dir)
    for entry, seq in zip(manifest.entries, sequences):
        write_sequence(seq, out / entry.file_path, form)
    (out / "manifest.json").write_text(manifest.to_json())
    return out / "manifest.json"
