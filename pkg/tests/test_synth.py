import colorsys
import math

import numpy as np
import pytest
from scipy.stats import chi2

from geomreid.core import normalize_frame
from geomreid.errors import InvalidArg
from geomreid.synth import (BILATERAL, FEET_PARTS, HEIGHT_RANGE, L_SHIN, R_SHIN, SCRUB_COLOR, GenMode,
                            IdentityParams, accent_color, generate_sequence, identity_hue,
                            make_dataset, plan_dataset, point_allocation, sample_identity,
                            skeleton_pose)

STD = GenMode("standardized")
CONF = GenMode("confounded")


def test_identity_sampling_is_deterministic_and_distinct():
    assert sample_identity(3, 5) == sample_identity(3, 5)
    assert sample_identity(3, 5) != sample_identity(3, 6)
    assert sample_identity(3, 5) != sample_identity(4, 5)


def test_sequence_regeneration_is_bitwise():
    p = sample_identity(0, 2)
    a = generate_sequence(p, CONF, 6, 30.0, 99, n_points=512)
    b = generate_sequence(p, CONF, 6, 30.0, 99, n_points=512)
    c = generate_sequence(p, CONF, 6, 30.0, 100, n_points=512)
    for fa, fb, fc in zip(a.frames, b.frames, c.frames):
        assert np.array_equal(fa.points, fb.points) and np.array_equal(fa.colors, fb.colors)
        assert not np.array_equal(fa.points, fc.points)


def test_height_distribution_over_many_identities():
    h = np.array([sample_identity(0, i).height_m for i in range(100)])
    assert h.min() >= HEIGHT_RANGE[0] and h.max() <= HEIGHT_RANGE[1]
    assert 1.70 <= h.mean() <= 1.80
    assert h.max() - h.min() > 0.3


def test_bilateral_limbs_within_three_percent():
    for i in range(50):
        s = sample_identity(1, i).limb_scale
        for l, r in BILATERAL:
            assert abs(s[l] - s[r]) <= 0.03 * min(s[l], s[r])


def test_identity_params_validation():
    good = sample_identity(0, 0)
    for bad in ({"height_m": 2.5}, {"cadence_hz": 0.1}, {"phase_rad": 7.0},
                {"limb_scale": (1.0,) * 3}):
        with pytest.raises(InvalidArg):
            IdentityParams(**{**good.__dict__, **bad})
    asym = list(good.limb_scale)
    asym[L_SHIN], asym[R_SHIN] = 1.0, 1.1
    with pytest.raises(InvalidArg):
        IdentityParams(**{**good.__dict__, "limb_scale": tuple(asym)})


def test_sixty_frames_timestamps():
    seq = generate_sequence(sample_identity(0, 0), STD, 60, 30.0, 1, n_points=256)
    assert len(seq.frames) == 60
    ts = np.array([f.timestamp_s for f in seq.frames])
    assert np.allclose(ts, np.arange(60) / 30.0)
    assert all(len(f.points) == 256 for f in seq.frames)


def test_generator_argument_errors():
    p = sample_identity(0, 0)
    with pytest.raises(InvalidArg):
        generate_sequence(p, STD, 1, 30.0, 0)
    with pytest.raises(InvalidArg):
        generate_sequence(p, STD, 5, 0.0, 0)
    with pytest.raises(InvalidArg):
        GenMode("casual")


def test_point_allocation_sums():
    for n in (13, 100, 2048, 4097):
        c = point_allocation(n)
        assert c.sum() == n and c.min() >= 0


def _part_means(seq, parts=range(11)):
    cols = np.concatenate([f.colors for f in seq.frames])
    labs = np.concatenate([f.part_labels for f in seq.frames])
    return np.array([cols[labs == p].mean(axis=0) for p in parts]), cols, labs


def test_standardized_parts_share_one_color_distribution():
    means, sds, counts = [], [], []
    for i in range(8):
        m, cols, labs = _part_means(generate_sequence(sample_identity(0, i), STD, 4, 30.0, i, n_points=1024))
        means.append(m)
        sds.append(np.array([cols[labs == p].std(axis=0) for p in range(11)]))
        counts.append(np.array([(labs == p).sum() for p in range(11)]))
    means, sds, counts = np.array(means), np.array(sds), np.array(counts)
    # per part: are the 8 identity means jointly further from the pooled mean
    # than noise explains? chi-square at the 3-sigma two-sided level
    se2 = (sds / np.sqrt(counts)[..., None]) ** 2
    for part in range(11):
        m, v = means[:, part], se2[:, part]
        w = 1 / v
        pooled = (w * m).sum(axis=0) / w.sum(axis=0)
        stat = (((m - pooled) ** 2) / v).sum()
        assert stat < chi2.ppf(0.9973, df=3 * 7), part
    assert np.allclose(means, SCRUB_COLOR, atol=0.01)


def test_confounded_shoe_colors_follow_identity():
    feet = {}
    for i in range(8):
        m, _, _ = _part_means(generate_sequence(sample_identity(0, i), CONF, 3, 30.0, i, n_points=1024))
        feet[i] = m[list(FEET_PARTS)].mean(axis=0)
        # independent oracle: hsv of the identity hue at the accent settings
        expect = np.array(colorsys.hsv_to_rgb((0.057 + i * 0.6180339887498949) % 1.0, 0.85, 0.9))
        assert np.allclose(feet[i], expect, atol=0.02)
    for i in range(8):
        for j in range(i + 1, 8):
            assert np.abs(feet[i] - feet[j]).max() >= 0.2


def test_confounded_eyewear_band_on_the_head():
    p = sample_identity(0, 3)
    seq = generate_sequence(p, GenMode("confounded", color_noise_sd=0.0), 2, 30.0, 0, n_points=4096)
    f = seq.frames[0]
    eye = np.all(np.isclose(f.colors, p.attire_palette["eyewear"]), axis=1)
    assert eye.any()
    assert set(f.part_labels[eye].tolist()) == {2}
    h, s, v = colorsys.rgb_to_hsv(*p.attire_palette["eyewear"])
    assert abs(h - identity_hue(3)) < 1e-9


def test_make_dataset_counts_and_ids():
    manifest, seqs = make_dataset(3, 2, 2, STD, seed=5, n_frames=3, n_points=128)
    assert len(manifest.entries) == len(seqs) == 12
    assert manifest.mode_tag == "standardized"
    assert len({e.sequence_id for e in manifest.entries}) == 12
    assert {e.surgery_id for e in manifest.entries} == {"S01", "S02"}
    for e, s in zip(manifest.entries, seqs):
        assert (e.identity_id, e.surgery_id, e.sequence_id) == (s.identity_id, s.surgery_id, s.sequence_id)
    # same geometry regardless of mode: only colors change
    _, plans = plan_dataset(3, 2, 2, CONF, seed=5, n_frames=3, n_points=128)
    assert np.array_equal(plans[4].generate().frames[1].points, seqs[4].frames[1].points)


@pytest.mark.parametrize("noise", [0.0, 0.01])
def test_height_recoverable_from_normalized_clouds(noise):
    for i in range(8):
        p = sample_identity(2, i)
        seq = generate_sequence(p, GenMode("standardized", noise_sd_m=noise), 30, 30.0, i, n_points=2048)
        tops = [normalize_frame(f).points[:, 1].max() for f in seq.frames]
        assert abs(np.percentile(tops, 99) - p.height_m) <= 0.03


def test_skeleton_extent_over_a_gait_cycle():
    from geomreid.synth import _body_dims
    for i in range(10):
        p = sample_identity(4, i)
        _, rad = _body_dims(p)
        ext = []
        for t in np.linspace(0, 1 / p.cadence_hz, 40, endpoint=False):
            seg = skeleton_pose(p, t)
            top = seg[2, 1, 1] + rad[2]
            bottom = seg[[11, 12]][..., 1].min() - rad[11]
            ext.append(top - bottom)
            assert bottom >= -1e-9   # the sole never sinks below the floor
        # the longest leg defines stature; walking only ever shortens it a little
        assert max(ext) <= p.height_m + 1e-9
        assert max(ext) >= p.height_m - 0.02


def _acf_peak(x, lo, hi):
    x = x - x.mean()
    ac = np.array([np.dot(x[:-k], x[k:]) / (len(x) - k) for k in range(lo, hi)])
    return lo + int(np.argmax(ac))


def test_foot_separation_period_matches_cadence():
    fps = 30.0
    for i in range(6):
        p = sample_identity(0, i)
        seq = generate_sequence(p, STD, 150, fps, 7 + i, n_points=1024)
        diffs = []
        for f in seq.frames:
            pts, lab = f.points, f.part_labels
            d = pts[lab == L_SHIN].mean(axis=0) - pts[lab == R_SHIN].mean(axis=0)
            diffs.append(d[[0, 2]])
        diffs = np.array(diffs)
        # project on the dominant horizontal direction of the left-right difference
        c = diffs - diffs.mean(axis=0)
        axis = np.linalg.eigh(c.T @ c)[1][:, -1]
        sig = c @ axis
        period = fps / p.cadence_hz
        lag = _acf_peak(sig, int(period * 0.6), int(period * 1.5))
        assert abs(lag - period) <= 2


def _nearest_centroid_acc(mode):
    feats = {}
    for i in range(8):
        p = sample_identity(9, i)
        for s in range(4):
            seq = generate_sequence(p, mode, 3, 30.0, 1000 * s + i, n_points=1024)
            feats[(i, s)] = _part_means(seq)[0].ravel()
    cents = {i: np.mean([feats[(i, s)] for s in (0, 1)], axis=0) for i in range(8)}
    hits = []
    for i in range(8):
        for s in (2, 3):
            d = {j: np.linalg.norm(feats[(i, s)] - c) for j, c in cents.items()}
            hits.append(min(d, key=d.get) == i)
    return np.mean(hits)


def test_color_shortcut_only_in_confounded_mode():
    assert _nearest_centroid_acc(CONF) >= 0.9
    assert _nearest_centroid_acc(STD) <= 2 / 8


def test_accent_colors_are_saturated():
    for i in range(8):
        h, s, v = colorsys.rgb_to_hsv(*accent_color(identity_hue(i)))
        assert s == pytest.approx(0.85) and v == pytest.approx(0.9)
