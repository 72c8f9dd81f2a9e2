import numpy as np
import pytest
from scipy.stats import spearmanr

from geomreid.core import PersonFrame, PersonSequence, normalize_frame
from geomreid.errors import EmptyProjection, InvalidArg
from geomreid.render import (color_to_ppm, depth_to_pgm, parts_to_pgm, project_person, read_pnm,
                             render_sequence)
from geomreid.synth import GenMode, generate_sequence, sample_identity

from conftest import walk


def test_single_point_pixel():
    f = PersonFrame(points=[[0.0, 1.0, 0.3]], colors=[[1.0, 0.0, 0.0]])
    img = project_person(f, (64, 64))
    assert img.mask.sum() == 1
    assert img.mask[32, 32]
    assert img.depth[32, 32] == 0.3
    assert img.color[32, 32].tolist() == [1.0, 0.0, 0.0]
    assert img.source_index[32, 32] == 0 and img.parts[32, 32] == -1


def test_min_depth_wins_and_keeps_its_color():
    f = PersonFrame(points=[[0.0, 1.0, 0.5], [0.0, 1.0, 0.3]], colors=[[0, 1, 0], [1, 0, 0]],
                    part_labels=[4, 7])
    img = project_person(f, (64, 64))
    assert img.depth[32, 32] == 0.3
    assert img.color[32, 32].tolist() == [1, 0, 0]
    assert img.parts[32, 32] == 7


def test_depth_tie_goes_to_lowest_index():
    f = PersonFrame(points=[[0.0, 1.0, 0.3], [0.001, 1.001, 0.3]], colors=[[0, 0, 1], [1, 0, 0]])
    img = project_person(f, (64, 64))
    assert img.source_index[32, 32] == 0
    assert img.color[32, 32].tolist() == [0, 0, 1]


def test_no_color_frames_get_mid_gray():
    img = project_person(PersonFrame(points=[[0.0, 1.0, 0.0]]), (16, 16))
    assert img.color[img.mask].tolist() == [[0.5, 0.5, 0.5]]
    assert not img.has_color


def test_out_of_volume_frame():
    with pytest.raises(EmptyProjection):
        project_person(PersonFrame(points=[[1.5, 1.0, 0.0], [-1.01, 0.5, 0.0]]), (64, 64))
    with pytest.raises(EmptyProjection):  # outside the depth slab
        project_person(PersonFrame(points=[[0.0, 1.0, 1.5]]), (64, 64))


def test_closed_interval_edges():
    f = PersonFrame(points=[[-1.0, 0.0, -1.0], [1.0, 2.0, 1.0]])
    img = project_person(f, (8, 8))
    assert img.mask[7, 0] and img.mask[0, 7]


def test_minimum_resolution():
    with pytest.raises(InvalidArg):
        project_person(PersonFrame(points=[[0, 1, 0]]), (4, 64))


def test_modalities_share_the_assignment():
    seq = walk(n_frames=5)
    for img in render_sequence(seq):
        m = img.mask
        assert np.array_equal(m, np.isfinite(img.depth))
        assert np.array_equal(m, img.parts >= 0)  # every synthetic point is labeled
        assert np.all(img.color[~m] == 0)
    imgs = render_sequence(seq)
    for k, img in enumerate(imgs):
        nf = normalize_frame(seq.frames[k])
        src = img.source_index[img.mask]
        assert np.array_equal(img.depth[img.mask], nf.points[src, 2])
        assert np.array_equal(img.color[img.mask], nf.colors[src])
        assert np.array_equal(img.parts[img.mask], nf.part_labels[src])
        assert np.all((img.depth[img.mask] >= -1) & (img.depth[img.mask] <= 1))


def test_silhouette_height_constant_over_walk():
    imgs = render_sequence(walk(n_frames=10))
    assert len(imgs) == 10
    tops = [np.flatnonzero(i.mask.any(axis=1)) for i in imgs]
    px = np.array([t[-1] - t[0] + 1 for t in tops])
    assert px.max() - px.min() <= 2


def test_identical_frames_identical_images():
    f = walk(n_frames=2).frames[0]
    seq = PersonSequence(frames=[f.replace(timestamp_s=0.0), f.replace(timestamp_s=0.1)],
                         identity_id="a", surgery_id="s", sequence_id="x", fps=10)
    a, b = render_sequence(seq)
    for attr in ("depth", "color", "parts", "source_index"):
        assert np.array_equal(getattr(a, attr), getattr(b, attr), equal_nan=True)


def test_error_names_the_frame():
    seq = walk(n_frames=3)
    # normalization recenters, so make the cloud wider than the 2 m box with nothing near the middle
    pts = np.zeros((10, 3))
    pts[:, 0] = [-3, -2.9, -2.8, -2.7, -2.6, 2.6, 2.7, 2.8, 2.9, 3.0]
    bad = PersonFrame(points=pts, timestamp_s=seq.frames[1].timestamp_s)
    frames = [seq.frames[0], bad, seq.frames[2]]
    s2 = PersonSequence(frames=frames, identity_id="a", surgery_id="s", sequence_id="x", fps=30)
    with pytest.raises(EmptyProjection) as ei:
        render_sequence(s2)
    assert ei.value.frame_index == 1 and "frame 1" in str(ei.value)


def test_silhouette_height_monotone_in_true_height():
    heights, pix = [], []
    for i in range(24):
        p = sample_identity(11, i)
        seq = generate_sequence(p, GenMode("standardized"), 8, 30.0, 100 + i, n_points=1024)
        tops = [np.flatnonzero(im.mask.any(axis=1)) for im in render_sequence(seq, (128, 64))]
        heights.append(p.height_m)
        pix.append(np.max([t[-1] - t[0] + 1 for t in tops]))
    assert spearmanr(heights, pix).statistic >= 0.95


def test_debug_dumps_round_trip():
    img = render_sequence(walk(n_frames=2))[0]
    d = read_pnm(depth_to_pgm(img))
    m = img.mask
    assert np.array_equal(d > 0, m)
    assert np.allclose((d[m] - 1) / 1000.0 + img.near_depth_m, img.depth[m], atol=5e-4)
    c = read_pnm(color_to_ppm(img.color))
    assert c.shape == (64, 64, 3) and np.array_equal(c, np.rint(img.color * 255))
    p = read_pnm(parts_to_pgm(img))
    assert np.array_equal(p.astype(int) - 1, img.parts)
