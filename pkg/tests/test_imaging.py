from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from voxelvol import configs, imaging
from voxelvol.configs import InvalidInput
from voxelvol.experiments import random_rotation
from voxelvol.imaging import BinaryImage, LatticePose
from voxelvol.phantoms import Phantom


def test_pose_validation():
    with pytest.raises(InvalidInput):
        LatticePose(0.0, np.eye(2), np.zeros(2))
    with pytest.raises(InvalidInput):
        LatticePose(1.0, np.diag([1.0, -1.0]), np.zeros(2))
    with pytest.raises(InvalidInput):
        LatticePose(1.0, np.eye(2), np.array([0.0, 1.0]))


def test_voxelize_ball_centre_and_volume():
    r = 1.0
    a = r / 10
    img = imaging.voxelize(Phantom.ball(np.zeros(3), r), LatticePose.axis_aligned(a, 3))
    centre = tuple(-o for o in img.window_origin)
    assert img.to_array()[centre]
    a = r / 20
    img = imaging.voxelize(Phantom.ball(np.zeros(3), r), LatticePose(a, np.eye(3), [0.3, 0.6, 0.1]))
    assert img.foreground_count() * a**3 == pytest.approx(4 / 3 * math.pi * r**3, rel=0.02)


def test_voxelize_tiny_body_is_empty():
    img = imaging.voxelize(Phantom.ball(np.array([0.5, 0.5]), 0.1), LatticePose.axis_aligned(1.0, 2))
    assert img.foreground_count() == 0


def test_margin_below_spacing_rejected():
    with pytest.raises(InvalidInput):
        imaging.voxelize(Phantom.ball(np.zeros(2), 1.0), LatticePose.axis_aligned(0.1, 2), margin=0.05)


@pytest.mark.parametrize("seed", range(4))
def test_voxelize_matches_membership(seed):
    rng = np.random.default_rng(seed)
    d = 2 + seed % 2
    X = [
        Phantom.capsule(rng.standard_normal(d), np.eye(d)[0], 1.2, 0.6),
        Phantom.orthobody(rng.standard_normal(3), np.array([[1.0, 0, 0], [0, 0.6, 0.8]]), [0.7, 0.4], 0.5),
    ][seed // 2 if d == 3 else 0]
    pose = LatticePose(0.09, random_rotation(d, rng), rng.random(d))
    img = imaging.voxelize(X, pose, margin=0.2)
    k = np.indices(img.dims).reshape(d, -1).T + np.array(img.window_origin)
    assert np.array_equal(X.contains(pose.points(k)), img.to_array().ravel())
    arr = img.to_array()
    for ax in range(d):
        assert not np.take(arr, 0, axis=ax).any() and not np.take(arr, -1, axis=ax).any()


def test_bvox_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    pose = LatticePose(0.25, random_rotation(3, rng), rng.random(3))
    img = BinaryImage.from_array(rng.random((5, 6, 11)) < 0.4, pose, (3, -2, 7))
    path = tmp_path / "x.bvox"
    img.write(path)
    back = BinaryImage.read(path)
    assert back.dims == img.dims and back.window_origin == img.window_origin
    assert np.array_equal(back.bits, img.bits)
    assert np.allclose(back.pose.R, pose.R) and back.pose.a == pose.a
    path2 = tmp_path / "y.bvox"
    back.write(path2)
    assert path.read_bytes() == path2.read_bytes()
    head = path.read_bytes().split(b"\n", 1)[0]
    assert b'"packing": "row-major-lsb"' in head
    # 11 bits per row pad to 2 bytes
    assert len(path.read_bytes()) == len(head) + 1 + 5 * 6 * 2


def test_bvox_rejects_truncated(tmp_path):
    img = BinaryImage.from_array(np.ones((3, 3), bool))
    path = tmp_path / "t.bvox"
    img.write(path)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(InvalidInput):
        BinaryImage.read(path)


def test_bit_layout_lsb_first():
    arr = np.zeros((1, 9), bool)
    arr[0, 0] = arr[0, 8] = True
    img = BinaryImage.from_array(arr)
    assert img.bits.tolist() == [[1, 1]]


@pytest.mark.parametrize("d", [2, 3])
def test_constant_images(d):
    n = 6
    for fill, l in ((False, 0), (True, configs.full_mask(d))):
        h = imaging.count_configurations(BinaryImage.from_array(np.full((n,) * d, fill)))
        assert h.counts[l] == (n - 1) ** d and h.counts.sum() == (n - 1) ** d


def test_single_pixel():
    n = 7
    arr = np.zeros((n, n), bool)
    arr[3, 4] = True
    h = imaging.count_configurations(BinaryImage.from_array(arr))
    assert [h.counts[l] for l in (1, 2, 4, 8)] == [1, 1, 1, 1]
    assert h.counts[0] == (n - 1) ** 2 - 4
    part = configs.orbit_classes(2)
    nbar = imaging.count_classes(h, part)
    assert nbar[part.class_id("eta1")] == 4
    assert nbar[part.class_of[0]] == (n - 1) ** 2 - 4


def test_count_classes_sizes_and_mismatch():
    part = configs.orbit_classes(3)
    ones = imaging.ConfigHistogram(3, np.ones(256, dtype=np.int64), 256)
    assert imaging.count_classes(ones, part).tolist() == list(part.sizes)
    with pytest.raises(InvalidInput):
        imaging.count_classes(ones, configs.orbit_classes(2))


@settings(max_examples=60, deadline=None)
@given(arrays(bool, st.tuples(st.integers(2, 9), st.integers(2, 9), st.integers(2, 9))))
def test_fast_equals_brute_force_3d(arr):
    img = BinaryImage.from_array(arr)
    fast = imaging.count_configurations(img)
    assert fast == imaging.brute_force_count(img)
    comp = imaging.count_configurations(BinaryImage.from_array(~arr))
    assert np.array_equal(comp.counts, fast.counts[::-1])
    assert fast.counts.sum() == fast.window_cells == np.prod(np.array(arr.shape) - 1)


@settings(max_examples=60, deadline=None)
@given(arrays(bool, st.tuples(st.integers(2, 12), st.integers(2, 12))))
def test_fast_equals_brute_force_2d(arr):
    img = BinaryImage.from_array(arr)
    assert imaging.count_configurations(img) == imaging.brute_force_count(img)


def test_slab_split_does_not_change_counts(monkeypatch):
    rng = np.random.default_rng(2)
    img = BinaryImage.from_array(rng.random((17, 9, 13)) < 0.5)
    ref = imaging.count_configurations(img)
    monkeypatch.setattr(imaging, "_SLAB_VOXELS", 200)
    assert imaging.count_configurations(img) == ref


def test_counts_independent_of_window_margin():
    X = Phantom.capsule(np.array([0.1, 0.0, 0.2]), np.array([0.0, 0.6, 0.8]), 1.0, 0.5)
    pose = LatticePose(0.05, np.eye(3), [0.2, 0.7, 0.4])
    h1 = imaging.count_configurations(imaging.voxelize(X, pose, margin=0.1))
    h2 = imaging.count_configurations(imaging.voxelize(X, pose, margin=0.3))
    assert np.array_equal(h1.counts[1:], h2.counts[1:])
    assert h1.counts[0] < h2.counts[0]


def test_histogram_csv_roundtrip():
    rng = np.random.default_rng(4)
    h = imaging.count_configurations(BinaryImage.from_array(rng.random((8, 8)) < 0.5))
    text = h.to_csv()
    assert text.splitlines()[0] == "l,count"
    assert imaging.ConfigHistogram.from_csv(text, 2) == h


def test_counting_needs_two_samples_per_axis():
    with pytest.raises(InvalidInput):
        imaging.count_configurations(BinaryImage.from_array(np.ones((1, 5), bool)))
