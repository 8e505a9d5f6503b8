from __future__ import annotations

import math

import numpy as np
import pytest

from voxelvol.phantoms import Phantom, surface_integral, unit_ball_volume


def _bodies():
    return {
        "ball3": Phantom.ball(np.zeros(3), 1.3),
        "capsule3": Phantom.capsule(np.array([0.1, 0.2, 0.3]), np.array([1.0, 2.0, 2.0]) / 3, 2.0, 0.7),
        "plate3": Phantom.orthobody(np.zeros(3), np.array([[1.0, 0, 0], [0, 0.6, 0.8]]), np.array([1.5, 0.5]), 0.4),
        "ball2": Phantom.ball(np.array([0.5, -0.5]), 2.0),
        "capsule2": Phantom.capsule(np.zeros(2), np.array([0.0, 1.0]), 3.0, 1.0),
    }


def test_contains_examples():
    t, r, eps = 2.0, 1.0, 1e-9
    ball = Phantom.ball(np.zeros(3), r)
    assert ball.contains(np.zeros(3))
    assert ball.contains(np.array([r, 0, 0]))
    cap = Phantom.capsule(np.zeros(3), np.array([1.0, 0, 0]), t, r)
    assert not cap.contains(np.array([t + r + eps, 0, 0]))
    assert cap.contains(np.array([t + r, 0, 0]))


def test_invalid_phantoms():
    with pytest.raises(ValueError):
        Phantom.ball(np.zeros(3), -1.0)
    with pytest.raises(ValueError):
        Phantom.orthobody(np.zeros(3), np.array([[1.0, 0, 0], [1.0, 1.0, 0]]) / [[1], [math.sqrt(2)]], [1.0, 1.0], 1.0)


def test_intrinsic_volumes_closed_forms():
    r, t = 0.8, 2.5
    ball = Phantom.ball(np.zeros(3), r).intrinsic_volumes()
    assert ball[1] == pytest.approx(4 * r)
    assert ball[3] == pytest.approx(4 / 3 * math.pi * r**3)
    assert ball[2] == pytest.approx(2 * math.pi * r**2)
    cap = Phantom.capsule(np.zeros(3), np.array([0, 0, 1.0]), t, r).intrinsic_volumes()
    assert cap[1] == pytest.approx(t + 4 * r)
    assert cap[3] == pytest.approx(4 / 3 * math.pi * r**3 + math.pi * r**2 * t)
    for body in _bodies().values():
        assert body.intrinsic_volumes()[0] == pytest.approx(1.0)
    disc = Phantom.ball(np.zeros(2), r).intrinsic_volumes()
    assert disc[1] == pytest.approx(math.pi * r)
    assert unit_ball_volume(3) == pytest.approx(4 / 3 * math.pi)


def test_patch_counts_and_kinds():
    b = _bodies()
    assert len(b["ball3"].boundary_patches()) == 1
    cap = b["capsule3"].boundary_patches()
    assert len(cap) == 3
    assert sorted(p.kind for p in cap) == ["cylinder", "spherical-cap", "spherical-cap"]
    assert len(b["plate3"].boundary_patches()) == 10


@pytest.mark.parametrize("name", list(_bodies()))
def test_steiner_consistency(name):
    X = _bodies()[name]
    d = X.dim
    V = X.intrinsic_volumes()
    area, _ = surface_integral(X, lambda bt: np.ones(len(bt.n)))
    assert area == pytest.approx(2 * V[d - 1], abs=1e-8)
    curv, _ = surface_integral(X, lambda bt: bt.curvatures.sum(axis=1))
    assert curv / (2 * math.pi) == pytest.approx(V[d - 2], abs=1e-8)


def test_cylinder_area():
    r, t = 0.7, 2.0
    cap = Phantom.capsule(np.zeros(3), np.array([0, 1.0, 0]), t, r)
    cyl = [p for p in cap.boundary_patches() if p.kind == "cylinder"][0]
    total = 0.0
    for el in cyl.normal_elements():
        _, _, w = cyl.nodes(el, 8)
        total += w.sum()
    assert total == pytest.approx(2 * math.pi * r * t)


@pytest.mark.parametrize("name", list(_bodies()))
def test_patch_samples_on_boundary_and_regular(name):
    X = _bodies()[name]
    rng = np.random.default_rng(5)
    for patch in X.boundary_patches():
        x, n = patch.sample(50, rng)
        assert np.allclose(X.distance_to_core(x), X.r, atol=1e-10)
        assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
        # inner and outer touching balls
        inner = x - X.r * n
        outer = x + X.r * n
        assert np.all(X.distance_to_core(inner) <= 1e-7)  # sqrt of a rounding-level residue
        assert np.allclose(X.distance_to_core(outer), 2 * X.r, atol=1e-9)
        # principal curvatures within [0, 1/r]
        k = patch.curvatures()
        assert np.all((k >= 0) & (k <= 1 / X.r + 1e-15))


def test_json_roundtrip():
    for X in _bodies().values():
        Y = Phantom.from_dict(X.to_dict())
        assert np.allclose(Y.center, X.center) and np.allclose(Y.edges, X.edges) and Y.r == X.r


def test_transformed_preserves_intrinsic_volumes():
    X = _bodies()["plate3"]
    th = 0.7
    R = np.array([[math.cos(th), -math.sin(th), 0], [math.sin(th), math.cos(th), 0], [0, 0, 1]])
    assert np.allclose(X.transformed(R, [1, 2, 3]).intrinsic_volumes(), X.intrinsic_volumes())
    assert np.allclose(X.scaled(2.0).intrinsic_volumes(), X.intrinsic_volumes() * 2.0 ** np.arange(4))
