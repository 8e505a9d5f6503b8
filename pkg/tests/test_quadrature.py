from __future__ import annotations

import math

import numpy as np
import pytest

from voxelvol import quadrature as q


def test_triangle_rule_integrates_polynomials():
    u, v, w = q.triangle_rule(6)
    assert w.sum() == pytest.approx(0.5)
    # ∫ u^2 v over the reference triangle = 2! 1! / 5! = 1/60
    assert (w * u**2 * v).sum() == pytest.approx(1 / 60, abs=1e-14)


def test_octant_area():
    tri = np.eye(3)
    assert q.spherical_triangle_area(tri) == pytest.approx(math.pi / 2)
    _, w = q.spherical_triangle_nodes(tri, 16)
    assert w.sum() == pytest.approx(math.pi / 2, abs=1e-10)


def test_sphere_strata_cover_sphere_and_respect_cuts():
    cuts = q.cube_difference_directions(3)
    assert len(cuts) == 13
    tris = q.sphere_strata(cuts)
    assert sum(q.spherical_triangle_area(t) for t in tris) == pytest.approx(4 * math.pi, abs=1e-10)
    for t in tris:
        s = t @ cuts.T
        assert np.all((s >= -1e-12).all(axis=0) | (s <= 1e-12).all(axis=0))


def test_sphere_strata_with_cone():
    cone = np.eye(3)
    tris = q.sphere_strata(q.cube_difference_directions(3), cone)
    assert sum(q.spherical_triangle_area(t) for t in tris) == pytest.approx(math.pi / 2, abs=1e-12)


def test_circle_strata():
    arcs = q.circle_strata(q.cube_difference_directions(2))
    assert len(arcs) == 8
    assert sum(b - a for a, b in arcs) == pytest.approx(2 * math.pi)
    half = q.circle_strata(np.zeros((0, 2)), np.array([[0.0, 1.0]]))
    assert sum(b - a for a, b in half) == pytest.approx(math.pi)
