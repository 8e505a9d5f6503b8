"""Gauss rules on circle arcs and spherical triangles, and stratification of
S^1 / S^2 by great circles so that piecewise-smooth integrands are smooth on
every element."""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi
_EPS = 1e-13


class QuadratureError(RuntimeError):
    """Requested tolerance not reached; carries the best estimate."""

    def __init__(self, message: str, estimate, error):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


@lru_cache(maxsize=None)
def gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def triangle_rule(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapsed Gauss rule on the reference triangle u, v >= 0, u + v <= 1."""
    x, w = gauss01(n)
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    u = s.ravel()
    v = ((1.0 - s) * t).ravel()
    wt_ = (ws * wt * (1.0 - s)).ravel()
    for a in (u, v, wt_):
        a.setflags(write=False)
    return u, v, wt_


def arc_nodes(theta0: float, theta1: float, n: int):
    """Angles and weights for an arc of the unit circle."""
    x, w = gauss01(n)
    return theta0 + (theta1 - theta0) * x, (theta1 - theta0) * w


def spherical_triangle_nodes(tri: np.ndarray, n: int):
    """Points on S^2 and weights for the spherical triangle with corners ``tri``.

    ``tri`` holds three corner vectors (rows).  The triangle is the radial
    projection of the planar triangle through the corners, so
    ``dA = |det(A, B, C)| / |p|^3 du dv``.
    """
    A, B, C = tri
    u, v, w = triangle_rule(n)
    p = A[None, :] + u[:, None] * (B - A)[None, :] + v[:, None] * (C - A)[None, :]
    rad = np.linalg.norm(p, axis=1)
    det = abs(np.linalg.det(tri))
    return p / rad[:, None], w * det / rad**3


def spherical_triangle_area(tri: np.ndarray) -> float:
    """Exact solid angle (Van Oosterom-Strackee)."""
    a, b, c = (x / np.linalg.norm(x) for x in tri)
    num = abs(np.dot(a, np.cross(b, c)))
    den = 1.0 + np.dot(a, b) + np.dot(b, c) + np.dot(c, a)
    return 2.0 * np.arctan2(num, den)


def _unit(x):
    return x / np.linalg.norm(x)


def octahedron_triangles() -> list[np.ndarray]:
    tris = []
    for sx, sy, sz in itertools.product((1.0, -1.0), repeat=3):
        tris.append(np.array([[sx, 0, 0], [0, sy, 0], [0, 0, sz]], dtype=float))
    return tris


def _clip_polygon(poly: list[np.ndarray], c: np.ndarray, sign: float) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of a planar polygon to ``sign * <c, p> >= 0``."""
    out = []
    k = len(poly)
    for i in range(k):
        P, Q = poly[i], poly[(i + 1) % k]
        sp, sq = sign * np.dot(c, P), sign * np.dot(c, Q)
        if sp >= 0:
            out.append(P)
        if (sp > 0 and sq < 0) or (sp < 0 and sq > 0):
            t = sp / (sp - sq)
            out.append(P + t * (Q - P))
    return out


def _fan(poly: list[np.ndarray]) -> list[np.ndarray]:
    tris = []
    pts = [_unit(p) for p in poly]
    for i in range(1, len(pts) - 1):
        tri = np.array([pts[0], pts[i], pts[i + 1]])
        if spherical_triangle_area(tri) > 1e-14:
            tris.append(tri)
    return tris


def split_triangles(tris: list[np.ndarray], cuts: np.ndarray) -> list[np.ndarray]:
    """Refine spherical triangles so no cut great circle crosses an interior."""
    for c in cuts:
        c = np.asarray(c, dtype=float)
        if np.linalg.norm(c) < _EPS:
            continue
        c = _unit(c)
        new = []
        for tri in tris:
            s = tri @ c
            if np.all(s >= -1e-12) or np.all(s <= 1e-12):
                new.append(tri)
                continue
            poly = list(tri)
            for sign in (1.0, -1.0):
                piece = _clip_polygon(poly, c, sign)
                if len(piece) >= 3:
                    new.extend(_fan(piece))
        tris = new
    return tris


def sphere_strata(cuts: np.ndarray, cone: np.ndarray | None = None) -> list[np.ndarray]:
    """Spherical triangles covering ``S^2 ∩ {<g, y> >= 0 for g in cone}``,
    each lying on one side of every cut plane."""
    cone = np.zeros((0, 3)) if cone is None else np.asarray(cone, dtype=float).reshape(-1, 3)
    cuts = np.asarray(cuts, dtype=float).reshape(-1, 3)
    tris = split_triangles(octahedron_triangles(), np.vstack([cone, cuts]))
    keep = []
    for tri in tris:
        centre = _unit(tri.sum(axis=0))
        if np.all(cone @ centre >= -1e-12):
            keep.append(tri)
    return keep


def circle_strata(cuts: np.ndarray, cone: np.ndarray | None = None) -> list[tuple[float, float]]:
    """Arcs ``(theta0, theta1)`` of S^1 inside the cone and on one side of
    every cut line."""
    cone = np.zeros((0, 2)) if cone is None else np.asarray(cone, dtype=float).reshape(-1, 2)
    cuts = np.asarray(cuts, dtype=float).reshape(-1, 2)
    breaks = [0.0]
    for c in np.vstack([cone, cuts]):
        if np.linalg.norm(c) < _EPS:
            continue
        phi = np.arctan2(c[1], c[0])
        breaks.extend(((phi + 0.5 * np.pi) % TWO_PI, (phi - 0.5 * np.pi) % TWO_PI))
    breaks = np.unique(np.round(np.array(breaks), 14))
    breaks = np.append(breaks, TWO_PI)
    arcs = []
    for t0, t1 in zip(breaks[:-1], breaks[1:]):
        if t1 - t0 < 1e-13:
            continue
        mid = 0.5 * (t0 + t1)
        y = np.array([np.cos(mid), np.sin(mid)])
        if np.all(cone @ y >= -1e-12):
            arcs.append((float(t0), float(t1)))
    return arcs


def subdivide_triangle(tri: np.ndarray) -> list[np.ndarray]:
    A, B, C = tri
    ab, bc, ca = _unit(A + B), _unit(B + C), _unit(C + A)
    return [
        np.array([A, ab, ca]),
        np.array([ab, B, bc]),
        np.array([ca, bc, C]),
        np.array([ab, bc, ca]),
    ]


@lru_cache(maxsize=None)
def cube_difference_directions(d: int) -> np.ndarray:
    """Distinct directions ``x_i - x_j`` between unit-cell vertices, up to sign."""
    dirs = []
    for v in itertools.product((-1, 0, 1), repeat=d):
        v = np.array(v)
        if not v.any():
            continue
        first = v[np.nonzero(v)[0][0]]
        if first > 0:
            dirs.append(v)
    out = np.array(dirs, dtype=float)
    out.setflags(write=False)
    return out
