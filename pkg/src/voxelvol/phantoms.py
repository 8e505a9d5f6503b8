"""Exact r-regular test bodies ``P ⊕ B(r)`` with ``P`` a point, a segment or an
orthogonal box, together with their boundary patches and closed-form
intrinsic volumes."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import comb, gamma

from .quadrature import (
    QuadratureError,
    arc_nodes,
    circle_strata,
    cube_difference_directions,
    gauss01,
    sphere_strata,
    spherical_triangle_nodes,
    subdivide_triangle,
)

_ORTHO_TOL = 1e-12


def unit_ball_volume(n: int) -> float:
    """``kappa_n``, volume of the unit ball in R^n."""
    return math.pi ** (n / 2) / gamma(n / 2 + 1)


def _orthonormal_complement(U: np.ndarray, d: int) -> np.ndarray:
    """Columns form an orthonormal basis of ``span(U)^⊥``."""
    if U.shape[0] == 0:
        return np.eye(d)
    q, _ = np.linalg.qr(np.vstack([U, np.eye(d)]).T)
    basis = q[:, U.shape[0]:d]
    # Fix orientation deterministically.
    for k in range(basis.shape[1]):
        i = np.argmax(np.abs(basis[:, k]))
        if basis[i, k] < 0:
            basis[:, k] *= -1
    return basis


@dataclass(frozen=True, eq=False)
class Phantom:
    """``(p + ⊕_i [0, t_i u_i]) ⊕ B(r)`` with orthonormal ``u_i``.

    ``edges`` holds the vectors ``t_i u_i`` as rows.  A ball has no edges,
    a capsule has one.
    """

    variant: str
    r: float
    center: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        edges = np.asarray(self.edges, dtype=float).reshape(-1, center.size)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "edges", edges)
        if not self.r > 0:
            raise ValueError("r must be positive")
        d = center.size
        if d < 2:
            raise ValueError("phantoms need d >= 2")
        if edges.shape[0] > d - 1:
            raise ValueError(f"at most {d - 1} edges allowed in d={d}")
        lengths = np.linalg.norm(edges, axis=1)
        if np.any(lengths <= 0):
            raise ValueError("edge lengths t_i must be positive")
        if edges.shape[0]:
            U = edges / lengths[:, None]
            if not np.allclose(U @ U.T, np.eye(len(U)), atol=_ORTHO_TOL, rtol=0):
                raise ValueError("edge directions must be pairwise orthogonal")

    # -- construction -----------------------------------------------------
    @classmethod
    def ball(cls, center, r: float) -> "Phantom":
        center = np.asarray(center, dtype=float)
        return cls("ball", r, center, np.zeros((0, center.size)))

    @classmethod
    def capsule(cls, p, u, t: float, r: float) -> "Phantom":
        u = np.asarray(u, dtype=float)
        if abs(np.linalg.norm(u) - 1) > _ORTHO_TOL:
            raise ValueError("u must be a unit vector")
        return cls("capsule", r, np.asarray(p, dtype=float), (t * u)[None, :])

    @classmethod
    def orthobody(cls, p, u, t, r: float) -> "Phantom":
        U = np.atleast_2d(np.asarray(u, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if U.shape[0] != t.size:
            raise ValueError("need one length per direction")
        if np.any(np.abs(np.linalg.norm(U, axis=1) - 1) > _ORTHO_TOL):
            raise ValueError("directions must be unit vectors")
        return cls("orthobody", r, np.asarray(p, dtype=float), U * t[:, None])

    @classmethod
    def from_dict(cls, data: dict) -> "Phantom":
        variant = data.get("variant")
        r = float(data["r"])
        if "center" not in data:
            raise ValueError("phantom needs a 'center'")
        center = data["center"]
        if variant == "ball":
            return cls.ball(center, r)
        if variant == "capsule":
            u = data["u"]
            t = data["t"]
            t = t[0] if isinstance(t, (list, tuple)) else t
            u = u[0] if isinstance(u[0], (list, tuple)) else u
            return cls.capsule(center, u, float(t), r)
        if variant == "orthobody":
            return cls.orthobody(center, data["u"], data["t"], r)
        raise ValueError(f"unknown phantom variant {variant!r}")

    def to_dict(self) -> dict:
        lengths = self.lengths
        out = {"variant": self.variant, "r": self.r, "center": self.center.tolist()}
        if self.k:
            out["u"] = (self.edges / lengths[:, None]).tolist()
            out["t"] = lengths.tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    # -- geometry ---------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def k(self) -> int:
        return self.edges.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edges, axis=1)

    @property
    def directions(self) -> np.ndarray:
        return self.edges / self.lengths[:, None] if self.k else self.edges

    def transformed(self, R: np.ndarray, shift=None) -> "Phantom":
        """Image ``R X + shift`` (R orthogonal)."""
        R = np.asarray(R, dtype=float)
        center = R @ self.center
        if shift is not None:
            center = center + np.asarray(shift, dtype=float)
        return Phantom(self.variant, self.r, center, self.edges @ R.T)

    def scaled(self, s: float) -> "Phantom":
        return Phantom(self.variant, self.r * s, self.center * s, self.edges * s)

    def distance_to_core(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point to the core ``P``."""
        y = np.asarray(points, dtype=float) - self.center
        if not self.k:
            return np.sqrt(np.einsum("...i,...i->...", y, y))
        U = self.directions
        s = y @ U.T
        excess = s - np.clip(s, 0.0, self.lengths)
        perp2 = np.einsum("...i,...i->...", y, y) - np.einsum("...i,...i->...", s, s)
        d2 = np.maximum(perp2, 0.0) + np.einsum("...i,...i->...", excess, excess)
        return np.sqrt(d2)

    def contains(self, points) -> np.ndarray | bool:
        """Closed-set membership: boundary points belong to the body."""
        pts = np.asarray(points, dtype=float)
        inside = self.distance_to_core(pts) <= self.r
        return bool(inside) if inside.ndim == 0 else inside

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        corners = [self.center + np.asarray(c) @ self.edges if self.k else self.center
                   for c in itertools.product((0, 1), repeat=self.k)]
        corners = np.array(corners).reshape(-1, self.dim)
        return corners.min(axis=0) - self.r, corners.max(axis=0) + self.r

    def circumradius_core(self) -> float:
        return 0.5 * float(np.linalg.norm(self.lengths)) if self.k else 0.0

    # -- intrinsic volumes ------------------------------------------------
    def core_intrinsic_volumes(self) -> np.ndarray:
        """``V_m(P)`` for the box core: elementary symmetric polynomials of the edge lengths."""
        t = self.lengths
        e = np.zeros(self.dim + 1)
        e[0] = 1.0
        for ti in t:
            e[1:] = e[1:] + ti * e[:-1]
        return e

    def intrinsic_volumes(self) -> np.ndarray:
        """``(V_0, ..., V_d)`` by the Steiner formula for ``P ⊕ B(r)``."""
        d, r = self.dim, self.r
        vp = self.core_intrinsic_volumes()
        out = np.zeros(d + 1)
        for j in range(d + 1):
            out[j] = sum(
                comb(d - m, d - j, exact=True)
                * unit_ball_volume(d - m)
                / unit_ball_volume(d - j)
                * r ** (j - m)
                * vp[m]
                for m in range(j + 1)
            )
        return out

    # -- boundary ---------------------------------------------------------
    def boundary_patches(self) -> list["BoundaryPatch"]:
        """Faces of the core times the matching parts of the normal sphere."""
        d, k = self.dim, self.k
        U = self.directions
        patches = []
        for m in range(k + 1):
            for K in itertools.combinations(range(k), m):
                rest = [s for s in range(k) if s not in K]
                N = _orthonormal_complement(U[list(K)], d)
                for eps in itertools.product((0, 1), repeat=len(rest)):
                    anchor = self.center + sum(
                        (e * self.edges[s] for s, e in zip(rest, eps)), np.zeros(d)
                    )
                    cone = np.array([U[s] if e else -U[s] for s, e in zip(rest, eps)]).reshape(-1, d)
                    face = self.edges[list(K)].reshape(-1, d)
                    q = d - 1 - m
                    if q == 0:
                        v = N[:, 0]
                        for sgn in (1.0, -1.0):
                            if np.all(cone @ (sgn * v) >= -1e-12):
                                patches.append(
                                    BoundaryPatch(anchor, face, (sgn * v)[:, None], cone, self.r)
                                )
                    else:
                        patches.append(BoundaryPatch(anchor, face, N, cone, self.r))
        return patches

    def surface_integral(self, f: Callable, tol: float = 1e-9, cuts=None, order: int = 10):
        """Integral of ``f`` over the boundary; see :func:`surface_integral`."""
        return surface_integral(self, f, tol=tol, cuts=cuts, order=order)


@dataclass(frozen=True, eq=False)
class BoundaryPatch:
    """Face of the core times part of a normal sphere, offset by ``r``.

    Points are ``anchor + sum_i s_i face[i] + r n`` with ``s ∈ [0,1]^m`` and
    ``n = normal_basis @ y`` for unit ``y`` satisfying ``<cone_g, n> >= 0``.
    Principal curvatures are 0 along the face and ``1/r`` along the normal
    sphere.
    """

    anchor: np.ndarray
    face: np.ndarray
    normal_basis: np.ndarray
    cone: np.ndarray
    r: float

    @property
    def dim(self) -> int:
        return self.anchor.size

    @property
    def face_dim(self) -> int:
        return self.face.shape[0]

    @property
    def sphere_dim(self) -> int:
        return self.normal_basis.shape[1] - 1

    @property
    def kind(self) -> str:
        q = self.sphere_dim
        if self.face_dim == 0:
            return "spherical-cap"
        if q == 0:
            return "flat"
        if q == 1:
            return "cylinder"
        return "flat-times-subsphere"

    @property
    def face_measure(self) -> float:
        if not self.face_dim:
            return 1.0
        G = self.face @ self.face.T
        return float(np.sqrt(np.linalg.det(G)))

    def curvatures(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.face_dim), np.full(self.sphere_dim, 1.0 / self.r)])

    def second_fundamental_form(self, n: np.ndarray, s: np.ndarray) -> np.ndarray:
        """``II_x(s)`` at points with normals ``n`` (N,d) for vectors ``s`` (M,d) -> (N,M).

        The curved tangent directions span ``span(normal_basis) ∩ n^⊥``.
        """
        if self.sphere_dim == 0:
            return np.zeros((n.shape[0], s.shape[0]))
        proj = s @ self.normal_basis
        along = n @ s.T
        return ((proj**2).sum(axis=1)[None, :] - along**2) / self.r

    # -- quadrature -------------------------------------------------------
    def _local(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, dtype=float).reshape(-1, self.dim) @ self.normal_basis

    def normal_elements(self, cuts=None) -> list:
        """Smooth elements of the normal region in local coordinates."""
        q = self.sphere_dim
        cuts = np.zeros((0, self.dim)) if cuts is None else np.asarray(cuts, dtype=float)
        lc, lg = self._local(cuts), self._local(self.cone)
        if q == 0:
            return [("point", None)]
        if q == 1:
            return [("arc", a) for a in circle_strata(lc, lg)]
        if q == 2:
            return [("tri", t) for t in sphere_strata(lc, lg)]
        raise NotImplementedError("normal spheres of dimension > 2 are not supported")

    def nodes(self, element, order: int):
        """Surface points, unit normals and weights for one element."""
        kind, data = element
        d = self.dim
        if kind == "point":
            y = np.ones((1, 1))
            wn = np.ones(1)
        elif kind == "arc":
            th, wn = arc_nodes(data[0], data[1], order)
            y = np.stack([np.cos(th), np.sin(th)], axis=1)
        else:
            y, wn = spherical_triangle_nodes(data, order)
        n = y @ self.normal_basis.T
        wn = wn * self.r**self.sphere_dim
        m = self.face_dim
        if m:
            x1, w1 = gauss01(order)
            grids = np.meshgrid(*([x1] * m), indexing="ij")
            wgrid = np.meshgrid(*([w1] * m), indexing="ij")
            s = np.stack([g.ravel() for g in grids], axis=1)
            ws = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1) * self.face_measure
        else:
            s = np.zeros((1, 0))
            ws = np.ones(1)
        base = self.anchor[None, :] + s @ self.face
        x = (base[:, None, :] + self.r * n[None, :, :]).reshape(-1, d)
        nn = np.broadcast_to(n[None, :, :], (s.shape[0], n.shape[0], d)).reshape(-1, d)
        w = (ws[:, None] * wn[None, :]).ravel()
        return x, nn, w

    def subdivide(self, element) -> list:
        kind, data = element
        if kind == "arc":
            t0, t1 = data
            tm = 0.5 * (t0 + t1)
            return [("arc", (t0, tm)), ("arc", (tm, t1))]
        if kind == "tri":
            return [("tri", t) for t in subdivide_triangle(data)]
        return []

    def sample(self, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Random boundary points (not area-uniform) with their normals."""
        q, d = self.sphere_dim, self.dim
        ys = []
        lg = self._local(self.cone)
        while len(ys) < count:
            y = rng.standard_normal(q + 1)
            y /= np.linalg.norm(y)
            if np.all(lg @ y >= 0):
                ys.append(y)
        n = np.array(ys) @ self.normal_basis.T
        s = rng.random((count, self.face_dim))
        x = self.anchor + s @ self.face + self.r * n
        return x, n


@dataclass
class SurfaceBatch:
    """Quadrature nodes handed to surface integrands."""

    x: np.ndarray
    n: np.ndarray
    weights: np.ndarray
    curvatures: np.ndarray
    patch: BoundaryPatch

    def second_fundamental_form(self, s: np.ndarray) -> np.ndarray:
        return self.patch.second_fundamental_form(self.n, np.atleast_2d(s))


def surface_integral(
    phantom: Phantom,
    f: Callable[[SurfaceBatch], np.ndarray],
    tol: float = 1e-9,
    cuts=None,
    order: int = 10,
    max_depth: int = 8,
):
    """Adaptive integral of ``f`` over the boundary of ``phantom``.

    ``f`` receives a :class:`SurfaceBatch` and returns values of shape (N,)
    or (N, K).  ``cuts`` lists vectors ``v`` across whose great circles
    ``<v, n> = 0`` the integrand may be discontinuous; pass ``"cube"`` for
    the unit-cell vertex differences.  Each element is integrated with Gauss
    orders ``order`` and ``2 * order``; elements whose two results differ by
    more than their share of ``tol`` are subdivided.

    Returns ``(value, error_estimate)``.
    """
    if isinstance(cuts, str):
        if cuts != "cube":
            raise ValueError(f"unknown cut set {cuts!r}")
        cuts = cube_difference_directions(phantom.dim)
    patches = phantom.boundary_patches()
    total_measure = 0.0
    work = []
    for patch in patches:
        for el in patch.normal_elements(cuts):
            work.append((patch, el, 0))

    def measure(patch, el):
        _, _, w = patch.nodes(el, 4)
        return w.sum()

    measures = [measure(p, el) for p, el, _ in work]
    total_measure = sum(measures)
    value = 0.0
    error = 0.0
    stack = [(p, el, depth, m) for (p, el, depth), m in zip(work, measures)]
    while stack:
        patch, el, depth, m = stack.pop()
        lo = _element_integral(patch, el, order, f)
        hi = _element_integral(patch, el, 2 * order, f)
        err = np.max(np.abs(hi - lo))
        share = tol * m / total_measure if total_measure > 0 else tol
        children = patch.subdivide(el) if err > share else []
        if children and depth < max_depth:
            for c in children:
                stack.append((patch, c, depth + 1, measure(patch, c)))
            continue
        value = value + hi
        error += err
    if error > tol:
        raise QuadratureError(f"surface integral error {error:.3g} exceeds tolerance {tol:.3g}", value, error)
    return value, error


def _element_integral(patch: BoundaryPatch, el, order: int, f) -> np.ndarray:
    x, n, w = patch.nodes(el, order)
    k = np.broadcast_to(patch.curvatures(), (x.shape[0], patch.dim - 1))
    vals = np.asarray(f(SurfaceBatch(x, n, w, k, patch)), dtype=float)
    if vals.ndim == 1:
        return float(vals @ w)
    return w @ vals
