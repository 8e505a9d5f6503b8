"""Asymptotic coefficients of configuration counts.

Sphere integrals use the uniform probability measure on ``S^{d-1}``.  All
per-configuration quantities are returned as arrays indexed by the
configuration mask ``l``; class quantities are sums over each orbit.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import configs
from .phantoms import BoundaryPatch, Phantom, SurfaceBatch, surface_integral
from .quadrature import (
    QuadratureError,
    arc_nodes,
    cube_difference_directions,
    spherical_triangle_nodes,
)

TIE_TOL = 1e-12

SQRT2, SQRT3 = math.sqrt(2.0), math.sqrt(3.0)
ZETA = 3.0 * SQRT2 * math.atan(SQRT2) / (2.0 * math.pi)

# Closed forms in d = 3, keyed by class label.
MU_BAR_3D = {
    "eta1": 3 - SQRT3,
    "eta2": 3 * SQRT3 - 3 * SQRT2,
    "eta3": -3 + 6 * SQRT2 - 3 * SQRT3,
    "eta4_1": 0.0,
    "eta4_2": 0.0,
    "eta5": 3 - 6 * SQRT2 + 3 * SQRT3,
    "eta6": -(3 * SQRT3 - 3 * SQRT2),
    "eta7": -(3 - SQRT3),
}
PSI_BAR_3D = {
    "eta1": 3 - 4 * ZETA,
    "eta2": -3 + 12 * ZETA - 3 * SQRT2,
    "eta3": 3 - 12 * ZETA + 6 * SQRT2 - 2 * SQRT3,
    "eta4_1": -3 + 2 * SQRT3,
    "eta4_2": 8 * ZETA - 6 * SQRT2 + 2 * SQRT3,
    "eta5": 3 - 12 * ZETA + 6 * SQRT2 - 2 * SQRT3,
    "eta6": -3 + 12 * ZETA - 3 * SQRT2,
    "eta7": 3 - 4 * ZETA,
}


# ---------------------------------------------------------------------------
# Support functions and selectors
# ---------------------------------------------------------------------------

def support(S, n) -> np.ndarray:
    """``h(S, n) = max_s <s, n>`` for each row of ``n``."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    n = np.asarray(n, dtype=float)
    return (n @ S.T).max(axis=-1)


def support_set(S, n, sign: int = 1, tol: float = TIE_TOL) -> np.ndarray:
    """Points of ``S`` attaining ``h(S, n)`` (sign=+1) or ``-h(Š, n)`` (sign=-1)."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    proj = S @ np.asarray(n, dtype=float)
    target = proj.max() if sign > 0 else proj.min()
    return S[np.abs(proj - target) <= tol]


def selector(S, n, sign: int = 1, tol: float = TIE_TOL) -> tuple[np.ndarray, bool]:
    """``p_S^±(n)`` and a degeneracy flag.

    On the degenerate set ``D(S)`` (ties between distinct points) the
    selector is zero and the flag is set.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    proj = S @ np.asarray(n, dtype=float)
    srt = np.sort(proj)
    if np.any(np.diff(srt) <= tol):
        return np.zeros(S.shape[1]), True
    i = np.argmax(proj) if sign > 0 else np.argmin(proj)
    return S[i].copy(), False


def delta(B, W, n) -> np.ndarray:
    """``1{h(B ⊕ W̌, n) < 0}``: strict separation of B below W along n."""
    gap = -support(B, n) - support(-np.atleast_2d(np.asarray(W, dtype=float)), n)
    return (gap > TIE_TOL).astype(int)


def first_order_density(B, W, n) -> np.ndarray:
    """``(-h(B ⊕ W̌, n))^+``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n = np.asarray(n, dtype=float)
    gap = (n @ W.T).min(axis=-1) - (n @ B.T).max(axis=-1)
    return np.maximum(gap, 0.0)


def quadratic_form_q(II_value, trace, along) -> np.ndarray:
    """``Q_x(s) = -II_x(s) + tr(II_x) <s, n>^2``."""
    return -np.asarray(II_value) + np.asarray(trace) * np.asarray(along) ** 2


# ---------------------------------------------------------------------------
# Per-configuration integrands evaluated at many normals at once
# ---------------------------------------------------------------------------

@dataclass
class _Prefixes:
    """For each normal and each k, the configuration of the k lowest vertices."""

    masks: np.ndarray  # (N, V-1)
    hb: np.ndarray  # max_B <b, n>
    hw: np.ndarray  # min_W <w, n>
    sep: np.ndarray  # bool, strict separation
    order: np.ndarray  # (N, V) vertex indices sorted by <x, n>
    ss: np.ndarray  # sorted projections


def _prefixes(n: np.ndarray, d: int) -> _Prefixes:
    V = configs.vertices(d).astype(float)
    s = n @ V.T
    order = np.argsort(s, axis=1, kind="stable")
    ss = np.take_along_axis(s, order, axis=1)
    masks = np.cumsum(np.left_shift(1, order), axis=1)[:, :-1]
    hb, hw = ss[:, :-1], ss[:, 1:]
    return _Prefixes(masks, hb, hw, (hw - hb) > TIE_TOL, order, ss)


def _extreme_ii(pre: _Prefixes, ii: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``II^+(B)`` and ``II^-(W)`` for every prefix split, with ties handled."""
    iis = np.take_along_axis(ii, pre.order, axis=1)
    N, nv = iis.shape
    ii_plus = np.empty((N, nv - 1))
    ii_minus = np.empty((N, nv - 1))
    idx = np.arange(nv)[None, :]
    for k in range(1, nv):
        top = pre.ss[:, k - 1 : k]
        in_b = (idx < k) & (pre.ss >= top - TIE_TOL)
        ii_plus[:, k - 1] = np.where(in_b, iis, -np.inf).max(axis=1)
        bottom = pre.ss[:, k : k + 1]
        in_w = (idx >= k) & (pre.ss <= bottom + TIE_TOL)
        ii_minus[:, k - 1] = np.where(in_w, iis, np.inf).min(axis=1)
    return ii_plus, ii_minus


def _scatter(pre: _Prefixes, values: np.ndarray, d: int) -> np.ndarray:
    """Dense (N, 2^(2^d)) array with ``values`` placed at the prefix masks."""
    N = values.shape[0]
    out = np.zeros((N, configs.n_configs(d)))
    out[np.arange(N)[:, None], pre.masks] = values
    return out


def _accumulate(pre: _Prefixes, values: np.ndarray, weights: np.ndarray, d: int) -> np.ndarray:
    return np.bincount(
        pre.masks.ravel(),
        weights=(weights[:, None] * values).ravel(),
        minlength=configs.n_configs(d),
    )


def _sphere_integrand(kind: str, n: np.ndarray, d: int) -> tuple[_Prefixes, np.ndarray]:
    pre = _prefixes(n, d)
    V = configs.vertices(d).astype(float)
    if kind == "first":
        vals = np.where(pre.sep, pre.hw - pre.hb, 0.0)
    elif kind == "mu_raw":
        sq = (V**2).sum(axis=1)
        b_sq = sq[pre.order[:, :-1]]
        w_sq = sq[pre.order[:, 1:]]
        vals = (math.pi / (d - 1)) * (d * (pre.hb**2 - pre.hw**2) - (b_sq - w_sq))
        vals = np.where(pre.sep, vals, 0.0)
    elif kind == "mu_reduced":
        vals = (d * math.pi / (d - 1)) * (pre.hb**2 - pre.hw**2)
        vals = np.where(pre.sep, vals, 0.0)
    else:
        raise ValueError(kind)
    return pre, vals


# ---------------------------------------------------------------------------
# Sphere strata
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphericalTriangle:
    kind: int
    alpha: int
    beta: int
    gamma: int
    vertices: np.ndarray


def triangle_decomposition() -> list[SphericalTriangle]:
    """The 96 cells cut out of ``S^2`` by the planes ``<x_i - x_j, n> = 0``.

    For signed axes ``v_α, v_β, v_γ`` (a signed permutation of the basis),
    type 1 has corners ``v_α, (v_α+v_β)/√2, (2v_α+v_β+v_γ)/√6`` and type 2
    has corners ``(v_α+v_β)/√2, (2v_α+v_β+v_γ)/√6, (v_α+v_β+v_γ)/√3``.
    """
    eye = np.eye(3)
    out = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            va, vb, vc = (signs[i] * eye[perm[i]] for i in range(3))
            labels = tuple(signs[i] * (perm[i] + 1) for i in range(3))
            edge = (va + vb) / SQRT2
            mid = (2 * va + vb + vc) / math.sqrt(6.0)
            corner = (va + vb + vc) / SQRT3
            out.append(SphericalTriangle(1, *labels, np.array([va, edge, mid])))
            out.append(SphericalTriangle(2, *labels, np.array([edge, mid, corner])))
    return out


def _circle_arcs_2d() -> list[tuple[float, float]]:
    return [(k * math.pi / 4, (k + 1) * math.pi / 4) for k in range(8)]


def _sphere_rule(d: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes on ``S^{d-1}`` and weights of the normalized measure."""
    if d == 2:
        pts, wts = [], []
        for t0, t1 in _circle_arcs_2d():
            th, w = arc_nodes(t0, t1, order)
            pts.append(np.stack([np.cos(th), np.sin(th)], axis=1))
            wts.append(w)
        return np.vstack(pts), np.concatenate(wts) / (2 * math.pi)
    if d == 3:
        pts, wts = [], []
        for tri in triangle_decomposition():
            n, w = spherical_triangle_nodes(tri.vertices, order)
            pts.append(n)
            wts.append(w)
        return np.vstack(pts), np.concatenate(wts) / (4 * math.pi)
    raise NotImplementedError("stratified sphere quadrature is implemented for d = 2, 3")


@lru_cache(maxsize=None)
def _sphere_config_integral_cached(kind: str, d: int, tol: float) -> tuple[np.ndarray, float]:
    prev = None
    for order in (6, 12, 24, 48):
        n, w = _sphere_rule(d, order)
        pre, vals = _sphere_integrand(kind, n, d)
        cur = _accumulate(pre, vals, w, d)
        if prev is not None:
            err = float(np.max(np.abs(cur - prev)))
            if err <= tol:
                cur.setflags(write=False)
                return cur, err
        prev = cur
    raise QuadratureError(f"sphere quadrature for {kind} did not reach {tol}", prev, err)


def sphere_config_integrals(kind: str, d: int, tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Per-configuration sphere integrals (normalized measure).

    ``kind`` is ``"first"`` for ``(-h(B ⊕ W̌, n))^+``, ``"mu_raw"`` for the
    full ``mu_l`` integrand and ``"mu_reduced"`` for the ``|p|^2``-free form
    that is only valid after summing over a class.
    """
    configs._check_dim(d)
    return _sphere_config_integral_cached(kind, d, float(tol))


def psi_bar(j: int, d: int, tol: float = 1e-8) -> float:
    vals, _ = sphere_config_integrals("first", d, tol)
    part = configs.orbit_classes(d)
    return float(2.0 * sum(vals[l] for l in part.classes[j]))


def mu_l(l: int, d: int, tol: float = 1e-8) -> float:
    vals, _ = sphere_config_integrals("mu_raw", d, tol)
    return float(vals[l])


def mu_bar(j: int, d: int, tol: float = 1e-8) -> float:
    """Class coefficient from the reduced (``|p|^2``-free) integrand."""
    vals, _ = sphere_config_integrals("mu_reduced", d, tol)
    part = configs.orbit_classes(d)
    return float(sum(vals[l] for l in part.classes[j]))


# ---------------------------------------------------------------------------
# Phantom (stationary, non-isotropic) coefficients
# ---------------------------------------------------------------------------

def _first_order_surface(batch: SurfaceBatch) -> np.ndarray:
    d = batch.n.shape[1]
    pre = _prefixes(batch.n, d)
    return _scatter(pre, np.where(pre.sep, pre.hw - pre.hb, 0.0), d)


def _second_order_surface(batch: SurfaceBatch) -> np.ndarray:
    """``(1/2)(Q^+(B_l) - Q^-(W_l)) δ`` for every configuration.

    The companion ``{h(B ⊕ W̌, n) = 0}`` term vanishes on every patch kind
    produced by :class:`Phantom`: on flat faces II = 0, on curved normal
    spheres the tie set is null, and on face-times-sphere patches a tie set
    of positive measure forces ``b - w`` to lie along the face, where II is
    blind.
    """
    d = batch.n.shape[1]
    pre = _prefixes(batch.n, d)
    V = configs.vertices(d).astype(float)
    ii = batch.second_fundamental_form(V)
    trace = batch.curvatures.sum(axis=1)[:, None]
    ii_plus, ii_minus = _extreme_ii(pre, ii)
    q_plus = quadratic_form_q(ii_plus, trace, pre.hb)
    q_minus = quadratic_form_q(ii_minus, trace, pre.hw)
    vals = np.where(pre.sep, 0.5 * (q_plus - q_minus), 0.0)
    return _scatter(pre, vals, d)


def phi_l_all(X: Phantom, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """``∫_{∂X} (-h(B_l ⊕ W̌_l, n))^+`` for every configuration."""
    return surface_integral(X, _first_order_surface, tol=tol, cuts="cube")


def lambda_l_all(X: Phantom, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Second-order coefficients ``λ_l(X)`` for every configuration."""
    return surface_integral(X, _second_order_surface, tol=tol, cuts="cube")


def phi_bar(X: Phantom, j: int, tol: float = 1e-9) -> float:
    vals, _ = phi_l_all(X, tol)
    return float(sum(vals[l] for l in configs.orbit_classes(X.dim).classes[j]))


def lambda_l(X: Phantom, l: int, tol: float = 1e-9) -> float:
    vals, _ = lambda_l_all(X, tol)
    return float(vals[l])


def cylinder_coefficients(u, tol: float = 1e-10) -> np.ndarray:
    """Per-unit-length second-order coefficients of a cylinder along ``u``.

    Entry ``l`` is ``(1/2)∫_{S^1(u)} (Q^+(B_l) - Q^-(W_l)) δ dH^1`` with the
    curvature of a unit-radius cylinder; the value does not depend on the
    radius.
    """
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    d = u.size
    N = np.linalg.qr(np.vstack([u, np.eye(d)]).T)[0][:, 1:d]
    patch = BoundaryPatch(np.zeros(d), u[None, :], N, np.zeros((0, d)), 1.0)
    cuts = cube_difference_directions(d)
    total = np.zeros(configs.n_configs(d))
    err = 0.0
    for el in patch.normal_elements(cuts):
        res = []
        for order in (12, 24):
            x, n, w = patch.nodes(el, order)
            k = np.broadcast_to(patch.curvatures(), (x.shape[0], d - 1))
            res.append(w @ _second_order_surface(SurfaceBatch(x, n, w, k, patch)))
        total += res[1]
        err += float(np.max(np.abs(res[1] - res[0])))
    if err > tol:
        raise QuadratureError("cylinder quadrature did not converge", total, err)
    return total


# ---------------------------------------------------------------------------
# Hit-or-miss transform volumes
# ---------------------------------------------------------------------------

class BudgetExhausted(RuntimeError):
    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


def chord_intervals(X: Phantom, base: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact intersection of ``X`` with the lines through ``base`` along ``e_d``.

    The last coordinate of ``base`` is ignored.  Returns the range
    ``(lo, hi)`` of the last coordinate inside ``X``, with ``lo > hi`` for
    lines that miss.  The squared
    distance to the box core is convex and piecewise quadratic in ``t``
    with breakpoints where a box coordinate hits 0 or ``t_i``; each piece is
    solved in closed form.
    """
    d = X.dim
    y0 = np.asarray(base, dtype=float) - X.center
    y0[:, d - 1] = -X.center[d - 1]
    N = y0.shape[0]
    if X.k == 0:
        h2 = X.r**2 - (y0[:, : d - 1] ** 2).sum(axis=1)
        h = np.sqrt(np.maximum(h2, 0.0))
        miss = h2 < 0
        return np.where(miss, np.inf, X.center[d - 1] - h), np.where(miss, -np.inf, X.center[d - 1] + h)
    U, T = X.directions, X.lengths
    alpha = y0 @ U.T  # (N, k)
    beta = U[:, d - 1]  # (k,)
    r2 = X.r**2
    if X.k:
        with np.errstate(divide="ignore", invalid="ignore"):
            bps = np.concatenate(
                [np.where(beta != 0, -alpha / beta, np.nan), np.where(beta != 0, (T - alpha) / beta, np.nan)],
                axis=1,
            )
        bps = np.sort(np.where(np.isfinite(bps), bps, np.inf), axis=1)
    else:
        bps = np.zeros((N, 0))
    edges = np.concatenate([np.full((N, 1), -np.inf), bps, np.full((N, 1), np.inf)], axis=1)
    lo = np.full(N, np.inf)
    hi = np.full(N, -np.inf)
    ynorm2 = (y0**2).sum(axis=1)
    for p in range(edges.shape[1] - 1):
        a0, a1 = edges[:, p], edges[:, p + 1]
        valid = a1 > a0
        with np.errstate(invalid="ignore"):
            mid = np.where(np.isfinite(a0) & np.isfinite(a1), 0.5 * (a0 + a1),
                           np.where(np.isfinite(a0), a0 + 1.0, np.where(np.isfinite(a1), a1 - 1.0, 0.0)))
        A = np.ones(N)
        Bc = 2.0 * y0[:, d - 1]
        C = ynorm2.copy()
        for i in range(X.k):
            s_mid = alpha[:, i] + beta[i] * mid
            inside = (s_mid >= 0) & (s_mid <= T[i])
            above = s_mid > T[i]
            A -= np.where(inside, beta[i] ** 2, 0.0)
            Bc -= np.where(inside, 2 * alpha[:, i] * beta[i], 0.0) + np.where(above, 2 * T[i] * beta[i], 0.0)
            C += np.where(inside, -alpha[:, i] ** 2, 0.0) + np.where(above, T[i] ** 2 - 2 * T[i] * alpha[:, i], 0.0)
        C = C - r2
        quad = A > 1e-14
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = Bc**2 - 4 * A * C
            sq = np.sqrt(np.maximum(disc, 0.0))
            q_lo = np.where(quad & (disc >= 0), (-Bc - sq) / (2 * A), np.inf)
            q_hi = np.where(quad & (disc >= 0), (-Bc + sq) / (2 * A), -np.inf)
            # Degenerate (linear) pieces.
            lin = ~quad
            root = -C / Bc
            l_lo = np.where(lin & (Bc > 0), -np.inf, np.where(lin & (Bc < 0), root, np.where(lin & (C <= 0), -np.inf, np.inf)))
            l_hi = np.where(lin & (Bc > 0), root, np.where(lin & (Bc < 0), np.inf, np.where(lin & (C <= 0), np.inf, -np.inf)))
        s_lo = np.where(quad, q_lo, l_lo)
        s_hi = np.where(quad, q_hi, l_hi)
        s_lo = np.maximum(s_lo, a0)
        s_hi = np.minimum(s_hi, a1)
        ok = valid & (s_hi >= s_lo)
        lo = np.where(ok, np.minimum(lo, s_lo), lo)
        hi = np.where(ok, np.maximum(hi, s_hi), hi)
    return lo, hi


def _hit_lengths(X: Phantom, B: np.ndarray, W: np.ndarray, a: float, pts: np.ndarray) -> np.ndarray:
    """Length of ``{z_d : z + aB ⊆ X, z + aW ⊆ X^c}`` on lines over ``pts``."""
    d = X.dim
    N = pts.shape[0]

    def interval(s):
        base = np.zeros((N, d))
        base[:, : d - 1] = pts + a * s[: d - 1]
        lo, hi = chord_intervals(X, base)
        miss = ~(hi >= lo)
        lo = np.where(miss, 0.0, lo)
        hi = np.where(miss, 0.0, hi)
        return lo - a * s[d - 1], hi - a * s[d - 1]

    L = np.full(N, -np.inf)
    U = np.full(N, np.inf)
    for b in B:
        lo, hi = interval(b)
        L = np.maximum(L, lo)
        U = np.minimum(U, hi)
    length = np.maximum(U - L, 0.0)
    ws = [interval(w) for w in W]
    starts = np.stack([np.maximum(lo, L) for lo, _ in ws], axis=1)
    ends = np.stack([np.minimum(hi, U) for _, hi in ws], axis=1)
    ends = np.where(ends > starts, ends, starts)
    order = np.argsort(starts, axis=1)
    starts = np.take_along_axis(starts, order, axis=1)
    ends = np.take_along_axis(ends, order, axis=1)
    covered = np.zeros(N)
    reach = np.full(N, -np.inf)
    for i in range(starts.shape[1]):
        s0 = np.maximum(starts[:, i], reach)
        covered += np.maximum(ends[:, i] - s0, 0.0)
        reach = np.maximum(reach, ends[:, i])
    return np.where(U > L, np.maximum(length - covered, 0.0), 0.0)


def hit_or_miss_volume(
    X: Phantom,
    B,
    W,
    a: float,
    method: str = "grid",
    budget: int = 2**24,
    rel_tol: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """``H^d({z : z + aB ⊆ X, z + aW ⊆ X^c})`` with an error bound.

    Lines parallel to ``e_d`` are intersected with ``X`` exactly, so only a
    (d-1)-dimensional integral over line positions remains.  ``grid`` uses
    randomly shifted midpoint grids, eight shifts per level, halving the
    spacing until three standard errors over the shifts meet ``rel_tol``;
    ``montecarlo`` samples line positions uniformly and reports three
    standard errors.  ``budget`` caps the number
    of lines per evaluation.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float)) if len(B) else np.zeros((0, X.dim))
    W = np.atleast_2d(np.asarray(W, dtype=float)) if len(W) else np.zeros((0, X.dim))
    if B.shape[0] == 0 or W.shape[0] == 0:
        raise ValueError("B and W must both be non-empty")
    rho = float(np.max(np.linalg.norm(np.vstack([B, W]), axis=1)))
    if not a * rho < X.r:
        raise ValueError(f"a * rho(B ∪ W) = {a * rho:g} must be below r = {X.r:g}")
    d = X.dim
    lo, hi = X.bounding_box()
    lo, hi = lo[: d - 1] - a * rho, hi[: d - 1] + a * rho
    area = float(np.prod(hi - lo))

    rng = np.random.default_rng(0) if rng is None else rng
    if method == "grid":
        # Line lengths jump where a shifted vertex leaves X, so a fixed grid can
        # stall on a wrong value.  Independent random shifts keep each level
        # unbiased and their spread gives the error bar.
        shifts = 8
        per_axis = 64
        value = err = float("nan")
        cell = hi - lo
        while shifts * per_axis ** (d - 1) <= budget:
            base = np.stack(
                np.meshgrid(*[np.arange(per_axis, dtype=float)] * (d - 1), indexing="ij"), axis=-1
            ).reshape(-1, d - 1)
            est = []
            for _ in range(shifts):
                pts = lo + (base + rng.random(d - 1)) * cell / per_axis
                total = sum(
                    _hit_lengths(X, B, W, a, c).sum() for c in np.array_split(pts, max(1, pts.shape[0] // 2**18))
                )
                est.append(total * area / pts.shape[0])
            value = float(np.mean(est))
            err = 3.0 * float(np.std(est, ddof=1)) / math.sqrt(shifts)
            if err <= rel_tol * abs(value):
                return value, err
            per_axis *= 2
        if math.isnan(value):
            raise BudgetExhausted("budget too small for a single grid level", value, float("inf"))
        raise BudgetExhausted("grid refinement budget exhausted", value, err)

    if method == "montecarlo":
        n = min(budget, 2**22)
        pts = lo + (hi - lo) * rng.random((n, d - 1))
        vals = np.concatenate(
            [_hit_lengths(X, B, W, a, c) for c in np.array_split(pts, max(1, n // 2**18))]
        ) * area
        value = float(vals.mean())
        err = 3.0 * float(vals.std(ddof=1)) / math.sqrt(n)
        if err > rel_tol * abs(value) and n >= budget:
            raise BudgetExhausted("Monte Carlo budget exhausted", value, err)
        return value, err
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Coefficient tables
# ---------------------------------------------------------------------------

@dataclass
class CoefficientTable:
    d: int
    psi_bar: np.ndarray
    mu_bar: np.ndarray
    mu_l: np.ndarray
    phi_bar: np.ndarray | None = None
    lambda_bar: np.ndarray | None = None
    lambda_l: np.ndarray | None = None
    provenance: list = field(default_factory=list)
    err: np.ndarray | None = None

    @property
    def partition(self) -> configs.ClassPartition:
        return configs.orbit_classes(self.d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "phi_bar", "psi_bar", "lambda_bar", "mu_bar", "provenance", "err"])
        part = self.partition

        def fmt(arr, j):
            return "" if arr is None else repr(float(arr[j]))

        for j in range(len(part)):
            name = part.label(j) or str(j)
            w.writerow(
                [
                    name,
                    fmt(self.phi_bar, j),
                    fmt(self.psi_bar, j),
                    fmt(self.lambda_bar, j),
                    fmt(self.mu_bar, j),
                    self.provenance[j] if self.provenance else "",
                    fmt(self.err, j),
                ]
            )
        return buf.getvalue()


def closed_form_mu_psi(d: int) -> tuple[dict[int, float], dict[int, float]]:
    """Closed-form class coefficients where known (d = 3 only); other classes
    with no strictly separable member are exactly zero."""
    part = configs.orbit_classes(d)
    sep = configs.separable_mask(d)
    mu, psi = {}, {}
    for j, members in enumerate(part.classes):
        if not sep[members[0]]:
            mu[j] = psi[j] = 0.0
    if d == 3:
        for name, v in MU_BAR_3D.items():
            mu[part.class_id(name)] = v
        for name, v in PSI_BAR_3D.items():
            psi[part.class_id(name)] = v
    return mu, psi


def isotropic_coefficients(d: int, tol: float = 1e-8, prefer_closed_form: bool = False) -> CoefficientTable:
    """ψ̄ and μ̄ for all classes by stratified quadrature (optionally
    replaced by closed forms where they exist)."""
    part = configs.orbit_classes(d)
    first, e1 = sphere_config_integrals("first", d, tol)
    mu_raw, e2 = sphere_config_integrals("mu_raw", d, tol)
    mu_red, e3 = sphere_config_integrals("mu_reduced", d, tol)
    psi = 2.0 * part.class_sums(first)
    mu = part.class_sums(mu_red)
    prov = ["quadrature"] * len(part)
    err = np.full(len(part), max(2 * e1, e3))
    table = CoefficientTable(d, psi, mu, np.array(mu_raw), provenance=prov, err=err)
    return apply_closed_forms(table) if prefer_closed_form else table


def apply_closed_forms(table: CoefficientTable) -> CoefficientTable:
    """Replace ψ̄ and μ̄ entries by closed forms where both are known."""
    mu_cf, psi_cf = closed_form_mu_psi(table.d)
    for j in range(len(table.psi_bar)):
        if j in mu_cf and j in psi_cf:
            table.mu_bar[j], table.psi_bar[j] = mu_cf[j], psi_cf[j]
            table.provenance[j] = "closed-form"
            table.err[j] = 0.0
    return table


def stationary_coefficients(X: Phantom, tol: float = 1e-9) -> CoefficientTable:
    """Isotropic table extended with φ̄ⱼ(X) and λ̄ⱼ(X) for a fixed phantom."""
    table = isotropic_coefficients(X.dim, tol=max(tol, 1e-10))
    part = table.partition
    phi, e1 = phi_l_all(X, tol)
    lam, e2 = lambda_l_all(X, tol)
    table.phi_bar = part.class_sums(phi)
    table.lambda_l = lam
    table.lambda_bar = part.class_sums(lam)
    table.err = np.maximum(table.err, e1 + e2)
    return table
