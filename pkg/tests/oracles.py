"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog


def cube_vertices(d):
    return np.array(list(itertools.product((0, 1), repeat=d)))[:, ::-1]


def vertex_index(x):
    return int(sum(int(c) << k for k, c in enumerate(x)))


def signed_permutation_matrices(d):
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            P = np.zeros((d, d), dtype=int)
            for i, (p, s) in enumerate(zip(perm, signs)):
                P[i, p] = s
            yield P


def orbit_partition(d):
    """Orbits of masks under x -> P(x - 1/2) + 1/2, by direct geometric action."""
    n = 1 << (1 << d)
    verts = cube_vertices(d)
    maps = []
    for P in signed_permutation_matrices(d):
        img = ((2 * verts - 1) @ P.T + 1) // 2
        maps.append([vertex_index(y) for y in img])
    seen = {}
    orbits = []
    for l in range(n):
        if l in seen:
            continue
        orb = set()
        for m in maps:
            orb.add(sum(1 << m[i] for i in range(1 << d) if (l >> i) & 1))
        for o in orb:
            seen[o] = len(orbits)
        orbits.append(sorted(orb))
    return orbits


def separable_lp(l, d):
    """Strict separation by linear programming: <b,n> <= c - 1 < c + 1 <= <w,n>."""
    verts = [np.array([(i >> k) & 1 for k in range(d)]) for i in range(1 << d)]
    B = [v for i, v in enumerate(verts) if (l >> i) & 1]
    W = [v for i, v in enumerate(verts) if not (l >> i) & 1]
    A_ub, b_ub = [], []
    for b in B:
        A_ub.append(list(b) + [-1.0])
        b_ub.append(-1.0)
    for w in W:
        A_ub.append(list(-w) + [1.0])
        b_ub.append(-1.0)
    res = linprog(np.zeros(d + 1), A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * (d + 1), method="highs")
    return res.status == 0


def ball_hitmiss_volume_rays(r, a, W, n_theta=1600, n_phi=3200):
    """Volume of {z in Ball(0,r) : z + a w outside for all w}, by integrating
    along rays from the centre with a tensor Gauss rule on the sphere."""
    W = np.asarray(W, dtype=float)
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    phi = (np.arange(n_phi) + 0.5) * 2 * math.pi / n_phi
    total = 0.0
    for ct, wt in zip(np.array_split(x, 16), np.array_split(wx, 16)):
        st = np.sqrt(1 - ct**2)
        n = np.stack(
            [st[:, None] * np.cos(phi)[None, :], st[:, None] * np.sin(phi)[None, :], np.broadcast_to(ct[:, None], (ct.size, n_phi))],
            axis=-1,
        )
        proj = n @ W.T
        rho = -a * proj + np.sqrt(r * r - a * a * ((W**2).sum(axis=1) - proj**2))
        top = np.maximum(rho.max(axis=-1), 0.0)
        f = np.maximum(r**3 - top**3, 0.0) / 3.0
        total += float((wt[:, None] * f).sum()) * 2 * math.pi / n_phi
    return total


# Hand-derived 2D constants (uniform probability measure on the circle).
PSI_BAR_2D = {"eta1": 8 / math.pi * (1 - 1 / math.sqrt(2)), "eta2": 8 / math.pi * (math.sqrt(2) - 1), "eta3": 8 / math.pi * (1 - 1 / math.sqrt(2))}
MU_BAR_2D = {"eta1": 2.0, "eta2": 0.0, "eta3": -2.0}
