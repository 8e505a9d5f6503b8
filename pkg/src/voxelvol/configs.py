"""Cell configurations of a 2x...x2 lattice cell and their symmetry classes.

Vertex ``x_i`` of the unit cell has coordinate ``k`` (0-based) equal to bit
``k`` of ``i``.  A configuration is a subset of the ``2**d`` vertices, stored
as a mask whose bit ``i`` is set when ``x_i`` is black (foreground).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

SUPPORTED_DIMS = (2, 3)

# Conventional class names keyed by one member mask.  Only classes that contain
# strictly separable configurations carry a name.
_LABEL_MEMBERS = {
    2: {1: "eta1", 3: "eta2", 7: "eta3"},
    3: {
        1: "eta1",
        3: "eta2",
        7: "eta3",
        15: "eta4_1",
        23: "eta4_2",
        248: "eta5",
        252: "eta6",
        254: "eta7",
    },
}


class InvalidInput(ValueError):
    pass


def _check_dim(d: int, supported: Iterable[int] = SUPPORTED_DIMS) -> None:
    if d not in supported:
        raise InvalidInput(f"unsupported dimension d={d}; expected one of {tuple(supported)}")


def n_configs(d: int) -> int:
    return 1 << (1 << d)


def full_mask(d: int) -> int:
    return n_configs(d) - 1


@lru_cache(maxsize=None)
def vertices(d: int) -> np.ndarray:
    """Integer coordinates of the cell vertices, row ``i`` is ``x_i``."""
    v = np.array([[(i >> k) & 1 for k in range(d)] for i in range(1 << d)], dtype=np.int64)
    v.setflags(write=False)
    return v


def config_index(vertex_subset: Sequence[Sequence[int]], d: int) -> int:
    """Index ``l`` of the configuration made of the given 0/1 vertex vectors."""
    seen = set()
    l = 0
    for x in vertex_subset:
        x = tuple(int(c) if c in (0, 1) else c for c in x)
        if len(x) != d:
            raise InvalidInput(f"vertex {x} does not have {d} coordinates")
        if any(c not in (0, 1) for c in x):
            raise InvalidInput(f"vertex {x} has non-binary coordinates")
        if x in seen:
            raise InvalidInput(f"duplicate vertex {x}")
        seen.add(x)
        i = sum(1 << k for k, c in enumerate(x) if c == 1)
        l |= 1 << i
    return l


def complement(l: int, d: int) -> int:
    return full_mask(d) - l


def black_white(l: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Black and white vertex coordinates ``(B_l, W_l)`` of configuration ``l``."""
    v = vertices(d)
    black = np.array([(l >> i) & 1 for i in range(1 << d)], dtype=bool)
    return v[black], v[~black]


@dataclass(frozen=True)
class Configuration:
    dim: int
    mask: int

    def __post_init__(self):
        if not 0 <= self.mask < n_configs(self.dim):
            raise InvalidInput(f"mask {self.mask} out of range for d={self.dim}")

    @property
    def index(self) -> int:
        return self.mask

    @property
    def black(self) -> np.ndarray:
        return black_white(self.mask, self.dim)[0]

    @property
    def white(self) -> np.ndarray:
        return black_white(self.mask, self.dim)[1]

    def complement(self) -> "Configuration":
        return Configuration(self.dim, complement(self.mask, self.dim))


@dataclass(frozen=True)
class SymmetryGroup:
    """Cube-preserving motions and reflections as permutations of vertex indices."""

    dim: int
    elements: tuple[tuple[int, ...], ...]

    @property
    def order(self) -> int:
        return len(self.elements)

    def act(self, g: Sequence[int], mask: int) -> int:
        out = 0
        for i, j in enumerate(g):
            if (mask >> i) & 1:
                out |= 1 << j
        return out

    @staticmethod
    def compose(g: Sequence[int], h: Sequence[int]) -> tuple[int, ...]:
        """``g o h``: apply ``h`` first."""
        return tuple(g[h[i]] for i in range(len(h)))

    @staticmethod
    def inverse(g: Sequence[int]) -> tuple[int, ...]:
        inv = [0] * len(g)
        for i, j in enumerate(g):
            inv[j] = i
        return tuple(inv)

    def mask_permutation(self, g: Sequence[int]) -> np.ndarray:
        """Lookup table ``t`` with ``t[l] = g . l`` for every configuration."""
        n = n_configs(self.dim)
        masks = np.arange(n, dtype=np.int64)
        out = np.zeros(n, dtype=np.int64)
        for i, j in enumerate(g):
            out |= ((masks >> i) & 1) << j
        return out


@lru_cache(maxsize=None)
def _build_group(d: int) -> SymmetryGroup:
    v = vertices(d)
    lookup = {tuple(x): i for i, x in enumerate(v.tolist())}
    elements = []
    for perm in itertools.permutations(range(d)):
        for flips in itertools.product((0, 1), repeat=d):
            g = []
            for x in v:
                y = tuple(int(x[perm[k]]) ^ flips[k] for k in range(d))
                g.append(lookup[y])
            elements.append(tuple(g))
    return SymmetryGroup(d, tuple(elements))


def build_symmetry_group(d: int) -> SymmetryGroup:
    """Hyperoctahedral group of the unit cube (order ``2**d * d!``)."""
    _check_dim(d)
    return _build_group(d)


def burnside_count(group: SymmetryGroup) -> int:
    """Number of orbits on vertex subsets, by Burnside's lemma."""
    total = 0
    for g in group.elements:
        seen = [False] * len(g)
        cycles = 0
        for start in range(len(g)):
            if seen[start]:
                continue
            cycles += 1
            i = start
            while not seen[i]:
                seen[i] = True
                i = g[i]
        total += 2**cycles
    count, rem = divmod(total, group.order)
    assert rem == 0
    return count


@dataclass(frozen=True)
class ClassPartition:
    dim: int
    classes: tuple[tuple[int, ...], ...]
    class_of: tuple[int, ...]

    @property
    def representatives(self) -> tuple[int, ...]:
        return tuple(c[0] for c in self.classes)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.classes)

    def __len__(self) -> int:
        return len(self.classes)

    def label(self, j: int) -> str | None:
        """Conventional name of class ``j`` or ``None`` for unnamed classes."""
        for member, name in _LABEL_MEMBERS.get(self.dim, {}).items():
            if self.class_of[member] == j:
                return name
        return None

    def class_id(self, key: int | str) -> int:
        """Resolve a class id given as an int, a digit string, or a label like ``eta4_1``."""
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < len(self.classes):
                raise InvalidInput(f"class id {key} out of range")
            return int(key)
        key = str(key).strip()
        if key.isdigit():
            return self.class_id(int(key))
        for member, name in _LABEL_MEMBERS.get(self.dim, {}).items():
            if name == key:
                return self.class_of[member]
        raise InvalidInput(f"unknown class key {key!r} for d={self.dim}")

    def complement_class(self, j: int) -> int:
        return self.class_of[complement(self.classes[j][0], self.dim)]

    def class_sums(self, per_config: np.ndarray) -> np.ndarray:
        """Sum a per-configuration array over each class."""
        per_config = np.asarray(per_config)
        if per_config.shape[0] != n_configs(self.dim):
            raise InvalidInput(
                f"expected {n_configs(self.dim)} per-configuration entries, got {per_config.shape[0]}"
            )
        out = np.zeros((len(self.classes),) + per_config.shape[1:], dtype=per_config.dtype)
        np.add.at(out, np.asarray(self.class_of), per_config)
        return out

    def expand(self, per_class: np.ndarray) -> np.ndarray:
        """Per-configuration array with each entry set to its class value."""
        return np.asarray(per_class)[np.asarray(self.class_of)]


@lru_cache(maxsize=None)
def _orbit_classes(d: int) -> ClassPartition:
    group = _build_group(d)
    tables = [group.mask_permutation(g) for g in group.elements]
    n = n_configs(d)
    class_of = [-1] * n
    classes = []
    for l in range(n):
        if class_of[l] >= 0:
            continue
        orbit = sorted({int(t[l]) for t in tables})
        for m in orbit:
            class_of[m] = len(classes)
        classes.append(tuple(orbit))
    return ClassPartition(d, tuple(classes), tuple(class_of))


def orbit_classes(d: int) -> ClassPartition:
    """Partition of all configurations into symmetry orbits.

    Classes are numbered by increasing minimal member mask, which is also the
    class representative.
    """
    _check_dim(d)
    return _orbit_classes(d)


@lru_cache(maxsize=None)
def _candidate_directions(d: int) -> np.ndarray:
    # Every open cell of the arrangement {n : <x_i - x_j, n> = 0} contains an
    # integer point with |n_k| <= d + 1 (checked for d <= 3).
    rng = range(-(d + 1), d + 2)
    return np.array(list(itertools.product(rng, repeat=d)), dtype=np.int64)


def strictly_separable(l: int, d: int) -> bool:
    """Whether black and white vertices of ``l`` have disjoint convex hulls.

    Decided in exact integer arithmetic by searching a separating direction
    among a finite set of integer directions that meets every cell of the
    vertex-difference hyperplane arrangement.
    """
    _check_dim(d)
    if not 0 < l < full_mask(d):
        raise InvalidInput(f"configuration {l} has an empty black or white set")
    B, W = black_white(l, d)
    dirs = _candidate_directions(d)
    hb = (dirs @ B.T).max(axis=1)
    hw = (dirs @ W.T).min(axis=1)
    return bool(np.any(hb < hw))


@lru_cache(maxsize=None)
def separable_mask(d: int) -> np.ndarray:
    """Boolean array over all configurations; empty/full count as not separable."""
    out = np.zeros(n_configs(d), dtype=bool)
    for l in range(1, full_mask(d)):
        out[l] = strictly_separable(l, d)
    out.setflags(write=False)
    return out


def class_table(d: int) -> dict:
    part = orbit_classes(d)
    sep = separable_mask(d)
    rows = []
    for j, members in enumerate(part.classes):
        rows.append(
            {
                "id": j,
                "representative_mask": members[0],
                "members": list(members),
                "separable": bool(sep[members[0]]),
                "label": part.label(j),
            }
        )
    return {"d": d, "classes": rows}


def class_table_json(d: int, **kwargs) -> str:
    return json.dumps(class_table(d), **kwargs)
