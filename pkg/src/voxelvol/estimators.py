"""Weighted configuration-count estimators and unbiasedness systems."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import configs
from .asymptotics import CoefficientTable, MU_BAR_3D, cylinder_coefficients
from .configs import InvalidInput
from .imaging import ConfigHistogram

DIVERGENCE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Class weights ``w_j`` of an estimator of ``V_i``; the full weight is ``a^i w_j``."""

    i: int
    d: int
    weights: np.ndarray

    def __post_init__(self):
        configs._check_dim(self.d)
        part = configs.orbit_classes(self.d)
        w = np.array(self.weights, dtype=float)
        if w.shape != (len(part),):
            raise InvalidInput(f"expected {len(part)} class weights for d={self.d}, got {w.shape}")
        if not 0 <= self.i <= self.d:
            raise InvalidInput(f"index i={self.i} outside 0..{self.d}")
        if w[part.class_of[0]] != 0:
            raise InvalidInput("the empty configuration must have weight 0")
        if self.i < self.d and w[part.class_of[configs.full_mask(self.d)]] != 0:
            raise InvalidInput("the full configuration must have weight 0 when i < d")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_mapping(cls, i: int, d: int, mapping: dict) -> "WeightVector":
        part = configs.orbit_classes(d)
        w = np.zeros(len(part))
        for key, value in mapping.items():
            w[part.class_id(key)] = float(value)
        return cls(i, d, w)

    @property
    def partition(self) -> configs.ClassPartition:
        return configs.orbit_classes(self.d)

    def per_configuration(self) -> np.ndarray:
        return self.partition.expand(self.weights)

    def is_complement_antisymmetric(self, tol: float = 0.0) -> bool:
        part = self.partition
        comp = np.array([part.complement_class(j) for j in range(len(part))])
        return bool(np.all(np.abs(self.weights + self.weights[comp]) <= tol))

    def to_dict(self) -> dict:
        return {
            "i": self.i,
            "d": self.d,
            "weights": {str(j): float(v) for j, v in enumerate(self.weights) if v != 0},
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "WeightVector":
        missing = [k for k in ("i", "d", "weights") if k not in data]
        if missing:
            raise InvalidInput(f"weight file lacks fields: {', '.join(missing)}")
        return cls.from_mapping(int(data["i"]), int(data["d"]), data["weights"])

    @classmethod
    def from_json(cls, text: str) -> "WeightVector":
        return cls.from_dict(json.loads(text))


def _class_counts(weights: WeightVector, counts) -> np.ndarray:
    part = weights.partition
    if isinstance(counts, ConfigHistogram):
        if counts.d != weights.d:
            raise InvalidInput(f"histogram is {counts.d}-dimensional, weights are for d={weights.d}")
        return part.class_sums(counts.counts)
    counts = np.asarray(counts)
    if counts.shape == (configs.n_configs(weights.d),):
        return part.class_sums(counts)
    if counts.shape != (len(part),):
        raise InvalidInput(f"expected {len(part)} class counts, got shape {counts.shape}")
    return counts


def evaluate(weights: WeightVector, class_counts, a: float) -> float:
    """``a^i Σ_j w_j N̄_j``; accepts class counts, per-configuration counts or a histogram."""
    if not a > 0:
        raise InvalidInput("a must be positive")
    n = _class_counts(weights, class_counts)
    return float(a**weights.i * np.dot(weights.weights, n))


def evaluate_per_configuration(w_l, counts, a: float, i: int) -> float:
    """Estimator with arbitrary (not necessarily class-constant) weights."""
    return float(a**i * np.dot(np.asarray(w_l, dtype=float), np.asarray(counts)))


def symmetrize(w_l, d: int) -> np.ndarray:
    """Average per-configuration weights over their classes."""
    part = configs.orbit_classes(d)
    w_l = np.asarray(w_l, dtype=float)
    sizes = np.asarray(part.sizes, dtype=float)
    return part.expand(part.class_sums(w_l) / sizes)


def euler_2d_weights() -> WeightVector:
    return WeightVector.from_mapping(0, 2, {"eta1": 0.25, "eta3": -0.25})


def isotropic_3d_unbiased_weights() -> WeightVector:
    w = 1.0 / (2.0 * MU_BAR_3D["eta1"])
    return WeightVector.from_mapping(1, 3, {"eta1": w, "eta7": -w})


@dataclass
class AsymptoticMean:
    first_order: float
    zeroth_order: float | None

    @property
    def divergent(self) -> bool:
        return self.zeroth_order is None


def asymptotic_mean(
    weights: WeightVector,
    table: CoefficientTable,
    X=None,
    mode: str = "isotropic",
    tol: float = DIVERGENCE_TOL,
) -> AsymptoticMean:
    """Limits of ``a E V̂`` and (when the former vanishes) ``E V̂`` as ``a → 0``.

    ``mode="isotropic"`` uses ψ̄ and μ̄ and scales by ``V_{d-1}(X)`` and
    ``V_{d-2}(X)``; without ``X`` the bare factors are returned.
    ``mode="stationary"`` uses φ̄(X) and λ̄(X) from ``table``.
    """
    if weights.i != weights.d - 2:
        raise InvalidInput("the expansion applies to estimators of V_{d-2}")
    if table.d != weights.d:
        raise InvalidInput("coefficient table dimension does not match weights")
    w = weights.weights
    if mode == "isotropic":
        v_hi = v_lo = 1.0
        if X is not None:
            vols = X.intrinsic_volumes()
            v_hi, v_lo = vols[weights.d - 1], vols[weights.d - 2]
        first = v_hi * float(w @ table.psi_bar)
        zeroth = v_lo * float(w @ table.mu_bar)
    elif mode == "stationary":
        if table.phi_bar is None or table.lambda_bar is None:
            raise InvalidInput("stationary mode needs phi_bar and lambda_bar in the table")
        first = float(w @ table.phi_bar)
        zeroth = float(w @ table.lambda_bar)
    else:
        raise InvalidInput(f"unknown mode {mode!r}")
    if abs(first) > tol:
        return AsymptoticMean(first, None)
    return AsymptoticMean(0.0, zeroth)


# ---------------------------------------------------------------------------
# Linear systems
# ---------------------------------------------------------------------------

@dataclass
class LinearSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    labels: list[str]
    unknowns: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        n = len(self.unknowns)
        self.matrix = np.asarray(self.matrix, dtype=float).reshape(self.rhs.size, n)
        if len(self.labels) != self.rhs.size:
            raise InvalidInput("one label per row is required")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidInput("row labels must be unique")

    def sub(self, labels) -> "LinearSystem":
        rows = [self.labels.index(l) for l in labels]
        return LinearSystem(self.matrix[rows], self.rhs[rows], list(labels), list(self.unknowns))


def build_nonexistence_system_3d(source: str = "closed-form", tol: float = 1e-10) -> LinearSystem:
    """Capsule and isotropic constraints in ``A = w1-w7, B = w2-w6, C = w3-w5``.

    Rows are normalized per unit capsule length.  ``source="quadrature"``
    builds every coefficient numerically instead of from closed forms.
    """
    labels = ["h1=t1", "h2=t2", "h3=t3", "mu-normalize"]
    unknowns = ["A", "B", "C"]
    if source == "closed-form":
        s2, s3 = math.sqrt(2.0), math.sqrt(3.0)
        M = [
            [0.0, 2.0, 0.0],
            [s2, 0.0, s2],
            [s3, s3, -s3],
            [MU_BAR_3D["eta1"], MU_BAR_3D["eta2"], MU_BAR_3D["eta3"]],
        ]
    elif source == "quadrature":
        from .asymptotics import isotropic_coefficients

        part = configs.orbit_classes(3)
        cols = [part.class_id(n) for n in ("eta1", "eta2", "eta3")]
        M = []
        for u in capsule_directions():
            M.append(part.class_sums(cylinder_coefficients(u, tol))[cols])
        M.append(isotropic_coefficients(3, tol=tol).mu_bar[cols])
    else:
        raise InvalidInput(f"unknown source {source!r}")
    return LinearSystem(np.array(M), np.ones(4), labels, unknowns)


def capsule_directions() -> list[np.ndarray]:
    return [
        np.array([1.0, 0.0, 0.0]),
        np.array([1.0, 1.0, 0.0]) / math.sqrt(2.0),
        np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0),
    ]


def capsule_constraint(u, weights: WeightVector, tol: float = 1e-10) -> float:
    """Second-order coefficient per unit length of a capsule along ``u``."""
    if weights.d != 3:
        raise InvalidInput("capsule constraints are formulated for d=3")
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise InvalidInput("u must be a unit vector")
    per_class = weights.partition.class_sums(cylinder_coefficients(u, tol))
    return float(weights.weights @ per_class)


def build_euler_system_2d() -> LinearSystem:
    """Constraints on ``(w1, w2, w3)`` for an unbiased 2D Euler estimator."""
    return LinearSystem(
        [[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [2.0, 0.0, -2.0]],
        [0.0, 0.0, 1.0],
        ["w2=0", "w1+w3=0", "mu-normalize"],
        ["w1", "w2", "w3"],
    )


@dataclass
class FeasibilityReport:
    feasible: bool
    solution: np.ndarray
    residual: float
    rank: int
    augmented_rank: int
    unique: bool
    labels: list[str]
    unknowns: list[str]

    def to_dict(self) -> dict:
        return {
            "verdict": "feasible" if self.feasible else "infeasible",
            "unique": self.unique,
            "rank": self.rank,
            "augmented_rank": self.augmented_rank,
            "residual": self.residual,
            "solution": dict(zip(self.unknowns, map(float, self.solution))),
            "rows": self.labels,
        }


def _rank(M: np.ndarray, tol: float | None) -> int:
    if M.size == 0:
        return 0
    _, R, _ = scipy.linalg.qr(M, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    if tol is None:
        tol = 100 * np.finfo(float).eps * max(M.shape) * (diag[0] if diag.size else 0.0)
    return int(np.sum(diag > tol))


def check_feasibility(system: LinearSystem, tol: float | None = None) -> FeasibilityReport:
    """Rank test via pivoted QR plus the minimum-norm least-squares residual."""
    A, b = system.matrix, system.rhs
    n = A.shape[1]
    if A.shape[0] == 0:
        return FeasibilityReport(True, np.zeros(n), 0.0, 0, 0, n == 0, [], list(system.unknowns))
    scale = np.maximum(np.linalg.norm(np.column_stack([A, b]), axis=1), 1e-300)
    As, bs = A / scale[:, None], b / scale
    rank = _rank(As, tol)
    aug = _rank(np.column_stack([As, bs]), tol)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    residual = float(np.linalg.norm(A @ x - b))
    feasible = aug == rank
    return FeasibilityReport(feasible, x, residual, rank, aug, feasible and rank == n, list(system.labels), list(system.unknowns))


@dataclass
class AffineFamily:
    """``{particular + basis @ t}``: all class weight vectors meeting the constraints."""

    particular: np.ndarray
    basis: np.ndarray

    def member(self, t) -> np.ndarray:
        return self.particular + self.basis @ np.asarray(t, dtype=float)


def isotropic_unbiased_family(table: CoefficientTable) -> AffineFamily:
    """Class weights with ``Σ w ψ̄ = 0``, ``Σ w μ̄ = 1`` and zero weight on the
    empty and full configurations."""
    part = table.partition
    n = len(part)
    e0 = np.zeros(n)
    e0[part.class_of[0]] = 1.0
    e1 = np.zeros(n)
    e1[part.class_of[configs.full_mask(table.d)]] = 1.0
    M = np.vstack([table.psi_bar, table.mu_bar, e0, e1])
    rhs = np.array([0.0, 1.0, 0.0, 0.0])
    x, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    return AffineFamily(x, scipy.linalg.null_space(M))
