"""Design-based Monte Carlo on randomly posed lattices."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import configs
from .asymptotics import hit_or_miss_volume, lambda_l_all, phi_l_all
from .configs import InvalidInput
from .estimators import WeightVector, evaluate
from .imaging import LatticePose, count_classes, count_configurations, voxelize
from .phantoms import Phantom

MODES = ("stationary", "isotropic")


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one task, keyed by integers (e.g. spacing index, replicate)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation: uniform angle in 2D, uniform unit quaternion in 3D."""
    if d == 2:
        th = rng.uniform(0.0, 2.0 * math.pi)
        c, s = math.cos(th), math.sin(th)
        return np.array([[c, -s], [s, c]])
    if d == 3:
        q = rng.standard_normal(4)
        w, x, y, z = q / np.linalg.norm(q)
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
    raise InvalidInput(f"random rotations are implemented for d = 2, 3, not {d}")


def sample_pose(mode: str, a: float, d: int, rng: np.random.Generator) -> LatticePose:
    if mode not in MODES:
        raise InvalidInput(f"mode must be one of {MODES}, got {mode!r}")
    c = rng.random(d)
    R = np.eye(d) if mode == "stationary" else random_rotation(d, rng)
    return LatticePose(a, R, c)


@dataclass
class DesignSpec:
    phantom: Phantom
    weights: WeightVector
    mode: str
    spacings: list[float]
    replicates: int
    seed: int = 0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise InvalidInput("invalid design: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.mode not in MODES:
            out.append(f"mode: expected one of {MODES}")
        if self.weights.d != self.phantom.dim:
            out.append("weights: dimension does not match phantom")
        if not self.spacings or any(not a > 0 for a in self.spacings):
            out.append("spacings: need at least one positive value")
        elif max(self.spacings) * math.sqrt(self.phantom.dim) >= self.phantom.r:
            out.append("spacings: largest a times sqrt(d) must be below r")
        if int(self.replicates) < 2:
            out.append("replicates: need at least 2")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DesignSpec":
        required = ("phantom", "weights", "mode", "spacings", "replicates")
        bad = [f"{k}: missing" for k in required if k not in data]
        if bad:
            raise InvalidInput("invalid design: " + "; ".join(bad))
        try:
            phantom = Phantom.from_dict(data["phantom"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"invalid design: phantom: {exc}") from exc
        try:
            weights = WeightVector.from_dict(data["weights"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"invalid design: weights: {exc}") from exc
        try:
            spacings = [float(a) for a in data["spacings"]]
            replicates = int(data["replicates"])
            seed = int(data.get("seed", 0))
        except (TypeError, ValueError) as exc:
            raise InvalidInput(f"invalid design: {exc}") from exc
        return cls(phantom, weights, str(data["mode"]), spacings, replicates, seed)

    def to_dict(self) -> dict:
        return {
            "phantom": self.phantom.to_dict(),
            "weights": self.weights.to_dict(),
            "mode": self.mode,
            "spacings": list(self.spacings),
            "replicates": self.replicates,
            "seed": self.seed,
        }


@dataclass
class Replicate:
    a: float
    replicate: int
    pose: LatticePose
    class_counts: np.ndarray
    estimate: float


@dataclass
class Summary:
    a: float
    mean: float
    stderr: float
    n: int


@dataclass
class FitResult:
    c_minus1: float
    c0: float
    residual: float
    sigma: tuple[float, float]

    def ci(self, k: float = 3.0) -> dict:
        return {
            "c_minus1": [self.c_minus1 - k * self.sigma[0], self.c_minus1 + k * self.sigma[0]],
            "c0": [self.c0 - k * self.sigma[1], self.c0 + k * self.sigma[1]],
        }

    def to_dict(self) -> dict:
        return {
            "c_minus1": self.c_minus1,
            "c0": self.c0,
            "residual": self.residual,
            "sigma": list(self.sigma),
            "ci": self.ci(),
        }


@dataclass
class ExperimentResult:
    design: DesignSpec
    records: list[Replicate]
    summaries: list[Summary]
    fit: FitResult | None = field(default=None)

    def results_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["a", "replicate", "estimate"])
        for r in self.records:
            w.writerow([repr(r.a), r.replicate, repr(r.estimate)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["a", "mean", "stderr", "n"])
        for s in self.summaries:
            w.writerow([repr(s.a), repr(s.mean), repr(s.stderr), s.n])
        return buf.getvalue()

    def fit_json(self) -> str:
        return json.dumps(None if self.fit is None else self.fit.to_dict(), indent=2)


def _one(design: DesignSpec, ia: int, rep: int) -> Replicate:
    a = design.spacings[ia]
    pose = sample_pose(design.mode, a, design.phantom.dim, rng_stream(design.seed, ia, rep))
    hist = count_configurations(voxelize(design.phantom, pose))
    n = count_classes(hist, design.weights.partition)
    return Replicate(a, rep, pose, n, evaluate(design.weights, n, a))


def summarize(a: float, values) -> Summary:
    v = np.asarray(values, dtype=float)
    return Summary(a, float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), int(v.size))


def run(design: DesignSpec, threads: int = 1, fit: bool = True) -> ExperimentResult:
    """Voxelize, count and evaluate every (spacing, replicate) pair.

    Each task draws from its own stream, so results do not depend on the
    thread count or execution order.
    """
    tasks = [(ia, rep) for ia in range(len(design.spacings)) for rep in range(design.replicates)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda t: _one(design, *t), tasks))
    else:
        records = [_one(design, ia, rep) for ia, rep in tasks]
    summaries = []
    for ia, a in enumerate(design.spacings):
        summaries.append(summarize(a, [r.estimate for r in records[ia * design.replicates : (ia + 1) * design.replicates]]))
    result = ExperimentResult(design, records, summaries)
    if fit and len(set(design.spacings)) >= 3:
        result.fit = fit_limits(summaries)
    return result


def fit_limits(summaries: list[Summary]) -> FitResult:
    """Inverse-variance weighted fit of ``mean(a) ≈ c_{-1}/a + c_0``.

    Zero standard errors (e.g. estimates that never vary) are floored at a
    small fraction of the largest one; if all vanish the fit is unweighted.
    """
    if len({s.a for s in summaries}) < 3:
        raise InvalidInput("at least 3 distinct spacings are needed for the fit")
    a = np.array([s.a for s in summaries])
    y = np.array([s.mean for s in summaries])
    se = np.array([s.stderr for s in summaries])
    X = np.column_stack([1.0 / a, np.ones_like(a)])
    if np.all(se == 0):
        sw = np.ones_like(se)
        known = False
    else:
        floor = max(1e-6 * se.max(), 1e-12 * max(1.0, np.abs(y).max()))
        sw = 1.0 / np.maximum(se, floor)
        known = True
    Xw, yw = X * sw[:, None], y * sw
    coef, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    resid = yw - Xw @ coef
    chi2 = float(resid @ resid)
    cov = np.linalg.inv(Xw.T @ Xw)
    if not known:
        dof = max(len(y) - 2, 1)
        cov = cov * chi2 / dof
    sig = np.sqrt(np.maximum(np.diag(cov), 0.0))
    # Noise-free data still carry rounding error in the solve.
    sig = np.maximum(sig, 64 * np.finfo(float).eps * np.maximum(np.abs(coef), 1.0))
    return FitResult(float(coef[0]), float(coef[1]), chi2, (float(sig[0]), float(sig[1])))


@dataclass
class HitMissRow:
    a: float
    empirical: float
    empirical_err: float
    grid: float
    grid_err: float
    first_order: float
    second_order: float

    @property
    def rel_first(self) -> float:
        return abs(self.grid - self.first_order) / abs(self.grid)

    @property
    def rel_second(self) -> float:
        return abs(self.grid - self.second_order) / abs(self.grid)

    @property
    def agrees(self) -> bool:
        # grid_err is already a three-sigma bound; empirical_err is one standard error.
        return abs(self.empirical - self.grid) <= math.hypot(3.0 * self.empirical_err, self.grid_err)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out.update(rel_first=self.rel_first, rel_second=self.rel_second, agrees=self.agrees)
        return out


def hitmiss_vs_theory(
    phantom: Phantom,
    l: int,
    a_list,
    replicates: int = 20,
    seed: int = 0,
    budget: int = 2**25,
    rel_tol: float = 1e-4,
) -> list[HitMissRow]:
    """Empirical ``a^d mean(N_l)``, hit-or-miss volume and expansion terms.

    Empirical values come from stationary lattices; ``empirical_err`` is one
    standard error and ``grid_err`` the quadrature error bound.
    """
    d = phantom.dim
    B, W = configs.black_white(l, d)
    L = phi_l_all(phantom)[0][l]
    lam = lambda_l_all(phantom)[0][l]
    rows = []
    for ia, a in enumerate(a_list):
        counts = []
        for rep in range(replicates):
            pose = sample_pose("stationary", a, d, rng_stream(seed, ia, rep))
            counts.append(count_configurations(voxelize(phantom, pose)).counts[l] * a**d)
        s = summarize(a, counts)
        vol, err = hit_or_miss_volume(phantom, B, W, a, method="grid", budget=budget, rel_tol=rel_tol)
        rows.append(HitMissRow(a, s.mean, s.stderr, vol, err, a * L, a * L + a * a * lam))
    return rows
