"""Binary images on posed lattices, voxelization and configuration counts."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import configs
from .configs import InvalidInput

PACKING = "row-major-lsb"
_SLAB_VOXELS = 1 << 22


@dataclass(frozen=True, eq=False)
class LatticePose:
    """Lattice ``a R (Z^d + c)``."""

    a: float
    R: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float)
        c = np.array(self.c, dtype=float)
        d = c.size
        if not self.a > 0:
            raise InvalidInput(f"lattice spacing must be positive, got {self.a}")
        if R.shape != (d, d):
            raise InvalidInput(f"rotation must be {d}x{d}, got {R.shape}")
        if np.max(np.abs(R.T @ R - np.eye(d))) > 1e-12 or np.linalg.det(R) < 0:
            raise InvalidInput("R must be a proper rotation")
        if np.any(c < 0) or np.any(c >= 1):
            raise InvalidInput("c must lie in [0, 1)^d")
        R.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "c", c)

    @classmethod
    def axis_aligned(cls, a: float, d: int, c=None) -> "LatticePose":
        return cls(a, np.eye(d), np.zeros(d) if c is None else c)

    @property
    def dim(self) -> int:
        return self.c.size

    def points(self, k: np.ndarray) -> np.ndarray:
        """World coordinates of integer lattice indices ``k`` (N, d)."""
        return self.a * (np.asarray(k, dtype=float) + self.c) @ self.R.T

    def to_dict(self) -> dict:
        return {"a": self.a, "R": self.R.tolist(), "c": self.c.tolist()}


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Occupancy of lattice points; ``bits`` holds packed rows along the last axis."""

    dims: tuple[int, ...]
    bits: np.ndarray
    pose: LatticePose
    window_origin: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if any(n < 1 for n in dims):
            raise InvalidInput(f"invalid dims {dims}")
        rows = int(np.prod(dims[:-1], dtype=np.int64))
        width = (dims[-1] + 7) // 8
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8).reshape(rows, width)
        bits.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "window_origin", tuple(int(o) for o in self.window_origin))

    @classmethod
    def from_array(cls, array, pose: LatticePose | None = None, window_origin=None) -> "BinaryImage":
        arr = np.asarray(array).astype(bool)
        d = arr.ndim
        pose = LatticePose.axis_aligned(1.0, d) if pose is None else pose
        origin = (0,) * d if window_origin is None else window_origin
        packed = np.packbits(arr.reshape(-1, arr.shape[-1]), axis=-1, bitorder="little")
        return cls(arr.shape, packed, pose, origin)

    @property
    def dim(self) -> int:
        return len(self.dims)

    def to_array(self, rows: slice | None = None) -> np.ndarray:
        """Unpacked boolean array; ``rows`` selects planes along axis 0."""
        if rows is None:
            rows = slice(0, self.dims[0])
        start, stop, _ = rows.indices(self.dims[0])
        per_plane = int(np.prod(self.dims[1:-1], dtype=np.int64))
        packed = self.bits[start * per_plane : stop * per_plane]
        flat = np.unpackbits(packed, axis=-1, count=self.dims[-1], bitorder="little")
        return flat.reshape((stop - start,) + self.dims[1:]).astype(bool)

    def foreground_count(self) -> int:
        # Padding bits are always zero.
        return int(np.unpackbits(self.bits).sum())

    def header(self) -> dict:
        return {
            "dims": list(self.dims),
            "a": self.pose.a,
            "R": self.pose.R.tolist(),
            "c": self.pose.c.tolist(),
            "origin": list(self.window_origin),
            "packing": PACKING,
        }

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(json.dumps(self.header()).encode() + b"\n")
            fh.write(self.bits.tobytes())

    @classmethod
    def read(cls, path) -> "BinaryImage":
        raw = Path(path).read_bytes()
        nl = raw.find(b"\n")
        if nl < 0:
            raise InvalidInput(f"{path}: missing BVOX header line")
        try:
            head = json.loads(raw[:nl])
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"{path}: malformed BVOX header: {exc}") from exc
        if head.get("packing") != PACKING:
            raise InvalidInput(f"{path}: unsupported packing {head.get('packing')!r}")
        dims = tuple(head["dims"])
        rows = int(np.prod(dims[:-1], dtype=np.int64))
        width = (dims[-1] + 7) // 8
        body = np.frombuffer(raw, dtype=np.uint8, offset=nl + 1)
        if body.size != rows * width:
            raise InvalidInput(f"{path}: expected {rows * width} data bytes, found {body.size}")
        pose = LatticePose(head["a"], np.array(head["R"]), np.array(head["c"]))
        return cls(dims, body.reshape(rows, width), pose, tuple(head["origin"]))


def voxelize(phantom, pose: LatticePose, margin: float | None = None) -> BinaryImage:
    """Sample ``phantom`` on the lattice of ``pose`` over its inflated bounding box.

    The window covers every lattice point within ``margin`` (default ``a``)
    of the bounding box.  Boundary points count as foreground.  Rows along
    the last lattice axis are filled from exact chord intersections.
    """
    from .asymptotics import chord_intervals

    a = pose.a
    margin = a if margin is None else float(margin)
    if margin < a:
        raise InvalidInput(f"margin {margin:g} is smaller than the lattice spacing {a:g}")
    d = pose.dim
    if phantom.dim != d:
        raise InvalidInput(f"phantom dimension {phantom.dim} does not match pose dimension {d}")
    local = phantom.transformed(pose.R.T)
    lo, hi = local.bounding_box()
    kmin = np.ceil((lo - margin) / a - pose.c).astype(np.int64)
    kmax = np.floor((hi + margin) / a - pose.c).astype(np.int64)
    dims = tuple(int(n) for n in kmax - kmin + 1)

    axes = [(np.arange(dims[k]) + kmin[k] + pose.c[k]) * a for k in range(d - 1)]
    base = np.zeros((int(np.prod(dims[:-1])), d))
    if d > 1:
        grids = np.meshgrid(*axes, indexing="ij")
        for k in range(d - 1):
            base[:, k] = grids[k].ravel()
    t_lo, t_hi = chord_intervals(local, base)
    first = np.ceil(t_lo / a - pose.c[-1]) - kmin[-1]
    last = np.floor(t_hi / a - pose.c[-1]) - kmin[-1]
    # Rows that miss the body stay empty.
    first = np.where(t_hi >= t_lo, first, 1)
    last = np.where(t_hi >= t_lo, last, 0)

    n_last = dims[-1]
    width = (n_last + 7) // 8
    rows = base.shape[0]
    packed = np.zeros((rows, width), dtype=np.uint8)
    idx = np.arange(n_last)
    step = max(1, _SLAB_VOXELS // n_last)
    for s in range(0, rows, step):
        f, l_ = first[s : s + step, None], last[s : s + step, None]
        packed[s : s + step] = np.packbits((idx >= f) & (idx <= l_), axis=-1, bitorder="little")
    return BinaryImage(dims, packed, pose, tuple(int(k) for k in kmin))


@dataclass
class ConfigHistogram:
    d: int
    counts: np.ndarray
    window_cells: int = field(default=0)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (configs.n_configs(self.d),):
            raise InvalidInput("histogram length does not match dimension")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ConfigHistogram)
            and self.d == other.d
            and self.window_cells == other.window_cells
            and np.array_equal(self.counts, other.counts)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l", "count"])
        for l, n in enumerate(self.counts.tolist()):
            w.writerow([l, n])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, d: int) -> "ConfigHistogram":
        counts = np.zeros(configs.n_configs(d), dtype=np.int64)
        for row in csv.DictReader(io.StringIO(text)):
            counts[int(row["l"])] = int(row["count"])
        return cls(d, counts, int(counts.sum()))


def _cell_count(dims) -> int:
    return int(np.prod([max(n - 1, 0) for n in dims], dtype=np.int64))


def _slab_codes(block: np.ndarray) -> np.ndarray:
    """Cell codes for every cell whose corners lie in ``block``."""
    d = block.ndim
    inner = tuple(n - 1 for n in block.shape)
    code = np.zeros(inner, dtype=np.uint8)
    for i in range(1 << d):
        sl = tuple(slice((i >> k) & 1, ((i >> k) & 1) + inner[k]) for k in range(d))
        code |= block[sl].view(np.uint8) << np.uint8(i)
    return code


def count_configurations(image: BinaryImage) -> ConfigHistogram:
    """Histogram ``N_l`` over all cells inside the window."""
    d = image.dim
    if d > 3:
        raise InvalidInput("counting is implemented for d <= 3")
    if any(n < 2 for n in image.dims):
        raise InvalidInput(f"every axis needs at least 2 samples, got dims {image.dims}")
    counts = np.zeros(configs.n_configs(d), dtype=np.int64)
    n0 = image.dims[0]
    per_plane = int(np.prod(image.dims[1:]))
    step = max(1, _SLAB_VOXELS // per_plane)
    for start in range(0, n0 - 1, step):
        stop = min(start + step, n0 - 1)
        block = image.to_array(slice(start, stop + 1))
        counts += np.bincount(_slab_codes(block).ravel(), minlength=counts.size)
    return ConfigHistogram(d, counts, _cell_count(image.dims))


def brute_force_count(image: BinaryImage) -> ConfigHistogram:
    """Reference counter: walk every cell and read its corners one at a time."""
    import itertools

    d = image.dim
    arr = image.to_array()
    counts = [0] * configs.n_configs(d)
    offsets = [tuple((i >> k) & 1 for k in range(d)) for i in range(1 << d)]
    flat = arr.ravel().tolist()
    strides = [int(np.prod(image.dims[k + 1 :])) for k in range(d)]
    for z in itertools.product(*(range(n - 1) for n in image.dims)):
        base = sum(zk * s for zk, s in zip(z, strides))
        code = 0
        for i, off in enumerate(offsets):
            if flat[base + sum(o * s for o, s in zip(off, strides))]:
                code |= 1 << i
        counts[code] += 1
    return ConfigHistogram(d, np.array(counts), _cell_count(image.dims))


def count_classes(hist: ConfigHistogram, partition: configs.ClassPartition) -> np.ndarray:
    """Per-class totals ``N̄_j``."""
    if hist.d != partition.dim:
        raise InvalidInput(f"histogram is {hist.d}-dimensional, partition is {partition.dim}-dimensional")
    return partition.class_sums(hist.counts)


def window_volume(image: BinaryImage) -> float:
    return float(math.prod(image.dims)) * image.pose.a ** image.dim
