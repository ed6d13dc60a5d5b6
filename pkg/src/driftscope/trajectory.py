"""Particle trajectory container, trajectory distance, and file I/O.

Trajectories are dense: every particle has a position at every shared time
step. The on-disk binary format (PTRJ) is little-endian:

    magic "PTRJ" | u32 version=1 | u64 n | u32 T | u32 d |
    f64 times[T] | f32 positions[n*T*d]   (particle-major, then time, then dim)

CSV ingestion is also accepted, with header ``id,t,x,y[,z]`` and one row per
particle per time step; all particles must share the identical set of times.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

PTRJ_MAGIC = b"PTRJ"
PTRJ_VERSION = 1
_HEADER = struct.Struct("<4sIQII")


@dataclass(frozen=True)
class TrajectoryDataset:
    """Positions of n particles sampled on a shared, strictly increasing time axis.

    Attributes:
        times: (T,) float64 time values in simulation units.
        positions: (n, T, d) float64 positions, d in {2, 3}.

    Datasets are immutable after construction; the backing arrays are marked
    read-only so they can be shared freely across threads.
    """

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        times = np.ascontiguousarray(np.asarray(self.times, dtype=np.float64))
        positions = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        if positions.ndim != 3:
            raise ValidationError("positions must have shape (n, T, d)")
        n, T, d = positions.shape
        if T < 2:
            raise ValidationError("need at least two time steps")
        if d not in (2, 3):
            raise ValidationError("spatial dimension must be 2 or 3")
        if times.shape != (T,):
            raise ValidationError("times length must match the time axis of positions")
        if not np.all(np.diff(times) > 0):
            raise ValidationError("times must be strictly increasing")
        if not (np.isfinite(times).all() and np.isfinite(positions).all()):
            raise ValidationError("times/positions contain NaN or Inf")
        times.setflags(write=False)
        positions.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def T(self) -> int:
        return self.positions.shape[1]

    @property
    def d(self) -> int:
        return self.positions.shape[2]

    @property
    def tau(self) -> float:
        return float(self.times[-1] - self.times[0])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise (min, max) over all particles and times."""
        flat = self.positions.reshape(-1, self.d)
        return flat.min(axis=0), flat.max(axis=0)

    def domain_diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    """Per-step quadrature weights of the trapezoidal rule, normalized by the span.

    For times t_1..t_T the weight of step k is half the width of the
    intervals adjacent to it, divided by (t_T - t_1). Summing weighted
    per-step values reproduces the time-averaged trapezoidal integral.
    """
    times = np.asarray(times, dtype=np.float64)
    dt = np.diff(times)
    w = np.zeros(times.shape[0])
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w / (times[-1] - times[0])


def dynamic_distance(ds: TrajectoryDataset, i: int, j: int) -> float:
    """Time-averaged trapezoidal integral of the instantaneous distance of two trajectories.

    Symmetric, zero iff the trajectories coincide at every step, and a metric
    over trajectories. Handles nonuniform time sampling.
    """
    n = ds.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"particle index out of range (n={n})")
    gaps = np.linalg.norm(ds.positions[i] - ds.positions[j], axis=1)
    return float(trapezoid_weights(ds.times) @ gaps)


def dynamic_distances_from(
    positions: np.ndarray, times: np.ndarray, i: int
) -> np.ndarray:
    """Vector of dynamic distances from trajectory i to every trajectory.

    ``positions`` is any (n, T', d) view, e.g. a temporally subsampled slice;
    ``times`` the matching (T',) time values.
    """
    gaps = np.linalg.norm(positions - positions[i], axis=2)
    if times.shape[0] == 1:
        return gaps[:, 0]
    return gaps @ trapezoid_weights(times)


def write_trajectories(ds: TrajectoryDataset, sink) -> None:
    """Write a dataset to ``sink`` (path or binary file object) in PTRJ format.

    Positions are stored as float32; times as float64.
    """
    header = _HEADER.pack(PTRJ_MAGIC, PTRJ_VERSION, ds.n, ds.T, ds.d)
    body_times = ds.times.astype("<f8").tobytes()
    body_pos = ds.positions.astype("<f4").tobytes()
    if hasattr(sink, "write"):
        sink.write(header)
        sink.write(body_times)
        sink.write(body_pos)
    else:
        with open(sink, "wb") as fh:
            fh.write(header)
            fh.write(body_times)
            fh.write(body_pos)


def _load_ptrj(data: bytes) -> TrajectoryDataset:
    if len(data) < _HEADER.size:
        raise FormatError("file too short for a PTRJ header")
    magic, version, n, T, d = _HEADER.unpack_from(data, 0)
    if magic != PTRJ_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {PTRJ_MAGIC!r}")
    if version != PTRJ_VERSION:
        raise FormatError(f"unsupported PTRJ version {version}")
    off = _HEADER.size
    need = off + 8 * T + 4 * n * T * d
    if len(data) != need:
        raise CorruptionError(
            f"payload size {len(data)} does not match header (expected {need})"
        )
    times = np.frombuffer(data, dtype="<f8", count=T, offset=off)
    off += 8 * T
    pos = np.frombuffer(data, dtype="<f4", count=n * T * d, offset=off)
    return TrajectoryDataset(
        times=times.astype(np.float64),
        positions=pos.astype(np.float64).reshape(n, T, d),
    )


def _load_csv(text: str) -> TrajectoryDataset:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty CSV")
    header = [c.strip().lower() for c in lines[0].split(",")]
    if header[:2] != ["id", "t"] or header[2:] not in (["x", "y"], ["x", "y", "z"]):
        raise FormatError(f"unexpected CSV header {lines[0]!r}")
    d = len(header) - 2
    rows = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    if rows.shape[1] != 2 + d:
        raise CorruptionError("CSV row width does not match header")
    ids = rows[:, 0].astype(np.int64)
    ts = rows[:, 1]
    uniq_ids = np.unique(ids)
    uniq_ts = np.unique(ts)
    n, T = uniq_ids.shape[0], uniq_ts.shape[0]
    if rows.shape[0] != n * T:
        raise CorruptionError(
            f"expected {n * T} rows for {n} particles x {T} times, got {rows.shape[0]}"
        )
    id_index = {v: k for k, v in enumerate(uniq_ids)}
    t_index = {v: k for k, v in enumerate(uniq_ts)}
    positions = np.full((n, T, d), np.nan)
    for row in rows:
        positions[id_index[int(row[0])], t_index[row[1]]] = row[2:]
    if np.isnan(positions).any():
        raise CorruptionError("particles do not share an identical set of time values")
    return TrajectoryDataset(times=uniq_ts, positions=positions)


def load_trajectories(source) -> TrajectoryDataset:
    """Load a dataset from a PTRJ file or a CSV file (path or file object).

    The format is sniffed from the content: a PTRJ magic selects the binary
    parser; an ``id,t,...`` header selects CSV; anything else is a format
    error.
    """
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if isinstance(data, str):
        data = data.encode()
    if data[:4] == PTRJ_MAGIC:
        return _load_ptrj(data)
    head = data[:64].decode("utf-8", errors="replace").lower()
    if head.startswith("id,"):
        return _load_csv(data.decode("utf-8"))
    raise FormatError(f"bad magic {data[:4]!r}, expected {PTRJ_MAGIC!r} or a CSV header")


def time_reversed(ds: TrajectoryDataset) -> TrajectoryDataset:
    """Dataset with the time axis run backwards (for direction symmetry checks)."""
    new_times = ds.times[0] + (ds.times[-1] - ds.times)[::-1]
    return TrajectoryDataset(times=new_times, positions=ds.positions[:, ::-1, :])
