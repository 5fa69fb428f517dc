"""Head-movement traces: windowing, resampling, orientation maps, error metrics.

A trace stores integer-millisecond timestamps and an ``(n, 3)`` array of
unit vectors sharing one :class:`~headprint.geometry.Frame` tag.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    EmptyWindowError,
    FormatError,
    FrameMismatchError,
    InsufficientDataError,
    InvalidArgumentError,
)
from .geometry import Frame, equirect_project, slerp, to_spherical, wrap_deg

UNIT_TOL = 1e-6
CSV_HEADER = ["t_ms", "x", "y", "z", "frame"]


@dataclass(frozen=True, eq=False)
class HeadMovementTrace:
    t_ms: np.ndarray
    vectors: np.ndarray
    frame: Frame
    session_id: str = ""

    def __post_init__(self):
        t = np.asarray(self.t_ms, dtype=np.int64).reshape(-1)
        v = np.asarray(self.vectors, dtype=float).reshape(-1, 3)
        if len(t) != len(v):
            raise InvalidArgumentError("timestamp and vector counts differ")
        if len(t) and t[0] < 0:
            raise InvalidArgumentError("timestamps must be nonnegative")
        if np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("timestamps must be strictly increasing")
        norms = np.linalg.norm(v, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise InvalidArgumentError("trace vectors must be unit length")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "t_ms", t)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "frame", Frame(self.frame))

    def __len__(self) -> int:
        return len(self.t_ms)

    @property
    def span_ms(self) -> int:
        """Time from first to last sample."""
        return int(self.t_ms[-1] - self.t_ms[0]) if len(self) else 0

    def replace(self, **changes) -> "HeadMovementTrace":
        kw = dict(t_ms=self.t_ms, vectors=self.vectors, frame=self.frame,
                  session_id=self.session_id)
        kw.update(changes)
        return HeadMovementTrace(**kw)

    def samples(self) -> list[tuple[int, np.ndarray]]:
        return [(int(t), v) for t, v in zip(self.t_ms, self.vectors)]

    def equals(self, other: "HeadMovementTrace", atol: float = 0.0) -> bool:
        return (
            self.frame == other.frame
            and np.array_equal(self.t_ms, other.t_ms)
            and np.allclose(self.vectors, other.vectors, rtol=0.0, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class HeadOrientationMap:
    cells: np.ndarray  # (H, W)
    t_ms: int

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]


@dataclass(frozen=True)
class TraceErrorReport:
    yaw_mae_deg: float
    pitch_mae_deg: float
    mse: float


def window(trace: HeadMovementTrace, t0_ms: int, T_s: float) -> HeadMovementTrace:
    if len(trace) == 0:
        raise EmptyWindowError("trace is empty")
    if T_s <= 0:
        raise InvalidArgumentError("window length must be positive")
    end = t0_ms + 1000.0 * T_s
    keep = (trace.t_ms >= t0_ms) & (trace.t_ms < end)
    if not keep.any():
        raise EmptyWindowError(f"no samples in [{t0_ms}, {end}) ms")
    return trace.replace(t_ms=trace.t_ms[keep] - t0_ms, vectors=trace.vectors[keep])


def resample(trace: HeadMovementTrace, period_ms: int) -> HeadMovementTrace:
    """Resample onto ``t0, t0 + period, ...`` up to the last timestamp, by slerp."""
    if len(trace) < 2:
        raise InsufficientDataError("resampling needs at least two samples")
    if period_ms < 1:
        raise InvalidArgumentError("period must be at least 1 ms")
    t = trace.t_ms
    grid = np.arange(t[0], t[-1] + 1, period_ms, dtype=np.int64)
    hi = np.clip(np.searchsorted(t, grid, side="left"), 1, len(t) - 1)
    lo = hi - 1
    frac = (grid - t[lo]) / (t[hi] - t[lo])
    frac = np.clip(frac, 0.0, 1.0)
    v = slerp(trace.vectors[lo], trace.vectors[hi], frac)
    exact = grid == t[hi]
    v[exact] = trace.vectors[hi[exact]]
    exact = grid == t[lo]
    v[exact] = trace.vectors[lo[exact]]
    return trace.replace(t_ms=grid, vectors=v)


def interval_grid_ms(span_ms: int, tau_s: float) -> np.ndarray:
    """Grid ``0, tau, 2 tau, ...`` in ms covering ``[0, span_ms]``."""
    if tau_s <= 0:
        raise InvalidArgumentError("sampling interval must be positive")
    n = int(np.floor(span_ms / (1000.0 * tau_s) + 1e-9)) + 1
    return np.round(np.arange(n) * tau_s * 1000.0).astype(np.int64)


def sample_at_interval(trace: HeadMovementTrace, tau_s: float) -> list[tuple[int, np.ndarray]]:
    """Pick the sample nearest to each multiple of ``tau_s`` (ties go to the earlier one).

    Grid times are relative to the first sample and returned as such.
    """
    if len(trace) == 0:
        return []
    rel = trace.t_ms - trace.t_ms[0]
    grid = interval_grid_ms(int(rel[-1]), tau_s)
    idx = nearest_index(rel, grid)
    return [(int(g), trace.vectors[i]) for g, i in zip(grid, idx)]


def nearest_index(times: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Index of the nearest entry of sorted ``times`` per query, ties to the earlier."""
    hi = np.clip(np.searchsorted(times, queries, side="left"), 0, len(times) - 1)
    lo = np.clip(hi - 1, 0, len(times) - 1)
    pick_lo = np.abs(queries - times[lo]) <= np.abs(times[hi] - queries)
    return np.where(pick_lo, lo, hi)


def _splat(w: float, h: float, W: int, H: int, sigma: float) -> np.ndarray:
    if sigma == 0:
        cells = np.zeros((H, W))
        cells[min(int(np.floor(h)), H - 1), int(np.floor(w)) % W] = 1.0
        return cells
    cx = np.arange(W) + 0.5
    cy = np.arange(H) + 0.5
    dx = np.abs(cx - w) % W
    dx = np.minimum(dx, W - dx)
    # periodic images beyond the nearest one matter only for wide splats
    reps = int(np.ceil(8 * sigma / W))
    gx = np.zeros(W)
    with np.errstate(over="ignore", under="ignore"):
        for k in range(-reps, reps + 1):
            gx += np.exp(-0.5 * ((dx + k * W) / sigma) ** 2)
        gy = np.exp(-0.5 * ((cy - h) / sigma) ** 2)
    cells = np.outer(gy, gx)
    total = cells.sum()
    if total == 0.0:  # splat far below cell resolution off-grid; fall back to hot cell
        return _splat(w, h, W, H, 0.0)
    return cells / total


def orientation_maps(samples, W: int, H: int, splat_sigma_px: float,
                     frame: Frame = Frame.VR) -> list[HeadOrientationMap]:
    """Render each ``(t_ms, v)`` sample as a unit-mass splat on a ``W x H`` grid."""
    if Frame(frame) != Frame.VR:
        raise FrameMismatchError("orientation maps require VR-frame vectors")
    if splat_sigma_px < 0:
        raise InvalidArgumentError("splat sigma must be nonnegative")
    out = []
    for t, v in samples:
        p = equirect_project(to_spherical(np.asarray(v, dtype=float)), W, H)
        out.append(HeadOrientationMap(_splat(p.w, p.h, W, H, splat_sigma_px), int(t)))
    return out


def _check_aligned(est: HeadMovementTrace, gt: HeadMovementTrace):
    if len(est) != len(gt) or not np.array_equal(est.t_ms, gt.t_ms):
        raise AlignmentError("traces differ in length or timestamps")


def trace_mse(est: HeadMovementTrace, gt: HeadMovementTrace) -> float:
    _check_aligned(est, gt)
    if len(est) == 0:
        return 0.0
    d = est.vectors - gt.vectors
    return float(np.mean(np.sum(d * d, axis=1) / 3.0))


def trace_mae(est: HeadMovementTrace, gt: HeadMovementTrace) -> TraceErrorReport:
    mse = trace_mse(est, gt)
    if len(est) == 0:
        return TraceErrorReport(0.0, 0.0, 0.0)
    a = to_spherical(est.vectors)
    b = to_spherical(gt.vectors)
    yaw = np.abs(wrap_deg(a.azimuth_deg - b.azimuth_deg))
    pitch = np.abs(a.altitude_deg - b.altitude_deg)
    return TraceErrorReport(float(np.mean(yaw)), float(np.mean(pitch)), mse)


def dumps_trace(trace: HeadMovementTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    tag = trace.frame.value
    for t, (x, y, z) in zip(trace.t_ms, trace.vectors):
        w.writerow([int(t), repr(float(x)), repr(float(y)), repr(float(z)), tag])
    return buf.getvalue()


def loads_trace(text: str, session_id: str = "") -> HeadMovementTrace:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise FormatError(f"trace CSV header must be {','.join(CSV_HEADER)}")
    body = rows[1:]
    try:
        t = [int(r[0]) for r in body]
        v = [[float(r[1]), float(r[2]), float(r[3])] for r in body]
        frames = {r[4] for r in body}
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed trace row: {exc}") from None
    if len(frames) > 1:
        raise FormatError("trace mixes frame tags")
    try:
        frame = Frame(frames.pop()) if frames else Frame.VR
    except ValueError:
        raise FormatError("frame must be 'camera' or 'vr'") from None
    try:
        return HeadMovementTrace(np.array(t, dtype=np.int64), np.array(v).reshape(-1, 3),
                                 frame, session_id)
    except InvalidArgumentError as exc:
        raise FormatError(str(exc)) from None


def save_trace(trace: HeadMovementTrace, path) -> None:
    Path(path).write_bytes(dumps_trace(trace).encode("utf-8"))


def load_trace(path) -> HeadMovementTrace:
    path = Path(path)
    return loads_trace(path.read_bytes().decode("utf-8"), session_id=path.stem)
