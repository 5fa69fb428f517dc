"""Saliency maps, video fingerprints and fingerprint libraries.

Frames are stored as one ``(n, H, W)`` float array; ``maps`` exposes them
as :class:`SaliencyMap` values. Frame ``i`` has timestamp
``i * frame_interval_ms``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSaliencyError,
    FormatError,
    InvalidArgumentError,
    NoOverlapError,
)
from .geometry import from_spherical, SphericalAngles, make_quaternion, rotate_vector
from .trace import nearest_index

EPS_FRACTION = 1e-6
PGM_MAX = 65535
_SAFE_ID = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    cells: np.ndarray  # (H, W)
    t_ms: int = 0

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=float)
        if c.ndim != 2:
            raise InvalidArgumentError("saliency map must be 2-D")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise InvalidArgumentError("saliency cells must be finite and nonnegative")
        object.__setattr__(self, "cells", c)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]


@dataclass(frozen=True, eq=False)
class VideoFingerprint:
    video_id: str
    frames: np.ndarray  # (n, H, W)
    frame_interval_ms: int

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=float)
        if f.ndim != 3 or f.shape[0] == 0:
            raise InvalidArgumentError("fingerprint needs a nonempty (n, H, W) frame stack")
        if self.frame_interval_ms < 1:
            raise InvalidArgumentError("frame interval must be at least 1 ms")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise InvalidArgumentError("saliency cells must be finite and nonnegative")
        f.flags.writeable = False
        object.__setattr__(self, "frames", f)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_ms(self) -> int:
        return len(self) * self.frame_interval_ms

    @property
    def timestamps(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.int64) * self.frame_interval_ms

    @property
    def maps(self) -> list[SaliencyMap]:
        return [SaliencyMap(c, int(t)) for c, t in zip(self.frames, self.timestamps)]


@dataclass(frozen=True)
class FingerprintLibrary:
    entries: tuple[VideoFingerprint, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [fp.video_id for fp in self.entries]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("duplicate video_id in library")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def get(self, video_id: str) -> VideoFingerprint:
        for fp in self.entries:
            if fp.video_id == video_id:
                return fp
        raise KeyError(video_id)

    @property
    def video_ids(self) -> list[str]:
        return [fp.video_id for fp in self.entries]


@dataclass(frozen=True)
class SynthSpec:
    blob_count: int = 3
    blob_sigma_deg: float = 12.0
    drift_speed_deg_s: float = 4.0
    duration_s: float = 60.0
    frame_interval_ms: int = 400
    seed: int = 0
    width: int = 64
    height: int = 32
    max_altitude_deg: float = 60.0

    def __post_init__(self):
        if self.blob_count < 1:
            raise InvalidArgumentError("blob_count must be >= 1")
        if self.blob_sigma_deg <= 0 or self.duration_s <= 0 or self.frame_interval_ms < 1:
            raise InvalidArgumentError("blob sigma, duration and frame interval must be positive")
        if self.drift_speed_deg_s < 0:
            raise InvalidArgumentError("drift speed must be nonnegative")
        if self.width < 1 or self.height < 1:
            raise InvalidArgumentError("grid size must be positive")


def normalize_cells(cells: np.ndarray) -> np.ndarray:
    """Floor every cell at ``1e-6 * max`` and rescale to unit sum.

    The floor is a clamp rather than an additive offset so that a second
    application is a no-op. Works on a single ``(H, W)`` map or a stack
    ``(n, H, W)`` (per map).
    """
    cells = np.asarray(cells, dtype=float)
    peak = cells.max(axis=(-2, -1), keepdims=True)
    if np.any(peak <= 0):
        raise DegenerateSaliencyError("saliency map has no positive cell")
    c = np.maximum(cells, EPS_FRACTION * peak)
    return c / c.sum(axis=(-2, -1), keepdims=True)


def normalize_saliency(m: SaliencyMap) -> SaliencyMap:
    return SaliencyMap(normalize_cells(m.cells), m.t_ms)


def cell_directions(W: int, H: int) -> np.ndarray:
    """Unit vectors at the centers of an equirectangular grid, shape ``(H, W, 3)``."""
    w = np.arange(W) + 0.5
    h = np.arange(H) + 0.5
    az = w / W * 360.0
    alt = np.degrees(np.arcsin(1.0 - 2.0 * h / H))
    A, L = np.meshgrid(az, alt)
    return from_spherical(SphericalAngles(A, L))


def render_blobs(centers: np.ndarray, sigma_deg: float, W: int, H: int,
                 weights=None) -> np.ndarray:
    """Mixture of spherical Gaussian blobs on the grid; ``centers`` is ``(k, 3)``."""
    dirs = cell_directions(W, H)
    centers = np.atleast_2d(centers)
    weights = np.ones(len(centers)) if weights is None else np.asarray(weights, dtype=float)
    dots = np.clip(dirs @ centers.T, -1.0, 1.0)  # (H, W, k)
    ang = np.degrees(np.arccos(dots))
    return np.exp(-0.5 * (ang / sigma_deg) ** 2) @ weights


def synth_fingerprint(spec: SynthSpec, video_id: str | None = None) -> VideoFingerprint:
    """Seeded fingerprint of Gaussian blobs drifting along great circles.

    Each blob starts at a random direction with altitude within
    ``max_altitude_deg`` and moves at ``drift_speed_deg_s`` about a random
    axis perpendicular to its start direction.
    """
    rng = np.random.default_rng(spec.seed)
    k = spec.blob_count
    az = rng.uniform(0.0, 360.0, k)
    s = np.sin(np.deg2rad(spec.max_altitude_deg))
    alt = np.degrees(np.arcsin(rng.uniform(-s, s, k)))
    start = from_spherical(SphericalAngles(az, alt))
    heading = rng.uniform(0.0, 2 * np.pi, k)
    weights = rng.uniform(0.5, 1.0, k)
    # axis perpendicular to the start direction, at a random heading
    up = np.array([0.0, 0.0, 1.0])
    east = np.cross(up, start)
    east /= np.linalg.norm(east, axis=1, keepdims=True)
    north = np.cross(start, east)
    axes = np.cos(heading)[:, None] * north - np.sin(heading)[:, None] * east

    n = int(round(spec.duration_s * 1000.0 / spec.frame_interval_ms))
    n = max(n, 1)
    frames = np.empty((n, spec.height, spec.width))
    for i in range(n):
        t = i * spec.frame_interval_ms / 1000.0
        centers = np.array([
            rotate_vector(make_quaternion(axes[j], spec.drift_speed_deg_s * t), start[j])
            for j in range(k)
        ])
        frames[i] = render_blobs(centers, spec.blob_sigma_deg, spec.width, spec.height, weights)
    vid = video_id if video_id is not None else f"synth-{spec.seed}"
    return VideoFingerprint(vid, frames, spec.frame_interval_ms)


@dataclass(frozen=True)
class AlignedPairs:
    """Result of :func:`align_pairs`: kept samples, their map indices, and the drop count."""

    t_ms: np.ndarray
    vectors: np.ndarray
    map_index: np.ndarray
    dropped: int

    def __len__(self) -> int:
        return len(self.t_ms)

    def pairs(self, fp: VideoFingerprint) -> list[tuple[tuple[int, np.ndarray], SaliencyMap]]:
        return [
            ((int(t), v), SaliencyMap(fp.frames[i], int(i) * fp.frame_interval_ms))
            for t, v, i in zip(self.t_ms, self.vectors, self.map_index)
        ]


def align_pairs(samples, fp: VideoFingerprint, tau_s: float | None = None) -> AlignedPairs:
    """Pair each sample with the fingerprint map of nearest timestamp.

    Samples at or past the fingerprint duration are dropped. ``tau_s`` is
    accepted for interface symmetry; the grid is carried by the samples.
    """
    if len(fp) == 0:
        raise NoOverlapError("fingerprint has no maps")
    if len(samples) == 0:
        raise NoOverlapError("no samples to align")
    t = np.array([s[0] for s in samples], dtype=np.int64)
    v = np.array([np.asarray(s[1], dtype=float) for s in samples]).reshape(-1, 3)
    keep = (t >= 0) & (t < fp.duration_ms)
    if not keep.any():
        raise NoOverlapError("no sample falls within the fingerprint duration")
    idx = nearest_index(fp.timestamps, t[keep])
    return AlignedPairs(t[keep], v[keep], idx, int((~keep).sum()))


# -- on-disk format ---------------------------------------------------------

def _write_pgm16(path: Path, values: np.ndarray) -> None:
    H, W = values.shape
    header = f"P5\n{W} {H}\n{PGM_MAX}\n".encode("ascii")
    path.write_bytes(header + values.astype(">u2").tobytes())


def _read_pgm16(path: Path) -> np.ndarray:
    data = path.read_bytes()
    tokens = []
    pos = 0
    # header: magic, width, height, maxval, then exactly one whitespace byte
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5)")
    try:
        W, H, maxval = (int(x) for x in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: bad PGM header") from None
    if maxval != PGM_MAX:
        raise FormatError(f"{path}: expected 16-bit PGM with maxval {PGM_MAX}")
    body = data[pos:]
    if len(body) != 2 * W * H:
        raise FormatError(f"{path}: pixel data has {len(body)} bytes, expected {2 * W * H}")
    return np.frombuffer(body, dtype=">u2").reshape(H, W).astype(np.int64)


def _frame_name(i: int) -> str:
    return f"frame_{i:06d}.pgm"


def save_fingerprint(fp: VideoFingerprint, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    scale_max = float(fp.frames.max())
    if scale_max <= 0:
        raise DegenerateSaliencyError(f"{fp.video_id}: fingerprint is all zero")
    manifest = {
        "video_id": fp.video_id,
        "width": fp.width,
        "height": fp.height,
        "frame_interval_ms": fp.frame_interval_ms,
        "frame_count": len(fp),
        "scale_max": scale_max,
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    q = np.rint(PGM_MAX * fp.frames / scale_max)
    for i, frame in enumerate(q):
        _write_pgm16(d / _frame_name(i), frame)
    return d


def load_fingerprint(directory) -> VideoFingerprint:
    d = Path(directory)
    try:
        m = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
        vid, W, H = m["video_id"], int(m["width"]), int(m["height"])
        interval, count, scale_max = int(m["frame_interval_ms"]), int(m["frame_count"]), float(m["scale_max"])
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"{d}: bad fingerprint manifest ({exc})") from None
    present = sorted(p.name for p in d.glob("frame_*.pgm"))
    if present != [_frame_name(i) for i in range(count)]:
        raise FormatError(f"{d}: expected {count} frames, found {len(present)}")
    frames = np.empty((count, H, W))
    for i in range(count):
        raw = _read_pgm16(d / _frame_name(i))
        if raw.shape != (H, W):
            raise FormatError(f"{d / _frame_name(i)}: size {raw.shape[::-1]} != {W}x{H}")
        # keep the peak exactly at scale_max so a re-save reproduces the manifest
        frames[i] = np.where(raw == PGM_MAX, scale_max, raw / PGM_MAX * scale_max)
    return VideoFingerprint(vid, frames, interval)


def save_library(lib: FingerprintLibrary, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dirs = []
    for fp in lib:
        if not _SAFE_ID.match(fp.video_id):
            raise InvalidArgumentError(f"video_id {fp.video_id!r} is not a safe directory name")
        save_fingerprint(fp, d / fp.video_id)
        dirs.append(fp.video_id)
    (d / "library.json").write_text(json.dumps({"fingerprints": dirs}, indent=2) + "\n",
                                    encoding="utf-8")
    return d


def load_library(directory) -> FingerprintLibrary:
    d = Path(directory)
    try:
        listing = json.loads((d / "library.json").read_text(encoding="utf-8"))["fingerprints"]
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"{d}: bad library.json ({exc})") from None
    fps = [load_fingerprint(d / name) for name in listing]
    shapes = {(fp.width, fp.height) for fp in fps}
    if len(shapes) > 1:
        raise FormatError(f"{d}: fingerprints disagree on map size {sorted(shapes)}")
    return FingerprintLibrary(tuple(fps))
