"""Trace-to-fingerprint likelihood scoring, confidence calibration and top-k ranking."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import expit, log_expit

from .errors import DegenerateTrainingError, FormatError, InvalidArgumentError
from .fingerprint import FingerprintLibrary, VideoFingerprint, align_pairs, normalize_cells
from .geometry import equirect_project, to_spherical
from .trace import HeadMovementTrace, sample_at_interval

DEFAULT_YAW_MAE_DEG = 8.8


@dataclass(frozen=True)
class MatchConfig:
    tau_s: float = 0.8
    smoothing_sigma_px: float | None = None
    map_width: int = 64
    map_height: int = 32

    def __post_init__(self):
        if self.tau_s <= 0:
            raise InvalidArgumentError("tau_s must be positive")
        if self.map_width < 1 or self.map_height < 1:
            raise InvalidArgumentError("map size must be positive")
        if self.smoothing_sigma_px is not None and self.smoothing_sigma_px < 0:
            raise InvalidArgumentError("smoothing sigma must be nonnegative")

    @property
    def sigma_px(self) -> float:
        """Smoothing in pixels; defaults to the yaw MAE expressed on the grid."""
        if self.smoothing_sigma_px is None:
            return self.map_width * DEFAULT_YAW_MAE_DEG / 360.0
        return self.smoothing_sigma_px

    def digest(self) -> str:
        payload = json.dumps({**asdict(self), "sigma_px": self.sigma_px}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MatchResult:
    video_id: str
    raw_score: float
    confidence: float
    pairs_used: int


@dataclass(frozen=True)
class LabeledPair:
    trace: HeadMovementTrace
    fingerprint: VideoFingerprint
    label: int


@dataclass(frozen=True)
class Calibrator:
    """Affine map from standardized raw score to logit."""

    a: float = 1.0
    b: float = 0.0
    score_mean: float = 0.0
    score_std: float = 1.0
    config_hash: str = ""

    def logit(self, raw_score):
        z = (np.asarray(raw_score, dtype=float) - self.score_mean) / self.score_std
        return self.a * z + self.b

    def confidence(self, raw_score):
        return expit(self.logit(raw_score))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Calibrator":
        try:
            d = json.loads(text)
            return cls(float(d["a"]), float(d["b"]), float(d["score_mean"]),
                       float(d["score_std"]), str(d.get("config_hash", "")))
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"bad calibrator JSON ({exc})") from None

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Calibrator":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def smooth_density(cells: np.ndarray, sigma_px: float) -> np.ndarray:
    """Normalize, blur (periodic in w, reflected in h), renormalize; ``(..., H, W)``."""
    d = normalize_cells(cells)
    if sigma_px > 0:
        sig = (0.0,) * (d.ndim - 2) + (sigma_px, sigma_px)
        modes = ("nearest",) * (d.ndim - 2) + ("reflect", "wrap")
        d = gaussian_filter(d, sigma=sig, mode=modes)
        d = d / d.sum(axis=(-2, -1), keepdims=True)
    return d


def fingerprint_density(fp: VideoFingerprint, sigma_px: float) -> np.ndarray:
    return smooth_density(fp.frames, sigma_px)


def bilinear(density: np.ndarray, w, h) -> np.ndarray:
    """Bilinear lookup at pixel coordinates with cell centers at ``+0.5``.

    Wraps horizontally and clamps vertically. ``density`` is ``(n, H, W)``
    and ``w``, ``h`` are length-``n`` arrays (one point per map).
    """
    n, H, W = density.shape
    x = np.asarray(w, dtype=float) - 0.5
    y = np.clip(np.asarray(h, dtype=float) - 0.5, 0.0, H - 1)
    x0 = np.floor(x)
    y0 = np.minimum(np.floor(y), H - 2) if H > 1 else np.zeros_like(y)
    fx = x - x0
    fy = y - y0
    i0 = x0.astype(np.int64) % W
    i1 = (i0 + 1) % W
    j0 = y0.astype(np.int64)
    j1 = np.minimum(j0 + 1, H - 1)
    k = np.arange(n)
    top = (1 - fx) * density[k, j0, i0] + fx * density[k, j0, i1]
    bot = (1 - fx) * density[k, j1, i0] + fx * density[k, j1, i1]
    return (1 - fy) * top + fy * bot


def _check_grid(fp: VideoFingerprint, cfg: MatchConfig):
    if (fp.width, fp.height) != (cfg.map_width, cfg.map_height):
        raise InvalidArgumentError(
            f"{fp.video_id}: map size {fp.width}x{fp.height} != "
            f"configured {cfg.map_width}x{cfg.map_height}")


def score_samples(samples, fp: VideoFingerprint, cfg: MatchConfig,
                  density: np.ndarray | None = None) -> tuple[float, int]:
    """Mean log density of aligned samples; returns ``(score, pairs_used)``."""
    _check_grid(fp, cfg)
    aligned = align_pairs(samples, fp, cfg.tau_s)
    if density is None:
        density = fingerprint_density(fp, cfg.sigma_px)
    p = equirect_project(to_spherical(aligned.vectors), fp.width, fp.height)
    vals = bilinear(density[aligned.map_index], p.w, p.h)
    return float(np.mean(np.log(vals))), len(aligned)


def score_pair(trace: HeadMovementTrace, fp: VideoFingerprint, cfg: MatchConfig,
               density: np.ndarray | None = None) -> float:
    return score_samples(sample_at_interval(trace, cfg.tau_s), fp, cfg, density)[0]


def nll_loss(n: float, n_hat: int) -> float:
    """Literal single-term negative log-likelihood ``-n_hat * log(n)``."""
    if not 0.0 < n < 1.0:
        raise InvalidArgumentError("confidence must lie strictly inside (0, 1)")
    if n_hat not in (0, 1):
        raise InvalidArgumentError("label must be 0 or 1")
    return -n_hat * float(np.log(n)) if n_hat else 0.0


def bce_loss(params, z: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy of ``sigmoid(a z + b)`` against labels ``y``."""
    a, b = params
    s = a * z + b
    return float(-np.mean(y * log_expit(s) + (1 - y) * log_expit(-s)))


def bce_grad(params, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    a, b = params
    r = expit(a * z + b) - y
    return np.array([np.mean(r * z), np.mean(r)])


@dataclass
class TrainingLog:
    losses: list[float] = field(default_factory=list)


def fit_calibrator(scores, labels, lr: float = 0.1, epochs: int = 500,
                   config_hash: str = "", log: TrainingLog | None = None) -> Calibrator:
    """Gradient-descent logistic calibration on standardized scores, from ``(1, 0)``."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if len(s) != len(y) or len(s) == 0:
        raise InvalidArgumentError("scores and labels must be equal-length and nonempty")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DegenerateTrainingError("calibration needs both positive and negative pairs")
    mean = float(s.mean())
    std = float(s.std())
    if std == 0.0:
        std = 1.0
    z = (s - mean) / std
    params = np.array([1.0, 0.0])
    for _ in range(epochs):
        if log is not None:
            log.losses.append(bce_loss(params, z, y))
        params = params - lr * bce_grad(params, z, y)
    if log is not None:
        log.losses.append(bce_loss(params, z, y))
    return Calibrator(float(params[0]), float(params[1]), mean, std, config_hash)


def train_calibrator(pairs: list[LabeledPair], cfg: MatchConfig, lr: float = 0.1,
                     epochs: int = 500, log: TrainingLog | None = None) -> Calibrator:
    scores = [score_pair(p.trace, p.fingerprint, cfg) for p in pairs]
    labels = [p.label for p in pairs]
    return fit_calibrator(scores, labels, lr, epochs, cfg.digest(), log)


@dataclass(frozen=True)
class Ranking:
    """Full ranking; ``top`` holds the first ``k`` entries."""

    results: tuple[MatchResult, ...]
    k: int

    @property
    def top(self) -> list[MatchResult]:
        return list(self.results[: self.k])

    def rank_of(self, video_id: str) -> int:
        """1-based rank of ``video_id`` in the full ranking."""
        for i, r in enumerate(self.results, 1):
            if r.video_id == video_id:
                return i
        raise KeyError(video_id)


def identify_topk(trace: HeadMovementTrace, library: FingerprintLibrary, cfg: MatchConfig,
                  cal: Calibrator, k: int, densities: dict | None = None) -> Ranking:
    """Score the trace against every library entry and rank by confidence.

    Ordering uses the calibrated logit, which is monotone in the
    confidence but does not saturate; ties fall back to ascending video_id.
    ``densities`` optionally maps video_id to a precomputed
    :func:`fingerprint_density` array.
    """
    if len(library) == 0:
        raise InvalidArgumentError("library is empty")
    if not 1 <= k <= len(library):
        raise InvalidArgumentError(f"k must be in [1, {len(library)}]")
    samples = sample_at_interval(trace, cfg.tau_s)
    rows = []
    for fp in library:
        dens = densities.get(fp.video_id) if densities else None
        raw, used = score_samples(samples, fp, cfg, dens)
        rows.append((float(cal.logit(raw)), fp.video_id, raw, used))
    rows.sort(key=lambda r: (-r[0], r[1]))
    results = tuple(
        MatchResult(vid, raw, float(expit(logit)), used) for logit, vid, raw, used in rows
    )
    return Ranking(results, k)
