"""Victim trace synthesis, estimation noise, yaw drift and log synchronization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .fingerprint import VideoFingerprint, cell_directions, normalize_cells
from .geometry import (
    Frame,
    SphericalAngles,
    from_spherical,
    rotate_towards,
    to_spherical,
    wrap_deg,
    yaw_rotate,
)
from .trace import HeadMovementTrace, nearest_index


@dataclass(frozen=True)
class VictimParams:
    switch_prob_per_s: float = 0.3
    max_speed_deg_s: float = 60.0
    jitter_sigma_deg: float = 2.0
    sample_period_ms: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.switch_prob_per_s <= 1.0:
            raise InvalidArgumentError("switch_prob_per_s must lie in [0, 1]")
        if self.max_speed_deg_s <= 0:
            raise InvalidArgumentError("max_speed_deg_s must be positive")
        if self.jitter_sigma_deg < 0:
            raise InvalidArgumentError("jitter_sigma_deg must be nonnegative")
        if self.sample_period_ms < 1:
            raise InvalidArgumentError("sample_period_ms must be at least 1")


@dataclass(frozen=True)
class DriftModel:
    """Yaw drift ``YD(t) = theta * t + theta0`` in degrees, ``t`` in seconds."""

    theta_deg_per_s: float = 0.0
    theta0_deg: float = 0.0

    def __call__(self, t_s):
        return self.theta_deg_per_s * np.asarray(t_s, dtype=float) + self.theta0_deg

    def negated(self) -> "DriftModel":
        return DriftModel(-self.theta_deg_per_s, -self.theta0_deg)


@dataclass(frozen=True)
class NoiseSpec:
    yaw_sigma_deg: float = 0.0
    pitch_sigma_deg: float = 0.0
    drift_rate_deg_s: float = 0.0
    drift_offset_deg: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.yaw_sigma_deg < 0 or self.pitch_sigma_deg < 0:
            raise InvalidArgumentError("noise sigmas must be nonnegative")

    @property
    def drift(self) -> DriftModel:
        return DriftModel(self.drift_rate_deg_s, self.drift_offset_deg)


# Sigmas whose half-normal means equal the reported 8.8 / 4.3 degree MAE.
CALIBRATED_YAW_SIGMA_DEG = 8.8 / np.sqrt(2.0 / np.pi)
CALIBRATED_PITCH_SIGMA_DEG = 4.3 / np.sqrt(2.0 / np.pi)


def _jitter(v: np.ndarray, sigma_deg: float, rng: np.random.Generator) -> np.ndarray:
    """Isotropic angular jitter: tangent-plane Gaussian, mapped back by the exponential map."""
    a = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(v, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(v, e1)
    d = np.deg2rad(sigma_deg) * rng.standard_normal(2)
    ang = np.hypot(d[0], d[1])
    if ang == 0.0:
        return v
    direction = (d[0] * e1 + d[1] * e2) / ang
    return np.cos(ang) * v + np.sin(ang) * direction


def simulate_victim(fp: VideoFingerprint, p: VictimParams,
                    session_id: str = "") -> HeadMovementTrace:
    """First-order pursuit of saliency-sampled attention targets.

    The head starts on the frame-0 saliency peak. Each step the target is
    redrawn from the current normalized map with probability
    ``1 - (1 - switch_prob_per_s) ** dt``; the head then turns toward it
    by at most ``max_speed_deg_s * dt``. Jitter perturbs the reported
    sample, not the underlying head state.
    """
    rng = np.random.default_rng(p.seed)
    norm = normalize_cells(fp.frames)
    n_cells = fp.width * fp.height
    dirs = cell_directions(fp.width, fp.height).reshape(-1, 3)
    t = np.arange(0, fp.duration_ms, p.sample_period_ms, dtype=np.int64)
    frame_idx = nearest_index(fp.timestamps, t)
    dt = p.sample_period_ms / 1000.0
    p_switch = 1.0 - (1.0 - p.switch_prob_per_s) ** dt
    step = p.max_speed_deg_s * dt

    head = dirs[int(np.argmax(fp.frames[0]))].copy()
    target = head.copy()
    out = np.empty((len(t), 3))
    for i, fi in enumerate(frame_idx):
        if i > 0:
            if rng.random() < p_switch:
                target = dirs[rng.choice(n_cells, p=norm[fi].ravel())]
            head = rotate_towards(head, target, step)
            head /= np.linalg.norm(head)
        out[i] = _jitter(head, p.jitter_sigma_deg, rng) if p.jitter_sigma_deg > 0 else head
    return HeadMovementTrace(t, out, Frame.VR, session_id)


def inject_estimation_noise(trace: HeadMovementTrace, spec: NoiseSpec) -> HeadMovementTrace:
    if spec.yaw_sigma_deg == 0 and spec.pitch_sigma_deg == 0:
        return trace
    rng = np.random.default_rng(spec.seed)
    n = len(trace)
    d_yaw = spec.yaw_sigma_deg * rng.standard_normal(n)
    d_pitch = spec.pitch_sigma_deg * rng.standard_normal(n)
    ang = to_spherical(trace.vectors)
    az = ang.azimuth_deg + d_yaw
    alt = np.clip(ang.altitude_deg + d_pitch, -90.0, 90.0)
    v = from_spherical(SphericalAngles(az, alt))
    return trace.replace(vectors=v / np.linalg.norm(v, axis=1, keepdims=True))


def inject_yaw_drift(trace: HeadMovementTrace, model: DriftModel) -> HeadMovementTrace:
    angles = model(trace.t_ms / 1000.0)
    return trace.replace(vectors=yaw_rotate(trace.vectors, angles))


def remove_yaw_drift(trace: HeadMovementTrace, model: DriftModel) -> HeadMovementTrace:
    return inject_yaw_drift(trace, model.negated())


def fit_yaw_drift(anchor_a: tuple[float, float], anchor_b: tuple[float, float]) -> DriftModel:
    """Two-point linear drift fit from ``(t_s, yaw_residual_deg)`` anchors.

    Each anchor's yaw is the observed yaw minus the known true yaw at that
    moment. The returned model is expressed in absolute time, so it
    reproduces both anchors exactly.
    """
    (ta, ya), (tb, yb) = anchor_a, anchor_b
    if tb == ta:
        raise InvalidArgumentError("drift anchors must have distinct times")
    theta = wrap_deg(yb - ya) / (tb - ta)
    return DriftModel(float(theta), float(wrap_deg(ya - theta * ta)))


def anchor_residual(observed: HeadMovementTrace, truth: HeadMovementTrace,
                    t_ms: int) -> tuple[float, float]:
    """Anchor ``(t_s, yaw residual)`` at the sample of ``observed`` nearest ``t_ms``."""
    i = int(nearest_index(observed.t_ms, np.array([t_ms]))[0])
    a = to_spherical(observed.vectors[i]).azimuth_deg
    b = to_spherical(truth.vectors[i]).azimuth_deg
    return observed.t_ms[i] / 1000.0, wrap_deg(a - b)


def sync_offset(key_frame_time_ms: int, key_log_time_ms: int) -> int:
    return int(key_frame_time_ms) - int(key_log_time_ms)


def apply_sync(log_t_ms, offset_ms: int) -> np.ndarray:
    return np.asarray(log_t_ms, dtype=np.int64) + offset_ms
