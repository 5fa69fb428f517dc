import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import equator_trace, random_trace
from headprint.errors import InvalidArgumentError
from headprint.fingerprint import (
    SynthSpec,
    VideoFingerprint,
    cell_directions,
    normalize_cells,
    render_blobs,
    synth_fingerprint,
)
from headprint.geometry import (
    SphericalAngles,
    angular_distance_deg,
    equirect_project,
    from_spherical,
    to_spherical,
    wrap_deg,
)
from headprint.simulate import (
    CALIBRATED_PITCH_SIGMA_DEG,
    CALIBRATED_YAW_SIGMA_DEG,
    DriftModel,
    NoiseSpec,
    VictimParams,
    apply_sync,
    fit_yaw_drift,
    inject_estimation_noise,
    inject_yaw_drift,
    remove_yaw_drift,
    simulate_victim,
    sync_offset,
)
from headprint.trace import nearest_index, trace_mae

SPEC = SynthSpec(duration_s=20.0)


def mean_saliency_at(trace, fp):
    """Mean normalized saliency of the cells the trace visits."""
    norm = normalize_cells(fp.frames)
    idx = nearest_index(fp.timestamps, trace.t_ms)
    p = equirect_project(to_spherical(trace.vectors), fp.width, fp.height)
    col = np.floor(p.w).astype(int) % fp.width
    row = np.minimum(np.floor(p.h).astype(int), fp.height - 1)
    return float(norm[idx, row, col].mean())


class TestVictim:
    def test_holds_static_blob(self):
        dirs = cell_directions(64, 32)
        center = dirs[12, 40]
        frame = render_blobs(center[None], 10.0, 64, 32)
        fp = VideoFingerprint("s", np.repeat(frame[None], 25, axis=0), 400)
        tr = simulate_victim(fp, VictimParams(switch_prob_per_s=0.0, jitter_sigma_deg=0.0))
        assert np.all(angular_distance_deg(tr.vectors, center) < 0.1)

    def test_pursuit_converges_after_travel_time(self):
        W, H = 8, 4
        dirs = cell_directions(W, H)
        a, b = dirs[1, 1], dirs[2, 5]
        frames = np.zeros((30, H, W))
        frames[0, 1, 1] = 1.0
        frames[1:, 2, 5] = 1.0
        fp = VideoFingerprint("p", frames, 1000)
        speed = 30.0
        tr = simulate_victim(fp, VictimParams(1.0, speed, 0.0, 100, seed=3))
        np.testing.assert_allclose(tr.vectors[0], a, atol=1e-12)
        travel_ms = angular_distance_deg(a, b) / speed * 1000
        after = tr.t_ms > 1000 + travel_ms + 100
        assert after.sum() > 50
        assert np.all(angular_distance_deg(tr.vectors[after], b) < 0.1)
        steps = angular_distance_deg(tr.vectors[1:], tr.vectors[:-1])
        assert steps.max() <= speed * 0.1 + 1e-9

    def test_deterministic(self):
        fp = synth_fingerprint(SPEC)
        a = simulate_victim(fp, VictimParams(seed=9))
        b = simulate_victim(fp, VictimParams(seed=9))
        assert np.array_equal(a.vectors, b.vectors) and np.array_equal(a.t_ms, b.t_ms)

    def test_first_sample_on_peak(self):
        fp = synth_fingerprint(SPEC)
        tr = simulate_victim(fp, VictimParams(jitter_sigma_deg=0.0))
        peak = cell_directions(fp.width, fp.height).reshape(-1, 3)[np.argmax(fp.frames[0])]
        np.testing.assert_allclose(tr.vectors[0], peak, atol=1e-12)
        assert len(tr) == 200 and tr.t_ms[-1] == 19900

    def test_saliency_attraction(self):
        uniform = 1.0 / (64 * 32)
        own, other = [], []
        for s in range(20):
            fp = synth_fingerprint(replace(SPEC, seed=s))
            fp2 = synth_fingerprint(replace(SPEC, seed=1000 + s))
            tr = simulate_victim(fp, VictimParams(seed=s))
            own.append(mean_saliency_at(tr, fp))
            other.append(mean_saliency_at(tr, fp2))
        assert np.mean(own) >= 3 * uniform
        assert np.mean(own) > np.mean(other)

    def test_bad_params(self):
        with pytest.raises(InvalidArgumentError):
            VictimParams(switch_prob_per_s=1.5)
        with pytest.raises(InvalidArgumentError):
            VictimParams(max_speed_deg_s=0)


class TestNoise:
    def test_zero_is_identity(self, minute_trace):
        out = inject_estimation_noise(minute_trace, NoiseSpec(seed=4))
        assert out.equals(minute_trace)

    def big_trace(self, n=100_000):
        rng = np.random.default_rng(77)
        az = rng.uniform(0, 360, n)
        alt = rng.uniform(-30, 30, n)
        return equator_trace(az, period_ms=10, altitudes=alt)

    def test_calibrated_sigmas(self):
        # half-normal mean oracle: E|X| = sigma * sqrt(2 / pi)
        assert CALIBRATED_YAW_SIGMA_DEG * math.sqrt(2 / math.pi) == pytest.approx(8.8)
        assert CALIBRATED_YAW_SIGMA_DEG == pytest.approx(11.03, abs=0.005)
        assert CALIBRATED_PITCH_SIGMA_DEG == pytest.approx(5.39, abs=0.005)

    def test_mae_calibration(self):
        gt = self.big_trace()
        est = inject_estimation_noise(gt, NoiseSpec(11.03, 5.39, seed=1))
        r = trace_mae(est, gt)
        assert r.yaw_mae_deg == pytest.approx(11.03 * math.sqrt(2 / math.pi), rel=0.025)
        assert r.pitch_mae_deg == pytest.approx(5.39 * math.sqrt(2 / math.pi), rel=0.025)
        assert r.yaw_mae_deg == pytest.approx(8.8, abs=0.2)
        assert r.pitch_mae_deg == pytest.approx(4.3, abs=0.2)

    def test_altitude_clamped(self):
        gt = equator_trace(np.zeros(1000), altitudes=np.full(1000, 85.0))
        est = inject_estimation_noise(gt, NoiseSpec(0.0, 30.0, seed=2))
        alt = to_spherical(est.vectors).altitude_deg
        assert alt.max() <= 90.0 and np.any(alt > 89.999)
        np.testing.assert_allclose(np.linalg.norm(est.vectors, axis=1), 1.0, atol=1e-12)

    def test_deterministic(self, minute_trace):
        spec = NoiseSpec(5, 5, seed=8)
        a = inject_estimation_noise(minute_trace, spec)
        b = inject_estimation_noise(minute_trace, spec)
        assert np.array_equal(a.vectors, b.vectors)


class TestDrift:
    def test_zero_identity(self, minute_trace):
        assert inject_yaw_drift(minute_trace, DriftModel()).equals(minute_trace, atol=1e-15)

    def test_constant_offset(self):
        az = np.linspace(0, 300, 40)
        out = inject_yaw_drift(equator_trace(az), DriftModel(0.0, 90.0))
        np.testing.assert_allclose(to_spherical(out.vectors).azimuth_deg, np.mod(az + 90, 360),
                                   atol=1e-9)

    def test_linear_rate(self):
        tr = equator_trace(np.zeros(601), period_ms=100)
        out = inject_yaw_drift(tr, DriftModel(0.1, 0.0))
        assert to_spherical(out.vectors[-1]).azimuth_deg == pytest.approx(6.0, abs=1e-9)

    def test_fit_two_points(self):
        m = fit_yaw_drift((0.0, 0.0), (60.0, 6.0))
        assert m.theta_deg_per_s == pytest.approx(0.1) and m.theta0_deg == 0.0

    def test_fit_equal_yaws(self):
        assert fit_yaw_drift((3.0, 17.0), (40.0, 17.0)).theta_deg_per_s == 0.0

    def test_fit_equal_times(self):
        with pytest.raises(InvalidArgumentError):
            fit_yaw_drift((5.0, 1.0), (5.0, 2.0))

    def test_fit_wraps(self):
        m = fit_yaw_drift((0.0, 179.0), (10.0, -179.0))
        assert m.theta_deg_per_s == pytest.approx(0.2)

    def test_fit_round_trip(self, rng):
        for _ in range(50):
            theta, theta0 = rng.uniform(-1, 1), rng.uniform(-180, 180)
            ta, tb = sorted(rng.uniform(0, 60, 2))
            hidden = DriftModel(theta, theta0)
            m = fit_yaw_drift((ta, wrap_deg(hidden(ta))), (tb, wrap_deg(hidden(tb))))
            assert m.theta_deg_per_s == pytest.approx(theta, abs=1e-9)
            assert wrap_deg(m.theta0_deg - theta0) == pytest.approx(0.0, abs=1e-9)

    def test_remove_inverts_inject(self, minute_trace):
        m = DriftModel(0.37, -120.0)
        back = remove_yaw_drift(inject_yaw_drift(minute_trace, m), m)
        np.testing.assert_allclose(back.vectors, minute_trace.vectors, atol=1e-9)

    def test_remove_with_fitted_model(self, minute_trace):
        hidden = DriftModel(-0.42, 33.0)
        drifted = inject_yaw_drift(minute_trace, hidden)
        fitted = fit_yaw_drift((0.0, wrap_deg(hidden(0.0))), (59.9, wrap_deg(hidden(59.9))))
        back = remove_yaw_drift(drifted, fitted)
        r = trace_mae(back, minute_trace)
        assert r.yaw_mae_deg < 1e-6


class TestSync:
    def test_values(self):
        assert sync_offset(1234, 1234) == 0
        assert sync_offset(5000, 3000) == 2000

    def test_alignment(self):
        log = np.array([100, 2000, 3000, 4200])
        off = sync_offset(5000, 3000)
        assert apply_sync(log, off)[2] == 5000
