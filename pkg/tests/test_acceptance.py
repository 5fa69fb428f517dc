"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the PASS/FAIL lines
go straight to the terminal even when output capture is on.
"""

import io
import json

import numpy as np
import pytest

from headprint.fingerprint import VideoFingerprint, load_fingerprint, save_fingerprint
from headprint.geometry import (
    EquirectPoint,
    Frame,
    SphericalAngles,
    camera_to_vr,
    from_spherical,
    equirect_project,
    make_quaternion,
    offset_angle,
    rotate_vector,
    to_spherical,
    vr_to_camera,
    wrap_deg,
)
from headprint.harness import ExperimentConfig, emit_report, run_experiment
from headprint.matcher import bce_grad, bce_loss
from headprint.openworld import bdr
from headprint.simulate import (
    CALIBRATED_PITCH_SIGMA_DEG,
    CALIBRATED_YAW_SIGMA_DEG,
    DriftModel,
    NoiseSpec,
    anchor_residual,
    fit_yaw_drift,
    inject_estimation_noise,
    inject_yaw_drift,
    remove_yaw_drift,
)
from headprint.trace import HeadMovementTrace, load_trace, save_trace, trace_mae


@pytest.fixture
def verdict(capsys):
    def emit(n, name, ok, detail=""):
        with capsys.disabled():
            print(f"\nCRITERION {n} [{name}]: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        return ok
    return emit


def unit_rows(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# -- 1 ----------------------------------------------------------------------

def test_c1_bdr_reproduction(verdict):
    a = bdr(0.96, 0.000068, 0.001)
    b = bdr(0.96, 0.000068, 0.00025)
    ok = abs(a - 0.93) <= 0.005 and abs(b - 0.78) <= 0.005
    assert verdict(1, "BDR reproduction", ok, f"bdr={a:.4f}, {b:.4f}")


# -- 2 ----------------------------------------------------------------------

def test_c2_geometry_suite(verdict):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        axis, v = unit_rows(rng, 2)
        deg = rng.uniform(-360, 360)
        out = rotate_vector(make_quaternion(axis, deg), v)
        worst = max(worst, abs(np.linalg.norm(out) - 1.0))
        a1 = rng.uniform(-180, 180)
        worst = max(worst, np.abs(vr_to_camera(camera_to_vr(v, a1), a1) - v).max())
        aligned = camera_to_vr(v, offset_angle(v))
        worst = max(worst, abs(aligned[1]))
        assert aligned[0] > 0
    spots = (equirect_project(SphericalAngles(0, 0), 400, 200) == EquirectPoint(0.0, 100.0)
             and equirect_project(SphericalAngles(180, 90), 400, 200) == EquirectPoint(200.0, 0.0))
    ok = worst < 1e-9 and spots
    assert verdict(2, "geometry suite", ok, f"max error {worst:.2e}, spot values exact={spots}")


# -- 3 ----------------------------------------------------------------------

def drift_run(seed=3) -> tuple[float, str]:
    """Worst yaw residual over 100 drift instances, plus the per-instance report."""
    rng = np.random.default_rng(seed)
    n = 600
    buf = io.StringIO()
    buf.write("instance,theta,theta0,max_yaw_residual_deg\n")
    worst = 0.0
    for i in range(100):
        theta, theta0 = rng.uniform(-1, 1), rng.uniform(-180, 180)
        az, alt = rng.uniform(0, 360, n), rng.uniform(-70, 70, n)
        truth = HeadMovementTrace(np.arange(n) * 100, from_spherical(SphericalAngles(az, alt)),
                                  Frame.VR)
        drifted = inject_yaw_drift(truth, DriftModel(theta, theta0))
        fitted = fit_yaw_drift(anchor_residual(drifted, truth, 0),
                               anchor_residual(drifted, truth, int(truth.t_ms[-1])))
        back = remove_yaw_drift(drifted, fitted)
        res = np.abs(wrap_deg(to_spherical(back.vectors).azimuth_deg - az)).max()
        worst = max(worst, res)
        buf.write(f"{i},{theta!r},{theta0!r},{res!r}\n")
    return worst, buf.getvalue()


def test_c3_drift_exactness(verdict):
    worst, _ = drift_run()
    assert verdict(3, "drift exactness", worst < 1e-6, f"max residual {worst:.2e} deg")


# -- 4 ----------------------------------------------------------------------

def noise_run(seed=4) -> tuple[float, float, str]:
    rng = np.random.default_rng(seed)
    n = 100_000
    az, alt = rng.uniform(0, 360, n), rng.uniform(-30, 30, n)
    truth = HeadMovementTrace(np.arange(n) * 10, from_spherical(SphericalAngles(az, alt)),
                              Frame.VR)
    est = inject_estimation_noise(truth, NoiseSpec(11.03, 5.39, seed=seed))
    r = trace_mae(est, truth)
    report = json.dumps({"samples": n, "yaw_mae_deg": r.yaw_mae_deg,
                         "pitch_mae_deg": r.pitch_mae_deg}, sort_keys=True) + "\n"
    return r.yaw_mae_deg, r.pitch_mae_deg, report


def test_c4_noise_calibration(verdict):
    yaw, pitch, _ = noise_run()
    ok = abs(yaw - 8.8) <= 0.25 and abs(pitch - 4.3) <= 0.25
    assert verdict(4, "noise calibration", ok, f"yaw MAE {yaw:.3f}, pitch MAE {pitch:.3f}")


# -- 5 ----------------------------------------------------------------------

def test_c5_gradient_check(verdict):
    rng = np.random.default_rng(5)
    z = rng.normal(size=500)
    y = (rng.random(500) < 0.2).astype(float)
    h = 1e-5
    worst = 0.0
    for a, b in rng.uniform(-3, 3, size=(20, 2)):
        g = bce_grad((a, b), z, y)
        fd = np.array([
            (bce_loss((a + h, b), z, y) - bce_loss((a - h, b), z, y)) / (2 * h),
            (bce_loss((a, b + h), z, y) - bce_loss((a, b - h), z, y)) / (2 * h),
        ])
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-12))))
    assert verdict(5, "gradient check", worst <= 1e-5, f"max relative error {worst:.2e}")


# -- 6 / 7 ------------------------------------------------------------------

def calibrated_config(seed, T=(60.0,), tau=(0.8,)) -> ExperimentConfig:
    return ExperimentConfig(
        library_size=50,
        tested_videos=10,
        victims_per_video=10,
        noise=NoiseSpec(CALIBRATED_YAW_SIGMA_DEG, CALIBRATED_PITCH_SIGMA_DEG, drift_rate_deg_s=0.05),
        T_list_s=T,
        tau_list_s=tau,
        master_seed=seed,
    )


@pytest.mark.slow
def test_c6_end_to_end_identification(verdict):
    top1, top3 = [], []
    for seed in range(3):
        rep = run_experiment(calibrated_config(seed))
        top1.append(rep.accuracy(1))
        top3.append(rep.accuracy(3))
    m1, m3 = float(np.mean(top1)), float(np.mean(top3))
    ok = m1 >= 0.90 and m3 >= 0.97
    assert verdict(6, "end-to-end identification", ok,
                   f"mean top-1 {m1:.3f} {top1}, mean top-3 {m3:.3f}")


@pytest.mark.slow
def test_c7_trend_reproduction(verdict):
    by_cell = {}
    for seed in range(5):
        rep = run_experiment(calibrated_config(seed, T=(10.0, 60.0), tau=(0.8, 4.8)))
        for c in rep.cells():
            by_cell.setdefault((c["T_s"], c["tau_s"]), []).append(c["top1"])
    mean = {k: float(np.mean(v)) for k, v in by_cell.items()}
    t_gain = mean[(60.0, 0.8)] - mean[(10.0, 0.8)]
    tau_ok = mean[(60.0, 0.8)] >= mean[(60.0, 4.8)]
    ok = t_gain >= 0.05 and tau_ok
    assert verdict(7, "trend reproduction", ok,
                   f"top-1 T=10 {mean[(10.0, 0.8)]:.3f} -> T=60 {mean[(60.0, 0.8)]:.3f}; "
                   f"tau=4.8 at T=60 {mean[(60.0, 4.8)]:.3f}")


# -- 8 ----------------------------------------------------------------------

@pytest.mark.slow
def test_c8_determinism(verdict, tmp_path):
    same = []
    for run in (lambda: drift_run()[1], lambda: noise_run()[2]):
        same.append(run().encode() == run().encode())
    dirs = []
    for attempt in ("a", "b"):
        d = tmp_path / attempt
        emit_report(run_experiment(calibrated_config(0)), d)
        dirs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    same.append(dirs[0] == dirs[1])
    assert verdict(8, "determinism", all(same), f"drift/noise/experiment identical={same}")


# -- 9 ----------------------------------------------------------------------

def test_c9_format_round_trips(verdict, tmp_path):
    rng = np.random.default_rng(9)
    trace_ok = pgm_ok = 0
    for i in range(20):
        n = int(rng.integers(1, 300))
        t = np.cumsum(rng.integers(1, 200, n)) - 1
        frame = Frame.VR if i % 2 else Frame.CAMERA
        tr = HeadMovementTrace(t, unit_rows(rng, n), frame, f"s{i}")
        save_trace(tr, tmp_path / f"a{i}.csv")
        save_trace(load_trace(tmp_path / f"a{i}.csv"), tmp_path / f"b{i}.csv")
        trace_ok += (tmp_path / f"a{i}.csv").read_bytes() == (tmp_path / f"b{i}.csv").read_bytes()

        frames = rng.random((int(rng.integers(1, 5)), int(rng.integers(1, 24)),
                             int(rng.integers(1, 48)))) * rng.uniform(1e-3, 1e3)
        fp = VideoFingerprint(f"vid{i}", frames, int(rng.integers(1, 1000)))
        a = save_fingerprint(fp, tmp_path / f"fa{i}")
        b = save_fingerprint(load_fingerprint(a), tmp_path / f"fb{i}")
        pgm_ok += all((a / p.name).read_bytes() == (b / p.name).read_bytes()
                      for p in a.iterdir())
    ok = trace_ok == 20 and pgm_ok == 20
    assert verdict(9, "format round-trips", ok, f"trace {trace_ok}/20, fingerprint {pgm_ok}/20")
