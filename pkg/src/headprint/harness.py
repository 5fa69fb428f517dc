"""End-to-end attack experiments and their CSV/JSON reports.

Seed derivation: every random stream is seeded with
``derive_seed(master_seed, namespace, *indices)``, a ``numpy``
``SeedSequence`` keyed by ``(namespace, *indices)``. Streams are therefore
addressed by index rather than drawn in sequence, so adding victims or
videos never changes the draws of existing ones.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fingerprint import FingerprintLibrary, SynthSpec, VideoFingerprint, synth_fingerprint
from .matcher import (
    Calibrator,
    MatchConfig,
    fingerprint_density,
    fit_calibrator,
    identify_topk,
    score_samples,
)
from .simulate import (
    NoiseSpec,
    VictimParams,
    anchor_residual,
    fit_yaw_drift,
    inject_estimation_noise,
    inject_yaw_drift,
    remove_yaw_drift,
    simulate_victim,
)
from .trace import HeadMovementTrace, sample_at_interval, window

log = logging.getLogger(__name__)

NS_LIBRARY = 1
NS_CALIB_VICTIM = 2
NS_CALIB_NOISE = 3
NS_TEST_VICTIM = 4
NS_TEST_NOISE = 5


def derive_seed(master_seed: int, namespace: int, *indices: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(namespace), *map(int, indices)))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def video_id_for(index: int) -> str:
    return f"v{index:04d}"


@dataclass(frozen=True)
class ExperimentConfig:
    library_size: int = 50
    synth: SynthSpec = field(default_factory=SynthSpec)
    victim: VictimParams = field(default_factory=VictimParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    T_list_s: tuple[float, ...] = (60.0,)
    tau_list_s: tuple[float, ...] = (0.8,)
    victims_per_video: int = 10
    tested_videos: int | None = None
    calibration_victims_per_video: int = 1
    k_max: int = 3
    master_seed: int = 0
    output_dir: str | None = None
    smoothing_sigma_px: float | None = None
    t0_ms: int = 0
    calibration_lr: float = 0.1
    calibration_epochs: int = 500

    def __post_init__(self):
        object.__setattr__(self, "T_list_s", tuple(float(t) for t in self.T_list_s))
        object.__setattr__(self, "tau_list_s", tuple(float(t) for t in self.tau_list_s))
        problems = []
        if self.library_size < 1:
            problems.append("library_size must be >= 1")
        if not self.T_list_s or any(t <= 0 for t in self.T_list_s):
            problems.append("T_list_s must be a nonempty list of positive lengths")
        if not self.tau_list_s or any(t <= 0 for t in self.tau_list_s):
            problems.append("tau_list_s must be a nonempty list of positive intervals")
        if self.victims_per_video < 1:
            problems.append("victims_per_video must be >= 1")
        if self.calibration_victims_per_video < 1:
            problems.append("calibration_victims_per_video must be >= 1")
        if self.k_max < 1:
            problems.append("k_max must be >= 1")
        if self.tested_videos is not None and not 1 <= self.tested_videos <= self.library_size:
            problems.append("tested_videos must lie in [1, library_size]")
        if self.t0_ms < 0:
            problems.append("t0_ms must be >= 0")
        if max(self.T_list_s, default=0) * 1000 + self.t0_ms > self.synth.duration_s * 1000 + 1e-6:
            problems.append("t0_ms + max(T_list_s) exceeds the synthesized video duration")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def n_tested(self) -> int:
        return self.library_size if self.tested_videos is None else self.tested_videos

    def match_config(self, tau_s: float) -> MatchConfig:
        return MatchConfig(tau_s, self.smoothing_sigma_px, self.synth.width, self.synth.height)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            sub = {
                "synth": SynthSpec,
                "victim": VictimParams,
                "noise": NoiseSpec,
            }
            for key, typ in sub.items():
                if key in d:
                    d[key] = _build(typ, d[key], key)
            return _build(cls, d, "config")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


def _build(typ, d, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(typ)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    return typ(**d)


@dataclass(frozen=True)
class TrialRow:
    video_id: str
    victim: int
    victim_seed: int
    T_s: float
    tau_s: float
    rank_of_truth: int
    top_ids: tuple[str, ...]

    def hit(self, k: int) -> int:
        return int(self.rank_of_truth <= k)


@dataclass
class ExperimentReport:
    rows: list[TrialRow]
    k_max: int = 3
    calibrator: Calibrator | None = None
    meta: dict = field(default_factory=dict)

    def cells(self) -> list[dict]:
        """Aggregate top-k accuracy per ``(T, tau)`` cell, sorted by ``(T, tau)``."""
        groups: dict[tuple[float, float], list[TrialRow]] = {}
        for r in self.rows:
            groups.setdefault((r.T_s, r.tau_s), []).append(r)
        out = []
        for (T, tau) in sorted(groups):
            rs = groups[(T, tau)]
            cell = {"T_s": T, "tau_s": tau, "n": len(rs)}
            for k in range(1, self.k_max + 1):
                cell[f"top{k}"] = sum(r.hit(k) for r in rs) / len(rs)
            out.append(cell)
        return out

    def accuracy(self, k: int = 1, T_s: float | None = None, tau_s: float | None = None) -> float:
        rs = [r for r in self.rows
              if (T_s is None or r.T_s == T_s) and (tau_s is None or r.tau_s == tau_s)]
        return sum(r.hit(k) for r in rs) / len(rs) if rs else float("nan")


class Pipeline:
    """Library, densities and per-victim attack traces for one configuration."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.library = synth_library(cfg.synth, cfg.library_size, cfg.master_seed)
        sigma = cfg.match_config(cfg.tau_list_s[0]).sigma_px
        self.densities = {fp.video_id: fingerprint_density(fp, sigma) for fp in self.library}

    def attack_trace(self, fp: VideoFingerprint, victim_seed: int,
                     noise_seed: int) -> HeadMovementTrace:
        """Simulate, add estimation noise and drift, then remove drift fitted from anchors.

        Anchors sit at ``t0`` and ``t0 + max(T)`` and carry the exact drift,
        standing in for manually picked key frames.
        """
        cfg = self.cfg
        truth = simulate_victim(fp, replace(cfg.victim, seed=victim_seed), fp.video_id)
        noisy = inject_estimation_noise(truth, replace(cfg.noise, seed=noise_seed))
        hidden = cfg.noise.drift
        if hidden.theta_deg_per_s == 0 and hidden.theta0_deg == 0:
            return noisy
        drifted = inject_yaw_drift(noisy, hidden)
        t_end = cfg.t0_ms + int(round(1000 * max(cfg.T_list_s)))
        a = anchor_residual(drifted, noisy, cfg.t0_ms)
        b = anchor_residual(drifted, noisy, t_end)
        if a[0] == b[0]:
            return drifted
        return remove_yaw_drift(drifted, fit_yaw_drift(a, b))

    def calibrate(self) -> Calibrator:
        cfg = self.cfg
        tau = cfg.tau_list_s[0]
        mcfg = cfg.match_config(tau)
        T = max(cfg.T_list_s)
        scores, labels = [], []
        for i, fp in enumerate(self.library):
            for c in range(cfg.calibration_victims_per_video):
                tr = self.attack_trace(fp, derive_seed(cfg.master_seed, NS_CALIB_VICTIM, i, c),
                                       derive_seed(cfg.master_seed, NS_CALIB_NOISE, i, c))
                samples = sample_at_interval(window(tr, cfg.t0_ms, T), tau)
                for other in self.library:
                    s, _ = score_samples(samples, other, mcfg, self.densities[other.video_id])
                    scores.append(s)
                    labels.append(int(other.video_id == fp.video_id))
        if len(self.library) == 1:
            # one video gives no negatives; anchor the calibrator at identity
            return Calibrator(1.0, 0.0, float(np.mean(scores)), 1.0, mcfg.digest())
        return fit_calibrator(scores, labels, cfg.calibration_lr, cfg.calibration_epochs,
                              mcfg.digest())


def synth_library(spec: SynthSpec, size: int, master_seed: int) -> FingerprintLibrary:
    return FingerprintLibrary(tuple(
        synth_fingerprint(replace(spec, seed=derive_seed(master_seed, NS_LIBRARY, i)),
                          video_id_for(i))
        for i in range(size)
    ))


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    pipe = Pipeline(cfg)
    cal = pipe.calibrate()
    k = min(cfg.k_max, cfg.library_size)
    rows = []
    for i in range(cfg.n_tested):
        fp = pipe.library.entries[i]
        for j in range(cfg.victims_per_video):
            vseed = derive_seed(cfg.master_seed, NS_TEST_VICTIM, i, j)
            tr = pipe.attack_trace(fp, vseed, derive_seed(cfg.master_seed, NS_TEST_NOISE, i, j))
            for T in cfg.T_list_s:
                w = window(tr, cfg.t0_ms, T)
                for tau in cfg.tau_list_s:
                    ranking = identify_topk(w, pipe.library, cfg.match_config(tau), cal, k,
                                            pipe.densities)
                    rows.append(TrialRow(fp.video_id, j, vseed, T, tau,
                                         ranking.rank_of(fp.video_id),
                                         tuple(r.video_id for r in ranking.top)))
        log.info("video %s: %d victims done", fp.video_id, cfg.victims_per_video)
    meta = {"master_seed": cfg.master_seed, "library_size": cfg.library_size,
            "tested_videos": cfg.n_tested, "victims_per_video": cfg.victims_per_video}
    return ExperimentReport(rows, cfg.k_max, cal, meta)


# -- report files -----------------------------------------------------------

TRIALS_COMMENT = (
    "# trials.csv: one row per (video, victim, T, tau) attack trial.\n"
    "# video_id: true video; victim: victim index; victim_seed: derived seed;\n"
    "# T_s: recording length (s); tau_s: sampling interval (s);\n"
    "# rank_of_truth: 1-based rank of the true video; topK: 1 if rank_of_truth <= K;\n"
    "# pred1..predK: predicted video ids in rank order.\n"
)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _trials_csv(report: ExperimentReport) -> str:
    k = report.k_max
    buf = io.StringIO()
    buf.write(TRIALS_COMMENT)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["video_id", "victim", "victim_seed", "T_s", "tau_s", "rank_of_truth"]
               + [f"top{i}" for i in range(1, k + 1)] + [f"pred{i}" for i in range(1, k + 1)])
    for r in report.rows:
        preds = list(r.top_ids) + [""] * (k - len(r.top_ids))
        w.writerow([r.video_id, r.victim, r.victim_seed, _fmt(r.T_s), _fmt(r.tau_s),
                    r.rank_of_truth] + [r.hit(i) for i in range(1, k + 1)] + preds[:k])
    return buf.getvalue()


def _sweep_csv(report: ExperimentReport, axis: str) -> str:
    other = "tau_s" if axis == "T_s" else "T_s"
    cells = sorted(report.cells(), key=lambda c: (c[other], c[axis]))
    buf = io.StringIO()
    buf.write(f"# sweep over {axis} (grouped by {other}); topK: top-K accuracy in the cell.\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = [axis, other, "n"] + [f"top{i}" for i in range(1, report.k_max + 1)]
    w.writerow(cols)
    for c in cells:
        w.writerow([_fmt(c[col]) for col in cols])
    return buf.getvalue()


def emit_report(report: ExperimentReport, directory) -> list[Path]:
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        summary = {
            "meta": report.meta,
            "k_max": report.k_max,
            "trial_count": len(report.rows),
            "cells": report.cells(),
            "calibrator": asdict(report.calibrator) if report.calibrator else None,
        }
        files = {
            "trials.csv": _trials_csv(report),
            "summary.json": json.dumps(summary, indent=2, sort_keys=True) + "\n",
            "sweep_T.csv": _sweep_csv(report, "T_s"),
            "sweep_tau.csv": _sweep_csv(report, "tau_s"),
        }
        out = []
        for name, text in files.items():
            p = d / name
            p.write_bytes(text.encode("utf-8"))
            out.append(p)
        if report.calibrator is not None:
            p = d / "calibrator.json"
            report.calibrator.save(p)
            out.append(p)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report: {exc.strerror}",
                      exc.filename or str(d)) from None
    return out


def read_trials(path) -> list[dict]:
    """Parse ``trials.csv`` back into dicts, skipping comment lines."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
