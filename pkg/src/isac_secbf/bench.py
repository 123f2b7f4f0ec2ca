"""Experiment harness: per-method dispatch, Monte Carlo sweeps with
deterministic seeding, CSV emission, and the sensing-beam count experiment.

CSV column order is fixed (see RESULT_COLUMNS); per-AE quantities are packed
into semicolon-joined list columns so the schema is sweep-invariant.  Wall
times are kept off the CSVs so reruns with identical seeds are byte-identical.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import estimators, fp_digital, had, metrics
from .channel import ChannelSet, build_channels
from .scenario import ScenarioConfig, make_rng

__all__ = [
    "METHODS",
    "SweepSpec",
    "ResultRecord",
    "sense_and_reconstruct",
    "run_method",
    "run_sweep",
    "required_beams_experiment",
    "RESULT_COLUMNS",
]

METHODS = ("digital", "had", "decomposed_had", "comm_only", "perfect_csi")

SWEEPABLE = ("power_dbm", "k_users", "t_aes", "n_rf", "gamma_r_db", "injected_rmse_deg")

RESULT_COLUMNS = (
    "method",
    "param",
    "value",
    "trial",
    "seed",
    "status",
    "iterations",
    "secrecy_rate",
    "sum_rate",
    "ae_sinr_db",
    "scnr_db",
    "ae_sinr_db_all",
    "scnr_db_all",
)


@dataclass
class SweepSpec:
    base: ScenarioConfig
    param: str
    values: list
    trials: int
    methods: tuple = METHODS

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.param not in SWEEPABLE:
            raise ValueError(f"unknown sweep parameter {self.param!r}; choose from {SWEEPABLE}")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")


@dataclass
class ResultRecord:
    method: str
    param: str
    value: float
    trial: int
    seed: int
    status: str
    iterations: int
    secrecy_rate: float
    sum_rate: float
    ae_sinr_db: float            # worst over AEs and streams, vs true channels
    scnr_db: float               # worst over AEs, vs true channels
    ae_sinr_db_all: list
    scnr_db_all: list
    wall_time_s: float           # not written to CSV (determinism)

    def csv_row(self) -> list:
        return [
            self.method,
            self.param,
            _fmt(self.value),
            self.trial,
            self.seed,
            self.status,
            self.iterations,
            _fmt(self.secrecy_rate),
            _fmt(self.sum_rate),
            _fmt(self.ae_sinr_db),
            _fmt(self.scnr_db),
            ";".join(_fmt(x) for x in self.ae_sinr_db_all),
            ";".join(_fmt(x) for x in self.scnr_db_all),
        ]


def _fmt(x) -> str:
    if isinstance(x, float) and (math.isnan(x) or math.isinf(x)):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return f"{x:.12g}"


def _db(x: float) -> float:
    return 10.0 * math.log10(max(float(x), 1e-300))


# ---------------------------------------------------------------------------
# sensing-based channel reconstruction
# ---------------------------------------------------------------------------

def sense_and_reconstruct(
    channels: ChannelSet,
    config: ScenarioConfig,
    rng: np.random.Generator,
    injected_rmse_deg: float | None = None,
):
    """Design-side channel set with AE links rebuilt from estimated angles.

    The probing transmission uses the steering-vector initializer (coarse
    prior directions from the detection stage).  When injected_rmse_deg is
    given, MUSIC is bypassed and the true angles are perturbed by zero-mean
    Gaussian errors of that RMSE instead.  Distances are taken as known.
    """
    if config.t_aes == 0:
        return channels, float("nan")
    if injected_rmse_deg is not None:
        noise = rng.standard_normal(config.t_aes) * math.radians(injected_rmse_deg)
        angles = channels.truth_angles + noise
        est = estimators.AngleEstimate(
            angles=np.sort(angles),
            grid_deg=np.zeros(0),
            spectrum=np.zeros(0),
            rmse_deg=estimators.angle_rmse(angles, channels.truth_angles),
            shortfall=False,
        )
    else:
        w0, v0, _feas, _mu = fp_digital.init_beamformers(channels, config)
        pair = metrics.BeamformerPair(w_comm=w0, v_sense=v0)
        echoes = estimators.simulate_echoes(channels, pair, config, rng)
        est = estimators.music_estimate(echoes, config.t_aes)
        if est.shortfall:
            # fall back to the coarse prior for missing targets
            missing = config.t_aes - len(est.angles)
            padded = np.concatenate([est.angles, channels.truth_angles[:missing]])
            est = replace(est, angles=np.sort(padded), shortfall=True)
    h_aes = estimators.reconstruct_ae_channels(est, channels.truth_distances, config)
    h_rts = estimators.reconstruct_roundtrip_channels(est, channels.truth_distances, config)
    return channels.with_ae_channels(h_aes, h_rts), est.rmse_deg


# ---------------------------------------------------------------------------
# method dispatch
# ---------------------------------------------------------------------------

def run_method(
    method: str,
    channels_true: ChannelSet,
    config: ScenarioConfig,
    rng: np.random.Generator | None = None,
    injected_rmse_deg: float | None = None,
    param: str = "",
    value: float = float("nan"),
    trial: int = 0,
    seed: int = 0,
) -> ResultRecord:
    """Execute one method on one channel realization; score on true channels.

    Proposed methods design on sensing-reconstructed AE channels; the
    perfect-CSI baseline designs on the true ones with the SCNR rows removed;
    the communication-only baseline transmits no sensing beams and keeps only
    the SCNR (on W) and power constraints.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    rng = rng or make_rng(config.seed, f"method/{method}")
    start = time.perf_counter()
    status = "error"
    iterations = 0
    pair = None
    try:
        if method == "perfect_csi":
            sol = fp_digital.run(channels_true, config, scnr_constraints=False)
            pair, status, iterations = sol.pair, sol.status, sol.state.iteration
        else:
            design, _rmse = sense_and_reconstruct(channels_true, config, rng, injected_rmse_deg)
            if method == "digital":
                sol = fp_digital.run(design, config)
                pair, status, iterations = sol.pair, sol.status, sol.state.iteration
            elif method == "comm_only":
                cfg = config.with_updates(n_s=0)
                sol = fp_digital.run(design, cfg, ae_constraints=False)
                pair, status, iterations = sol.pair, sol.status, sol.state.iteration
            elif method == "had":
                sol = had.run_hybrid(design, config)
                pair, status, iterations = sol.pair, sol.status, sol.state.iteration
            elif method == "decomposed_had":
                sol = fp_digital.run(design, config)
                f_a, f_c, f_s, _res = had.decompose_fully_digital(
                    sol.state.w, sol.v, config.n_rf, config
                )
                pair = metrics.BeamformerPair(w_comm=f_a @ f_c, v_sense=f_a @ f_s)
                status = "decomposed" if sol.status == "converged" else sol.status
                iterations = sol.state.iteration
    except Exception:  # noqa: BLE001 - sweep must survive per-method failures
        status = "error"
    wall = time.perf_counter() - start

    if pair is None:
        return ResultRecord(
            method=method, param=param, value=value, trial=trial, seed=seed,
            status=status, iterations=iterations, secrecy_rate=float("nan"),
            sum_rate=float("nan"), ae_sinr_db=float("nan"), scnr_db=float("nan"),
            ae_sinr_db_all=[], scnr_db_all=[], wall_time_s=wall,
        )

    secrecy = metrics.sum_secrecy_rate(channels_true, pair, config.noise_comm, config.noise_eav)
    sum_rate = metrics.sum_rate(channels_true, pair, config.noise_comm)
    ae_all, scnr_all = [], []
    for t in range(config.t_aes):
        ae_all.append(_db(max(
            metrics.ae_sinr(channels_true, pair, t, k, config.noise_eav)
            for k in range(config.k_users)
        )))
        u = metrics.receive_beamformer(channels_true, pair, t, config)
        scnr_all.append(_db(metrics.sensing_scnr(channels_true, pair, u, config, t)))
    return ResultRecord(
        method=method, param=param, value=value, trial=trial, seed=seed,
        status=status, iterations=iterations, secrecy_rate=secrecy, sum_rate=sum_rate,
        ae_sinr_db=max(ae_all) if ae_all else float("nan"),
        scnr_db=min(scnr_all) if scnr_all else float("nan"),
        ae_sinr_db_all=ae_all, scnr_db_all=scnr_all, wall_time_s=wall,
    )


# ---------------------------------------------------------------------------
# sweep plumbing
# ---------------------------------------------------------------------------

def apply_sweep_value(base: ScenarioConfig, param: str, value) -> ScenarioConfig:
    """Scenario for one sweep point; geometry-linked counts are regenerated
    with the documented even-spacing rules."""
    if param == "power_dbm":
        return base.with_updates(power_budget=10.0 ** ((value - 30.0) / 10.0))
    if param == "gamma_r_db":
        return base.with_updates(gamma_r=10.0 ** (value / 10.0))
    if param == "n_rf":
        return base.with_updates(n_rf=int(value))
    if param == "k_users":
        k = int(value)
        dist = base.user_geometry[0][1] if base.user_geometry else 200.0
        angles = np.linspace(-60.0, 60.0, k) if k > 1 else np.array([0.0])
        geom = tuple((math.radians(a), dist) for a in angles)
        return base.with_updates(k_users=k, user_geometry=geom)
    if param == "t_aes":
        t = int(value)
        dist = base.ae_geometry[0][1] if base.ae_geometry else 100.0
        rcs0 = base.rcs[0] if base.rcs else 1.0
        angles = np.linspace(-40.0, 40.0, t) if t > 1 else np.array([0.0])
        geom = tuple((math.radians(a), dist) for a in angles)
        return base.with_updates(t_aes=t, ae_geometry=geom, rcs=tuple([rcs0] * t))
    if param == "injected_rmse_deg":
        return base
    raise ValueError(f"unknown sweep parameter {param!r}")


def run_sweep(spec: SweepSpec, out_dir) -> dict:
    """All (method x value x trial) records -> results.csv + summary.csv.

    Deterministic for a fixed base seed: every trial derives named random
    streams from (seed, trial), so reruns are byte-identical.
    """
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for value in spec.values:
        cfg = apply_sweep_value(spec.base, spec.param, value)
        injected = float(value) if spec.param == "injected_rmse_deg" else None
        for trial in range(spec.trials):
            trial_seed = spec.base.seed + trial
            ch_rng = make_rng(trial_seed, "channels")
            channels = build_channels(cfg, ch_rng)
            for method in spec.methods:
                rng = make_rng(trial_seed, f"est/{method}/{spec.param}/{_fmt(float(value))}")
                records.append(
                    run_method(
                        method, channels, cfg, rng=rng,
                        injected_rmse_deg=injected,
                        param=spec.param, value=float(value),
                        trial=trial, seed=trial_seed,
                    )
                )

    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for rec in records:
            writer.writerow(rec.csv_row())

    summary = summarize(records)
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "param", "value", "trials", "secrecy_mean", "secrecy_stderr",
                         "sum_rate_mean", "sum_rate_stderr"])
        for key in sorted(summary):
            row = summary[key]
            writer.writerow(
                [key[0], key[1], _fmt(key[2]), row["n"], _fmt(row["secrecy_mean"]),
                 _fmt(row["secrecy_stderr"]), _fmt(row["sum_rate_mean"]), _fmt(row["sum_rate_stderr"])]
            )
    return summary


def summarize(records) -> dict:
    cells = {}
    for rec in records:
        cells.setdefault((rec.method, rec.param, rec.value), []).append(rec)
    out = {}
    for key, recs in cells.items():
        sec = np.array([r.secrecy_rate for r in recs if not math.isnan(r.secrecy_rate)])
        sr = np.array([r.sum_rate for r in recs if not math.isnan(r.sum_rate)])
        n = len(sec)
        out[key] = {
            "n": n,
            "secrecy_mean": float(sec.mean()) if n else float("nan"),
            "secrecy_stderr": float(sec.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
            "sum_rate_mean": float(sr.mean()) if len(sr) else float("nan"),
            "sum_rate_stderr": float(sr.std(ddof=1) / math.sqrt(len(sr))) if len(sr) > 1 else 0.0,
        }
    return out


def required_beams_experiment(t_range, trials: int, config: ScenarioConfig) -> list:
    """Theoretical rank bound vs empirical post-reduction rank per AE count.

    Returns rows {t_aes, theoretical, empirical_max, trials}; the empirical
    value never exceeds the theoretical bound.
    """
    rows = []
    for t in t_range:
        cfg = apply_sweep_value(config, "t_aes", t)
        cfg = cfg.with_updates(n_s=max(t, 1))
        bound = fp_digital.worst_case_bound(t)
        worst = 0
        for trial in range(trials):
            trial_seed = cfg.seed + trial
            channels = build_channels(cfg, make_rng(trial_seed, f"beams/t{t}"))
            sol = fp_digital.run(channels, cfg)
            if sol.state.r_v is not None:
                rank = fp_digital._numeric_rank(sol.state.r_v)
                worst = max(worst, rank)
        rows.append({"t_aes": t, "theoretical": bound, "empirical_max": worst, "trials": trials})
    return rows
