"""Experiment orchestration: wire the modules together and emit CSV data.

Every runner takes a resolved ``ScenarioConfig``, returns in-memory results
and, when ``out`` is given, writes CSV files whose ``#`` header records the
config hash, seed, cutoff convention and pole count. Noise streams derive
from ``run.seed`` through ``numpy.random.SeedSequence`` spawn keys, so a
point's noise depends only on its index, never on scheduling.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import bisect
from scipy.signal import find_peaks

from . import __version__
from .atoms import at_splitting, min_detectable_at_field
from .calibration import CellFactorRegressor, combine_uncertainty, load_calibration_csv
from .chain import ChainSetup, averaged_reading, lockin_reading
from .config import ScenarioConfig
from .exceptions import ConfigurationError, NumericalError
from .fields import TonePair, synthesize_envelope_trace
from .linkbudget import (chain_output_dbm, dbm_to_watts, e_cell, e_far_field,
                         power_for_e_cell, watts_to_dbm)
from .lockin import cutoff_frequency, noise_floor, rejection_db
from .output import SweepResult, write_csv
from .transducer import eit_spectrum, photodiode_trace

log = logging.getLogger(__name__)

__all__ = [
    "run_spectrum",
    "run_if_trace",
    "run_weak_field_sweep",
    "run_isolation_sweep",
    "run_linkbudget",
    "run_calibrate",
    "calibrate_noise",
    "IsolationResult",
    "threshold_crossing",
]

_FLOOR, _POINT, _TRACE = 0, 1, 2

WEAK_FIELD_COLUMNS = (
    "sqrt_p_rf_sqrtw", "e_cell_vpm", "lockin_r_v", "regime_flag",
    "generator_dbm", "p_rf_dbm", "floor_z", "at_splitting_hz",
)
ISOLATION_COLUMNS = (
    "ratio_db", "e_interferer_vpm", "leakage_r_v", "leakage_db", "leakage_clamped_db",
    "total_r_v", "total_db", "predicted_leakage_db",
)


def _seeds(seed, *key, count=1):
    return [np.random.SeedSequence(seed, spawn_key=tuple(key) + (j,)) for j in range(count)]


def _reading_task(args):
    setup, seeds = args
    return averaged_reading(setup, seeds)


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def base_metadata(cfg: ScenarioConfig, command: str, **extra) -> dict:
    lc = cfg.lockin_config()
    meta = {
        "command": command,
        "version": __version__,
        "config_hash": cfg.config_hash,
        "seed": cfg["run.seed"],
        "fc_convention": lc.cutoff_convention,
        "cutoff_hz": cutoff_frequency(lc),
        "poles": lc.poles,
        "tau_s": lc.time_constant,
    }
    meta.update(extra)
    return meta


def _out_path(out, name) -> Optional[Path]:
    return None if out is None else Path(out) / name


def _signed_if(cfg) -> float:
    return cfg["tones.f_sig_hz"] - cfg["tones.f_lo_hz"]


def _setup(cfg: ScenarioConfig, offsets, noise: bool) -> ChainSetup:
    return ChainSetup(
        e_lo=cfg["tones.e_lo_vpm"],
        offsets=tuple(offsets),
        eit=cfg.eit_model(),
        photodiode=cfg.photodiode(noise=noise),
        lockin=cfg.lockin_config(),
        duration=cfg.duration,
        chunk_size=cfg["sim.chunk_size"],
    )


def _sig_offset(cfg, amplitude, extra_hz=0.0):
    df = _signed_if(cfg)
    sign = 1.0 if df >= 0 else -1.0
    phase = cfg["tones.phase_sig_rad"] - cfg["tones.phase_lo_rad"]
    return (amplitude, df + sign * extra_hz, phase)


# ---------------------------------------------------------------- spectrum
def _refine_peaks(x, y, idx):
    """Three-point parabolic vertex around each grid maximum (uniform grid)."""
    out = []
    step = x[1] - x[0]
    for i in idx:
        if 0 < i < len(x) - 1:
            y0, y1, y2 = y[i - 1], y[i], y[i + 1]
            denom = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
            out.append(x[i] + shift * step)
        else:
            out.append(x[i])
    return np.array(out)


def run_spectrum(cfg: ScenarioConfig, out=None, reproducible=False, command="spectrum"):
    """Probe transmission versus coupling detuning for each configured field."""
    eit = cfg.eit_model()
    span = cfg["spectrum.span_hz"]
    det = np.linspace(-span, span, cfg["spectrum.points"])
    meta = base_metadata(cfg, command, eit_linewidth_hz=eit.transition.eit_linewidth,
                         e_at_vpm=eit.e_at)
    results, summary_rows = [], []
    for i, e in enumerate(cfg["spectrum.e_fields_vpm"]):
        trans = eit_spectrum(eit, det, e)
        idx, _ = find_peaks(trans)
        if idx.size == 0:
            idx = np.array([int(np.argmax(trans))])
        peaks = _refine_peaks(det, trans, idx)
        separation = float(peaks.max() - peaks.min()) if idx.size > 1 else 0.0
        results.append({"e_field_vpm": e, "detuning_hz": det, "transmission": trans,
                        "peaks_hz": peaks, "separation_hz": separation})
        summary_rows.append((e, at_splitting(e, eit.transition), idx.size, separation,
                             separation / eit.transition.eit_linewidth))
        path = _out_path(out, f"spectrum_{i}.csv")
        if path is not None:
            write_csv(path, ("coupling_detuning_hz", "transmission"), zip(det, trans),
                      dict(meta, e_field_vpm=e), reproducible)
    path = _out_path(out, "spectrum_peaks.csv")
    if path is not None:
        write_csv(path, ("e_field_vpm", "at_splitting_hz", "n_peaks", "peak_separation_hz",
                         "separation_over_linewidth"), summary_rows, meta, reproducible)
    return results


# ---------------------------------------------------------------- IF traces
def run_if_trace(cfg: ScenarioConfig, out=None, reproducible=False, command="if-trace"):
    """Envelope and photodiode traces for each configured signal field."""
    eit = cfg.eit_model()
    fs = cfg["sim.sample_rate_hz"]
    e_lo = cfg["tones.e_lo_vpm"]
    meta = base_metadata(cfg, command, e_lo_vpm=e_lo, f_if_hz=cfg.f_if)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
    results, summary = [], []
    for i, e_sig in enumerate(cfg["trace.e_sig_vpm"]):
        pair = TonePair.from_values(e_lo, e_sig, cfg["tones.f_lo_hz"], cfg["tones.f_sig_hz"],
                                    cfg["tones.phase_lo_rad"], cfg["tones.phase_sig_rad"])
        exact = cfg["trace.exact"] or e_sig >= e_lo
        env = synthesize_envelope_trace(pair, fs, cfg["trace.duration_s"], exact=exact)
        seed = int(_seeds(cfg["run.seed"], _TRACE, i)[0].generate_state(1)[0])
        pd = cfg.photodiode(noise=cfg["trace.noise"], seed=seed)
        volts = photodiode_trace(eit, pd, env)
        spec = np.fft.rfft(volts.samples - volts.samples.mean())
        freqs = np.fft.rfftfreq(volts.samples.size, 1.0 / fs)
        k = int(np.argmax(np.abs(spec)))
        if_amp = 2.0 * abs(spec[k]) / volts.samples.size
        env_p2p = float(env.samples.max() - env.samples.min())
        bound = e_sig ** 2 / (2 * (e_lo - e_sig)) if e_sig < e_lo else math.inf
        row = {
            "e_sig_vpm": e_sig,
            "envelope_p2p_vpm": env_p2p,
            "weak_field_bound_vpm": bound,
            "photodiode_p2p_v": float(volts.samples.max() - volts.samples.min()),
            "fft_peak_hz": float(freqs[k]) if e_sig > 0 else 0.0,
            "if_amplitude_v": if_amp,
        }
        summary.append(row)
        results.append({"envelope": env, "photodiode": volts, **row})
        if out is not None:
            trace_meta = dict(meta, e_sig_vpm=e_sig)
            env.to_csv(_out_path(out, f"if_envelope_{i}.csv"), "value", trace_meta)
            volts.to_csv(_out_path(out, f"if_photodiode_{i}.csv"), "volts", trace_meta)
    if out is not None:
        cols = tuple(summary[0]) if summary else ("e_sig_vpm",)
        write_csv(_out_path(out, "if_trace_summary.csv"), cols,
                  [tuple(r.values()) for r in summary], meta, reproducible)
    return results


# ---------------------------------------------------------------- noise floor
def _floor_readings(cfg: ScenarioConfig, noise_density=None, seed=None, jobs=1):
    """Zero-signal lock-in readings, one per floor run, each averaged over n_averages."""
    if noise_density is not None:
        cfg = cfg.copy({"photodiode.noise_density": noise_density})
    seed = cfg["run.seed"] if seed is None else seed
    setup = _setup(cfg, (), noise=True)
    n_avg = cfg["sweep.n_averages"]
    tasks = [(setup, _seeds(seed, _FLOOR, k, count=n_avg)) for k in range(cfg["sweep.floor_runs"])]
    return np.array(_map(_reading_task, tasks, jobs))


def noiseless_response(cfg: ScenarioConfig, e_sig: float) -> float:
    setup = _setup(cfg, (_sig_offset(cfg, e_sig),), noise=False)
    return lockin_reading(setup).r


def calibrate_noise(cfg: ScenarioConfig, target_e_vpm=None, rtol=1e-4, out=None,
                    reproducible=False, command="calibrate-noise"):
    """Bisect the photodiode noise density until the zero-signal floor equals
    the noiseless lock-in response at ``target_e_vpm``.

    The floor is the mean of the simulated zero-signal readings (same seeds
    and averaging as the weak-field sweep), so the calibrated sweep puts its
    knee at the target field.
    """
    target = cfg["calibrate.target_e_vpm"] if target_e_vpm is None else target_e_vpm
    jobs = cfg["sim.jobs"]
    response = noiseless_response(cfg, target)
    guess = response / noise_floor(cfg.lockin_config(), 1.0)
    evaluations = []

    def mismatch(log_rho):
        floor = float(_floor_readings(cfg, math.exp(log_rho), jobs=jobs).mean())
        evaluations.append((math.exp(log_rho), floor))
        return math.log(floor / response)

    lo, hi = math.log(guess) - math.log(4.0), math.log(guess) + math.log(4.0)
    try:
        log_rho = bisect(mismatch, lo, hi, xtol=rtol, maxiter=200)
    except ValueError as exc:
        raise NumericalError(f"noise calibration bracket failed: {exc}") from None
    rho = math.exp(log_rho)
    floor = float(_floor_readings(cfg, rho, jobs=jobs).mean())
    result = {
        "noise_density": rho,
        "analytic_noise_density": guess,
        "target_e_vpm": target,
        "response_v": response,
        "floor_v": floor,
        "evaluations": len(evaluations),
        "tau_s": cfg["lockin.tau_s"],
    }
    path = _out_path(out, "noise_calibration.csv")
    if path is not None:
        write_csv(path, tuple(result), [tuple(result.values())], base_metadata(cfg, command),
                  reproducible)
    return result


# ---------------------------------------------------------------- weak-field sweep
def _sweep_axis(cfg: ScenarioConfig):
    start, stop, n = cfg["sweep.start"], cfg["sweep.stop"], cfg["sweep.points"]
    if cfg["sweep.scale"] == "log":
        if start <= 0 or stop <= 0:
            raise ConfigurationError("log sweep needs positive start/stop")
        return np.geomspace(start, stop, n)
    return np.linspace(start, stop, n)


def _sweep_points(cfg: ScenarioConfig):
    """Return (generator_dbm, p_rf_dbm, p_rf_w, e_cell_vpm) arrays."""
    link, cf = cfg.link(), cfg.cell_factor()
    loss = math.fsum(cfg["chain.losses_db"])
    axis = _sweep_axis(cfg)
    if cfg["sweep.variable"] == "generator_dbm":
        gen = axis
        p_dbm = np.array([chain_output_dbm(cfg.power_chain(g)) for g in gen])
        p_w = dbm_to_watts(p_dbm)
        e = np.asarray(e_cell(p_w, link, cf))
    else:
        e = axis
        if np.any(e <= 0):
            raise ConfigurationError("sweep over e_sig_vpm needs positive fields")
        p_w = np.asarray(power_for_e_cell(e, link, cf))
        p_dbm = np.asarray(watts_to_dbm(p_w))
        gen = p_dbm + loss
    return np.atleast_1d(gen), np.atleast_1d(p_dbm), np.atleast_1d(p_w), np.atleast_1d(e)


def run_weak_field_sweep(cfg: ScenarioConfig, out=None, reproducible=False,
                         command="sweep-weakfield") -> SweepResult:
    """Lock-in reading versus signal power, with noise-floor and rolloff flags.

    The lowest detectable field (``knee_e_vpm``) is where the linear response,
    fitted through the origin on points clearly above the floor, meets the
    mean zero-signal floor. Points at or below it are flagged ``noise_floor``.
    ``floor_z`` gives each reading's distance from the floor in floor standard
    deviations.
    """
    seed, jobs = cfg["run.seed"], cfg["sim.jobs"]
    noise = cfg["sweep.noise"] and cfg["photodiode.noise_density"] > 0
    gen, p_dbm, p_w, e_sig = _sweep_points(cfg)
    e_lo = cfg["tones.e_lo_vpm"]
    transition = cfg.transition()
    e_at = min_detectable_at_field(transition)
    n_avg = cfg["sweep.n_averages"] if noise else 1

    tasks = [(_setup(cfg, (_sig_offset(cfg, e),), noise),
              _seeds(seed, _POINT, i, count=n_avg)) for i, e in enumerate(e_sig)]
    readings = np.array(_map(_reading_task, tasks, jobs))
    if noise:
        floor = _floor_readings(cfg, seed=seed, jobs=jobs)
        floor_mean, floor_std = float(floor.mean()), float(floor.std(ddof=1))
    else:
        floor_mean = floor_std = 0.0
    threshold = floor_mean + 3.0 * floor_std

    linear = (e_sig <= 0.5 * e_at) & (e_sig < e_lo)
    fit_mask = linear & (readings > threshold)
    if fit_mask.any():
        slope = float(readings[fit_mask] @ e_sig[fit_mask] / (e_sig[fit_mask] @ e_sig[fit_mask]))
        knee = floor_mean / slope
    else:
        slope = math.nan
        knee = math.inf if floor_mean > 0 else math.nan

    rows = []
    for g, pd_, pw, e, r in zip(gen, p_dbm, p_w, e_sig, readings):
        flags = []
        if knee > 0 and e <= knee:
            flags.append("noise_floor")
        if e > 0.5 * e_at:
            flags.append("at_rolloff")
        if e >= e_lo:
            flags.append("above_lo")
        z = (r - floor_mean) / floor_std if floor_std > 0 else None
        split = at_splitting(float(e), transition) if e >= e_at else None
        rows.append((math.sqrt(pw), float(e), float(r), "|".join(flags) or "linear",
                     float(g), float(pd_), z, split))

    floor_rel = (floor_std / math.sqrt(len(floor)) / floor_mean) if noise else 0.0
    cal_rel = combine_uncertainty([cfg["link.field_rel_uncertainty"]])
    meta = base_metadata(
        cfg, command,
        noise_density=cfg["photodiode.noise_density"] if noise else 0.0,
        n_averages=n_avg,
        floor_runs=cfg["sweep.floor_runs"] if noise else 0,
        e_lo_vpm=e_lo,
        e_at_vpm=e_at,
        floor_mean_v=floor_mean,
        floor_std_v=floor_std,
        floor_threshold_v=threshold,
        slope_v_per_vpm=slope,
        knee_e_vpm=knee,
        knee_floor_rel_uncertainty=floor_rel,
        knee_calibration_rel_uncertainty=cal_rel,
        knee_combined_rel_uncertainty=combine_uncertainty([floor_rel, cal_rel]),
    )
    result = SweepResult(WEAK_FIELD_COLUMNS, rows, meta)
    if out is not None:
        result.write(_out_path(out, "weak_field_sweep.csv"), reproducible)
    return result


# ---------------------------------------------------------------- isolation
def threshold_crossing(x, y, level=-3.0) -> float:
    """First ``x`` where ``y`` reaches ``level``, linearly interpolated; inf if never."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    hits = np.nonzero(y >= level)[0]
    if hits.size == 0:
        return math.inf
    i = int(hits[0])
    if i == 0:
        return float(x[0])
    x0, x1, y0, y1 = x[i - 1], x[i], y[i - 1], y[i]
    return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0))


@dataclass
class IsolationResult:
    reference_r_v: float
    floor_db: float
    curves: dict = field(default_factory=dict)
    summary: Optional[SweepResult] = None

    def crossing(self, detuning):
        i = self.summary.columns.index("crossing_db")
        for row in self.summary.rows:
            if math.isclose(row[0], detuning):
                return row[i]
        raise KeyError(detuning)


def _db(ratio):
    return 20.0 * math.log10(ratio) if ratio > 0 else -math.inf


def run_isolation_sweep(cfg: ScenarioConfig, out=None, reproducible=False,
                        command="isolation") -> IsolationResult:
    """Adjacent-channel leakage versus interferer strength for each detuning.

    Three tones reach the atoms: the LO, the in-tune signal E_o at the IF,
    and an interferer at IF + detuning. The total field magnitude is the
    exact phasor sum, so mixer compression at large interferer levels is kept.
    ``leakage_db`` is the interferer-only reading relative to the E_o-only
    reading; ``total_db`` has both signals present. Readings are noiseless;
    the analytic noise floor clamps ``leakage_clamped_db``, which sets the
    -3 dB crossing.
    """
    jobs = cfg["sim.jobs"]
    e_o = cfg["isolation.e_o_vpm"]
    lc = cfg.lockin_config()
    ratios = np.linspace(cfg["isolation.ratio_start_db"], cfg["isolation.ratio_stop_db"],
                         cfg["isolation.points"])
    detunings = cfg["isolation.detunings_hz"]

    in_tune = _sig_offset(cfg, e_o)
    tasks = [(_setup(cfg, (in_tune,), noise=False), [None])]
    for df in detunings:
        for rdb in ratios:
            interferer = _sig_offset(cfg, e_o * 10 ** (rdb / 20), df)
            tasks.append((_setup(cfg, (interferer,), noise=False), [None]))
            tasks.append((_setup(cfg, (in_tune, interferer), noise=False), [None]))
    values = _map(_reading_task, tasks, jobs)
    r_o = values[0]
    if not r_o > 0:
        raise NumericalError("in-tune reference reading is zero")
    floor_v = noise_floor(lc, cfg["photodiode.noise_density"])
    floor_db = _db(floor_v / r_o)

    p_o_dbm = watts_to_dbm(power_for_e_cell(e_o, cfg.link(), cfg.cell_factor()))
    meta = base_metadata(cfg, command, e_o_vpm=e_o, reference_r_v=r_o, floor_db=floor_db,
                         generator_setpoint_dbm=cfg["isolation.generator_dbm"],
                         p_rf_for_e_o_dbm=p_o_dbm,
                         implied_chain_loss_db=cfg["isolation.generator_dbm"] - p_o_dbm,
                         f_if_hz=cfg.f_if, duration_s=cfg.duration)
    result = IsolationResult(r_o, floor_db)
    summary_rows = []
    k = 1
    for i, df in enumerate(detunings):
        predicted = rejection_db(lc, df)
        rows, clamped = [], []
        for rdb in ratios:
            leak_r, total_r = values[k], values[k + 1]
            k += 2
            leak_db = _db(leak_r / r_o)
            clamp = max(leak_db, floor_db)
            clamped.append(clamp)
            rows.append((float(rdb), e_o * 10 ** (rdb / 20), leak_r, leak_db, clamp,
                         total_r, _db(total_r / r_o), float(rdb) + predicted))
        curve = SweepResult(ISOLATION_COLUMNS, rows, dict(meta, detuning_hz=df))
        result.curves[df] = curve
        crossing = threshold_crossing(ratios, clamped, -3.0)
        summary_rows.append((df, crossing, -3.0 - predicted, predicted, floor_db, rows[0][6]))
        if out is not None:
            curve.write(_out_path(out, f"isolation_df_{i}.csv"), reproducible)
    result.summary = SweepResult(
        ("detuning_hz", "crossing_db", "predicted_crossing_db", "rejection_db", "floor_db",
         "total_db_at_first_ratio"),
        summary_rows, meta)
    if out is not None:
        result.summary.write(_out_path(out, "isolation_summary.csv"), reproducible)
    return result


# ---------------------------------------------------------------- link budget / calibration
def run_linkbudget(cfg: ScenarioConfig, out=None, reproducible=False, command="linkbudget"):
    link, cf = cfg.link(), cfg.cell_factor()
    p_dbm = np.linspace(cfg["linkbudget.start_dbm"], cfg["linkbudget.stop_dbm"],
                        cfg["linkbudget.points"])
    p_w = dbm_to_watts(p_dbm)
    e_ff = e_far_field(p_w, link)
    e_c = e_cell(p_w, link, cf)
    rows = [tuple(map(float, r)) for r in zip(p_dbm, p_w, e_ff, e_c)]
    result = SweepResult(("p_dbm", "p_watts", "e_ff_vpm", "e_cell_vpm"), rows,
                         base_metadata(cfg, command, cell_factor=cf.value, gain_db=link.gain_db,
                                       distance_m=link.distance_r))
    if out is not None:
        result.write(_out_path(out, "linkbudget.csv"), reproducible)
    return result


def run_calibrate(cfg: ScenarioConfig, input_path=None, out=None, reproducible=False,
                  command="calibrate") -> dict:
    """Fit the cell factor from a calibration CSV."""
    path = input_path or cfg["calibrate.input"]
    if not path:
        raise ConfigurationError("calibrate needs an input CSV (calibrate.input or --input)")
    if not Path(path).exists():
        raise ConfigurationError(f"calibration input {path} not found")
    points = load_calibration_csv(path, cfg.link(), cfg.transition())
    e_ff = np.array([p.e_ff for p in points])
    e_meas = np.array([p.e_cell_measured for p in points])
    fit = CellFactorRegressor().fit(e_ff, e_meas)
    record = {"c_f": fit.cell_factor_, "fit_uncertainty": fit.fit_uncertainty_,
              "n_points": fit.n_points_}
    if len(points) >= 3:
        record["free_slope"] = CellFactorRegressor(free_slope=True).fit(e_ff, e_meas).slope_
    gain_rel = cfg.link().gain_rel_uncertainty
    record["combined_rel_uncertainty"] = combine_uncertainty(
        [fit.fit_uncertainty_ / fit.cell_factor_, gain_rel, cfg["link.field_rel_uncertainty"]])
    if out is not None:
        write_csv(_out_path(out, "cell_factor.csv"), tuple(record), [tuple(record.values())],
                  base_metadata(cfg, command, input=str(path)), reproducible)
    return record
