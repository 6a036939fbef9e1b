"""Subcommand workflows: load a run file, call the tools, write CSV tables."""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .exceptions import AnalysisError
from .runconfig import RunConfig, load_run_config
from .settings import settings
from .tools.detection_model import predict_sweep
from .tools.phasematch import (
    CrystalSpec,
    SpdcTriple,
    emission_bandwidth,
    estimated_fwhm_ghz,
    half_maximum_points,
    joint_spectral_intensity,
    solve_poling_period,
    tuning_curve,
)
from .tools.polarization import (
    CorrelationTable,
    characterize,
    fidelity_bound,
    read_correlation_tables,
    tables_to_frame,
    visibility_vs_phase,
)
from .tools.stream_io import read_stream, write_stream
from .tools.stream_sim import TimestampStream, simulate
from .tools.tables import config_hash, write_table
from .tools.tag_analysis import (
    brightness_fit,
    correlation_table,
    count_coincidences,
    count_coincidences_chunked,
    deconvolve_fwhm,
    filter_scan,
    heralding,
    pair_generation_rate,
    spectral_brightness,
    window_sweep,
)
from .tools.units import ghz_to_nm, nm_to_ghz

logger = logging.getLogger(__name__)


class RunContext(BaseModel):
    """A validated run file plus where and how its outputs are written."""

    config: RunConfig
    config_sha256: str
    output_dir: Path

    @classmethod
    def load(
        cls,
        path: Optional[Path] = None,
        overrides: Sequence[str] = (),
        output_dir: Optional[Path] = None,
    ) -> "RunContext":
        config = load_run_config(path, overrides)
        out = output_dir or Path(config.output_dir or settings.get_output_dir())
        return cls(config=config, config_sha256=config_hash(config.to_dict()), output_dir=out)

    @property
    def seed(self) -> int:
        return self.config.analysis.seed

    def write(self, frame: pd.DataFrame, name: str, subcommand: str, **extra: object) -> Path:
        return write_table(
            frame,
            self.output_dir / name,
            subcommand,
            config_sha256=self.config_sha256,
            seed=self.seed,
            extra=dict(extra) if extra else None,
        )


def _solved_spec(ctx: RunContext) -> CrystalSpec:
    cfg = ctx.config
    spec = cfg.crystal_spec()
    if spec.poling_period_um is None:
        triple = SpdcTriple.from_pump(cfg.source.pump_nm, cfg.source.idler_nm)
        spec = spec.with_period(solve_poling_period(spec, triple))
        logger.info(f"Solved poling period Λ = {spec.poling_period_um:.6g} µm")
    return spec


def run_tuning_curve(ctx: RunContext) -> Path:
    cfg = ctx.config
    points = tuning_curve(
        cfg.crystal_spec(),
        cfg.analysis.pump_range_nm,
        cfg.source.idler_nm,
        cfg.analysis.tuning_points,
        fixed_period=cfg.analysis.fixed_period,
        workers=cfg.analysis.tuning_workers,
    )
    frame = pd.DataFrame([p.model_dump() for p in points])
    return ctx.write(frame, "tuning_curve.csv", "tuning-curve")


def run_bandwidth(ctx: RunContext) -> Dict[str, float]:
    cfg = ctx.config
    spec = _solved_spec(ctx)
    lo, peak, hi = half_maximum_points(spec, cfg.source.pump_nm, cfg.source.idler_nm)
    assert spec.poling_period_um is not None
    plan = cfg.focusing()
    result = {
        "poling_period_um": spec.poling_period_um,
        "signal_nm": SpdcTriple.from_pump(cfg.source.pump_nm, cfg.source.idler_nm).signal_nm,
        "fwhm_ghz": hi - lo,
        "fwhm_nm": ghz_to_nm(lo) - ghz_to_nm(hi),
        "half_max_low_ghz": lo,
        "peak_ghz": peak,
        "half_max_high_ghz": hi,
        "linearized_fwhm_ghz": estimated_fwhm_ghz(spec, cfg.source.pump_nm, cfg.source.idler_nm),
        "xi": plan.xi,
        "pump_waist_um": plan.pump_waist_um,
        "signal_waist_um": plan.signal_waist_um,
        "idler_waist_um": plan.idler_waist_um,
    }
    ctx.write(pd.DataFrame([result]), "bandwidth.csv", "bandwidth")
    return result


def _jsi_grid_nm(ctx: RunContext, span_ghz: float, points: int) -> np.ndarray:
    center = nm_to_ghz(ctx.config.source.idler_nm)
    freqs = np.linspace(center - span_ghz / 2.0, center + span_ghz / 2.0, points)
    return np.asarray(ghz_to_nm(freqs))


def run_jsi(ctx: RunContext) -> Path:
    a = ctx.config.analysis
    line = joint_spectral_intensity(
        _solved_spec(ctx),
        ctx.config.source.pump_nm,
        _jsi_grid_nm(ctx, a.jsi_span_ghz, a.jsi_points),
    )
    frame = pd.DataFrame(
        {
            "idler_ghz": line.frequencies_ghz,
            "idler_nm": ghz_to_nm(line.frequencies_ghz),
            "intensity": line.intensities,
        }
    )
    return ctx.write(frame, "jsi.csv", "jsi", fwhm_ghz=f"{line.fwhm_ghz:.6g}")


def run_predict(ctx: RunContext) -> Path:
    cfg = ctx.config
    rows = predict_sweep(
        cfg.source.pump_power_mw,
        cfg.source.brightness_hz_per_mw,
        cfg.arm("signal"),
        cfg.arm("idler"),
        cfg.window(),
    )
    frame = pd.DataFrame(
        [
            {
                "power_mw": r.power_mw,
                **r.prediction.model_dump(),
                "pgr_estimate_hz": r.prediction.pgr_estimate,
            }
            for r in rows
        ]
    )
    return ctx.write(frame, "predict.csv", "predict", window_ps=cfg.window().window_ps)


def _stream_name(power_mw: float, binary: bool) -> str:
    return f"stream_{power_mw:g}mw.{'qtt' if binary else 'txt'}"


def run_simulate(ctx: RunContext, binary: bool = False, polarization: bool = False) -> List[Path]:
    """One stream per configured pump power; power k uses seed + k."""
    cfg = ctx.config
    paths = []
    for k, power in enumerate(cfg.source.pump_power_mw):
        stream = simulate(cfg.sim_config(power, seed=ctx.seed + k, polarization=polarization))
        paths.append(write_stream(stream, ctx.output_dir / _stream_name(power, binary)))
    return paths


def _arm_channels(stream: TimestampStream, path: Path) -> Tuple[int, int]:
    try:
        return stream.channel_for("signal"), stream.channel_for("idler")
    except KeyError:
        raise AnalysisError(
            f"{path} has no plain signal/idler channels; use the polarization command"
        ) from None


def analyze_stream(ctx: RunContext, stream: TimestampStream, path: Path) -> Dict[str, object]:
    a = ctx.config.analysis
    ch_s, ch_i = _arm_channels(stream, path)
    window = ctx.config.window().window_ps
    if a.chunk_duration_s:
        result = count_coincidences_chunked(stream, ch_s, ch_i, window, a.chunk_duration_s)
    else:
        result = count_coincidences(
            stream, ch_s, ch_i, window, accidental_mode=a.accidental_mode, delay_ps=a.delay_ps
        )
    row: Dict[str, object] = {
        "file": path.name,
        "pump_power_mw": stream.pump_power_mw,
        "duration_s": stream.duration_s,
        "window_ps": window,
        "singles_signal_hz": result.singles_rate_a,
        "singles_idler_hz": result.singles_rate_b,
        "coincidence_hz": result.coincidence_rate,
        "accidental_hz": result.rate(result.accidentals_estimate),
        "true_hz": result.true_rate,
        "negative_true": result.negative_true,
    }
    try:
        row["herald_signal"], row["herald_idler"] = heralding(result)
        row["pgr_hz"] = pair_generation_rate(result)
    except AnalysisError as e:
        logger.warning(f"{path.name}: {e}")
        row.update(herald_signal=math.nan, herald_idler=math.nan, pgr_hz=math.nan)
    return row


def run_analyze(
    ctx: RunContext, stream_paths: Sequence[Path], fwhm_ghz: Optional[float] = None
) -> List[Path]:
    """Coincidences, heralding and PGR per stream; window sweep and brightness fit when possible."""
    if not stream_paths:
        raise AnalysisError("no stream files given")
    cfg = ctx.config
    rows = []
    sweeps = []
    for path in stream_paths:
        stream = read_stream(path)
        rows.append(analyze_stream(ctx, stream, Path(path)))
        if cfg.analysis.windows_ps:
            ch_s, ch_i = _arm_channels(stream, Path(path))
            for r in window_sweep(stream, ch_s, ch_i, cfg.analysis.windows_ps):
                sweeps.append(
                    {
                        "file": Path(path).name,
                        "window_ps": r.window_ps,
                        "coincidences": r.coincidences,
                        "accidentals": r.accidentals_estimate,
                        "true": r.true_estimate,
                    }
                )

    frame = pd.DataFrame(rows)
    written = [ctx.write(frame, "analysis.csv", "analyze")]
    if sweeps:
        written.append(ctx.write(pd.DataFrame(sweeps), "window_sweep.csv", "analyze"))

    fitted = frame.dropna(subset=["pump_power_mw", "pgr_hz"])
    points = list(zip(fitted["pump_power_mw"].astype(float), fitted["pgr_hz"].astype(float)))
    if len({p for p, _ in points}) >= 2:
        fit = brightness_fit(points)
        if fwhm_ghz is None:
            fwhm_ghz = emission_bandwidth(
                _solved_spec(ctx), cfg.source.pump_nm, cfg.source.idler_nm
            )
        summary = {
            "slope_hz_per_mw": fit.slope,
            "slope_stderr": fit.slope_stderr,
            "intercept_hz": fit.intercept,
            "rvalue": fit.rvalue,
            "fwhm_ghz": fwhm_ghz,
            "spectral_brightness": spectral_brightness(fit, fwhm_ghz),
        }
        written.append(ctx.write(pd.DataFrame([summary]), "brightness.csv", "analyze"))
    return written


def run_scan_filter(ctx: RunContext) -> Dict[str, float]:
    """Simulated tunable-filter scan of the theoretical idler line."""
    cfg = ctx.config
    a = cfg.analysis
    span = max(a.jsi_span_ghz, 8.0 * a.filter_fwhm_ghz)
    line = joint_spectral_intensity(
        _solved_spec(ctx), cfg.source.pump_nm, _jsi_grid_nm(ctx, span, max(a.jsi_points, 1201))
    )
    half = span / 2.0 - 2.0 * a.filter_fwhm_ghz
    n_steps = int(half // a.scan_step_ghz)
    centers = line.center_frequency_ghz + a.scan_step_ghz * np.arange(-n_steps, n_steps + 1)
    scan = filter_scan(line, a.filter_fwhm_ghz, centers)

    frame = pd.DataFrame({"center_ghz": scan.frequencies_ghz, "transmission": scan.intensities})
    ctx.write(frame, "filter_scan.csv", "scan-filter", undersampled=scan.undersampled)
    summary = {
        "line_fwhm_ghz": line.fwhm_ghz,
        "filter_fwhm_ghz": a.filter_fwhm_ghz,
        "scan_fwhm_ghz": scan.fwhm_ghz,
        "deconvolved_fwhm_ghz": deconvolve_fwhm(scan.fwhm_ghz, a.filter_fwhm_ghz),
    }
    ctx.write(pd.DataFrame([summary]), "filter_scan_summary.csv", "scan-filter")
    return summary


def _simulated_tables(ctx: RunContext) -> List[CorrelationTable]:
    cfg = ctx.config
    power = cfg.source.pump_power_mw[0]
    stream = simulate(cfg.sim_config(power, polarization=True))
    window = cfg.window().window_ps
    return [correlation_table(stream, basis, window) for basis in ("HV", "DA")]


def _physical(v: float, basis: str) -> float:
    """Clip a corrected visibility into [-1, 1] for the fidelity bound."""
    clipped = min(1.0, max(-1.0, v))
    if clipped != v:
        logger.warning(f"{basis} visibility {v:.6g} clipped to {clipped:g} for the fidelity bound")
    return clipped


def run_polarization(
    ctx: RunContext, tables_path: Optional[Path] = None, phase_points: int = 0
) -> Dict[str, float]:
    """Visibilities and fidelity bound from measured tables or a simulated run."""
    cfg = ctx.config
    tables = read_correlation_tables(tables_path) if tables_path else _simulated_tables(ctx)
    if not tables_path:
        ctx.write(tables_to_frame(tables), "correlation_tables.csv", "polarization")

    estimates = {
        t.basis: characterize(t, cfg.analysis.bootstrap_resamples, ctx.seed) for t in tables
    }
    frame = pd.DataFrame([e.model_dump() for e in estimates.values()])
    ctx.write(frame, "visibility.csv", "polarization")

    result = {f"v_{b.lower()}": e.visibility for b, e in estimates.items()}
    if "HV" in estimates and "DA" in estimates:
        v_hv, v_da = (_physical(estimates[b].visibility, b) for b in ("HV", "DA"))
        result["fidelity_bound"] = fidelity_bound(v_hv, v_da)

    if phase_points > 1:
        phases = np.linspace(0.0, 2.0 * np.pi, phase_points)
        curve = visibility_vs_phase(
            phases.tolist(), cfg.polarization.amplitude_balance, cfg.polarization.p_mix
        )
        frame = pd.DataFrame([p.model_dump() for p in curve])
        ctx.write(frame, "visibility_vs_phase.csv", "polarization")
    return result
