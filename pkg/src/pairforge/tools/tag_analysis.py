"""Estimators over timestamp streams.

Coincidences are counted with a symmetric window |t_a - t_b| ≤ Δt/2 (Δt > 0) and
greedy earliest-first one-to-one matching in a single two-pointer pass.
Accidentals come from the singles rates (S_a·S_b·Δt) or, optionally, from
a delayed window.
"""

import logging
import math
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.integrate import trapezoid
from scipy.stats import linregress

from ..exceptions import AnalysisError
from .phasematch import SpectralLine, spectral_line
from .polarization import CorrelationTable
from .stream_sim import TimestampStream
from .units import FWHM_PER_SIGMA, ps_to_s

logger = logging.getLogger(__name__)

AccidentalMode = Literal["singles", "delayed"]

# Filter scans need at least this many centres per filter FWHM.
_SCAN_POINTS_PER_FWHM = 4.0

# Output port labels of a polarization-resolved stream, per basis.
_BASIS_PORTS = {"HV": ("H", "V"), "DA": ("D", "A")}


class CoincidenceResult(BaseModel):
    """Counts from one coincidence window on one channel pair."""

    window_ps: float = Field(..., ge=0)
    channel_a: int
    channel_b: int
    singles: Dict[int, int]
    coincidences: int = Field(..., ge=0)
    accidentals_estimate: float = Field(..., ge=0)
    true_estimate: float = Field(..., description="coincidences - accidentals; may be negative")
    negative_true: bool = False
    duration_s: float = Field(..., gt=0)
    accidental_mode: AccidentalMode = "singles"
    chunks: int = 1

    def rate(self, count: float) -> float:
        return count / self.duration_s

    @property
    def singles_rate_a(self) -> float:
        return self.rate(self.singles[self.channel_a])

    @property
    def singles_rate_b(self) -> float:
        return self.rate(self.singles[self.channel_b])

    @property
    def coincidence_rate(self) -> float:
        return self.rate(self.coincidences)

    @property
    def true_rate(self) -> float:
        return self.rate(self.true_estimate)


class BrightnessFit(BaseModel):
    """Least-squares line through (pump power, pair rate) points."""

    points: List[Tuple[float, float]]
    slope: float = Field(..., description="pairs/s/mW")
    intercept: float = Field(..., description="Hz")
    slope_stderr: float
    rvalue: float


def _match_count(a: Sequence[int], b: Sequence[int], window_ps: float) -> int:
    """Greedy earliest-first one-to-one matches between two sorted time lists."""
    if window_ps <= 0:
        # a zero-width window matches nothing, not even identical timestamps
        return 0
    i = j = count = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        d = b[j] - a[i]
        if 2 * d < -window_ps:
            j += 1
        elif 2 * d > window_ps:
            i += 1
        else:
            count += 1
            i += 1
            j += 1
    return count


def _require_sorted(stream: TimestampStream) -> None:
    if not stream.is_sorted():
        raise AnalysisError("stream is not time-ordered; sort it before analysis")


def _require_channels(stream: TimestampStream, *channels: int) -> None:
    for ch in channels:
        if ch not in stream.channel_map:
            raise AnalysisError(
                f"channel {ch} is not in the stream's channel map {sorted(stream.channel_map)}"
            )


def count_coincidences(
    stream: TimestampStream,
    ch_a: int,
    ch_b: int,
    window_ps: float,
    accidental_mode: AccidentalMode = "singles",
    delay_ps: float = 0.0,
) -> CoincidenceResult:
    """Coincidences between two channels with their accidental estimate.

    In ``delayed`` mode the accidentals are the coincidences counted after
    shifting channel b by ``delay_ps``, which must exceed the correlation
    time of the source.
    """
    _require_sorted(stream)
    _require_channels(stream, ch_a, ch_b)
    if window_ps < 0:
        raise AnalysisError(f"window must be nonnegative, got {window_ps} ps")

    a = stream.times_for(ch_a).tolist()
    b = stream.times_for(ch_b).tolist()
    coincidences = _match_count(a, b, window_ps)

    if accidental_mode == "delayed":
        if delay_ps <= window_ps:
            raise AnalysisError("delayed-window mode needs a delay longer than the window")
        shift = int(round(delay_ps))
        accidentals = float(_match_count(a, [t + shift for t in b], window_ps))
    else:
        accidentals = len(a) * len(b) * ps_to_s(window_ps) / stream.duration_s

    true = coincidences - accidentals
    if true < 0:
        logger.warning(
            f"Channels {ch_a}/{ch_b} at Δt = {window_ps} ps: {coincidences} coincidences "
            f"below the accidental estimate {accidentals:.4g}"
        )
    return CoincidenceResult(
        window_ps=window_ps,
        channel_a=ch_a,
        channel_b=ch_b,
        singles={ch_a: len(a), ch_b: len(b)},
        coincidences=coincidences,
        accidentals_estimate=accidentals,
        true_estimate=true,
        negative_true=true < 0,
        duration_s=stream.duration_s,
        accidental_mode=accidental_mode,
    )


def window_sweep(
    stream: TimestampStream, ch_a: int, ch_b: int, windows_ps: Sequence[float]
) -> List[CoincidenceResult]:
    if any(later < earlier for earlier, later in zip(windows_ps, windows_ps[1:])):
        raise AnalysisError("window list must be sorted ascending")
    return [count_coincidences(stream, ch_a, ch_b, w) for w in windows_ps]


def iter_chunks(stream: TimestampStream, chunk_duration_s: float) -> Iterator[TimestampStream]:
    """Consecutive time slices of a sorted stream, each rebased to start at zero."""
    _require_sorted(stream)
    if chunk_duration_s <= 0:
        raise AnalysisError("chunk duration must be positive")
    n_chunks = max(1, math.ceil(stream.duration_s / chunk_duration_s - 1e-12))
    chunk_ps = stream.duration_ps / n_chunks
    edges = [int(round(k * chunk_ps)) for k in range(n_chunks + 1)]
    for k in range(n_chunks):
        lo = int(np.searchsorted(stream.times_ps, edges[k], side="left"))
        side = "right" if k == n_chunks - 1 else "left"
        hi = int(np.searchsorted(stream.times_ps, edges[k + 1], side=side))
        yield TimestampStream(
            channels=stream.channels[lo:hi],
            times_ps=stream.times_ps[lo:hi] - edges[k],
            duration_s=ps_to_s(edges[k + 1] - edges[k]),
            channel_map=stream.channel_map,
            seed=stream.seed,
            generator=stream.generator,
            pump_power_mw=stream.pump_power_mw,
        )


def count_coincidences_chunked(
    stream: TimestampStream,
    ch_a: int,
    ch_b: int,
    window_ps: float,
    chunk_duration_s: float,
) -> CoincidenceResult:
    """count_coincidences summed over time slices.

    Pairs straddling a slice boundary are lost, so the total can fall short
    of the whole-stream count by the window occupancy at each boundary: at
    most one coincidence per boundary while S·Δt ≪ 1.
    """
    _require_channels(stream, ch_a, ch_b)
    coincidences = 0
    chunks = 0
    for chunk in iter_chunks(stream, chunk_duration_s):
        coincidences += count_coincidences(chunk, ch_a, ch_b, window_ps).coincidences
        chunks += 1
    n_a, n_b = stream.count(ch_a), stream.count(ch_b)
    accidentals = n_a * n_b * ps_to_s(window_ps) / stream.duration_s
    true = coincidences - accidentals
    logger.debug(f"Counted {coincidences} coincidences over {chunks} chunks")
    return CoincidenceResult(
        window_ps=window_ps,
        channel_a=ch_a,
        channel_b=ch_b,
        singles={ch_a: n_a, ch_b: n_b},
        coincidences=coincidences,
        accidentals_estimate=accidentals,
        true_estimate=true,
        negative_true=true < 0,
        duration_s=stream.duration_s,
        chunks=chunks,
    )


def heralding(result: CoincidenceResult) -> Tuple[float, float]:
    """(η_signal, η_idler) = (C_true/S_idler, C_true/S_signal), channel a being the signal."""
    n_a = result.singles[result.channel_a]
    n_b = result.singles[result.channel_b]
    if n_a <= 0 or n_b <= 0:
        raise AnalysisError("heralding needs nonzero singles on both channels")
    return result.true_estimate / n_b, result.true_estimate / n_a


def pair_generation_rate(result: CoincidenceResult) -> float:
    """S_a·S_b/C_true in Hz."""
    if result.true_estimate <= 0:
        raise AnalysisError("insufficient true coincidences to estimate the pair rate")
    return result.singles_rate_a * result.singles_rate_b / result.true_rate


def brightness_fit(points: Sequence[Tuple[float, float]]) -> BrightnessFit:
    """Ordinary least squares of pair rate against pump power."""
    if len(points) < 2:
        raise AnalysisError("a brightness fit needs at least two points")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.unique(x).size < 2:
        raise AnalysisError("a brightness fit needs at least two distinct pump powers")

    fit = linregress(x, y)
    stderr = float(fit.stderr) if len(points) > 2 else 0.0
    if fit.slope <= 0:
        logger.warning(f"Brightness fit has a nonpositive slope {fit.slope:.4g} Hz/mW")
    return BrightnessFit(
        points=[(float(a), float(b)) for a, b in zip(x, y)],
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        slope_stderr=stderr,
        rvalue=float(fit.rvalue),
    )


def spectral_brightness(fit: BrightnessFit, fwhm_ghz: float) -> float:
    """Brightness per GHz of emission bandwidth, pairs/s/mW/GHz."""
    if fwhm_ghz <= 0:
        raise AnalysisError("bandwidth must be positive")
    return fit.slope / fwhm_ghz


def quadrature_add(a: float, b: float) -> float:
    return math.hypot(a, b)


def deconvolve_fwhm(fwhm_measured_ghz: float, fwhm_filter_ghz: float) -> float:
    """√(FWHM_meas² - FWHM_filter²), the Gaussian-filter correction."""
    if fwhm_filter_ghz <= 0:
        raise AnalysisError("filter FWHM must be positive")
    if fwhm_measured_ghz <= fwhm_filter_ghz:
        raise AnalysisError(
            f"filter-limited measurement: {fwhm_measured_ghz} GHz is not wider than "
            f"the {fwhm_filter_ghz} GHz filter"
        )
    return math.sqrt(fwhm_measured_ghz**2 - fwhm_filter_ghz**2)


def filter_scan(
    line: SpectralLine, filter_fwhm_ghz: float, centers_ghz: Sequence[float]
) -> SpectralLine:
    """Transmitted power of a Gaussian filter swept across a line, peak-normalized."""
    if filter_fwhm_ghz <= 0:
        raise AnalysisError("filter FWHM must be positive")
    centers = np.sort(np.asarray(centers_ghz, dtype=float))
    if centers.size < 3:
        raise AnalysisError("a filter scan needs at least three centres")
    if not centers[0] < line.center_frequency_ghz < centers[-1]:
        raise AnalysisError(
            f"scan {centers[0]:.6g}..{centers[-1]:.6g} GHz does not cover the line "
            f"centre {line.center_frequency_ghz:.6g} GHz"
        )

    nu = line.frequencies_ghz
    intensity = line.intensities
    sigma = filter_fwhm_ghz / FWHM_PER_SIGMA
    kernel = np.exp(-0.5 * ((nu[None, :] - centers[:, None]) / sigma) ** 2)
    power = trapezoid(kernel * intensity[None, :], nu, axis=1)
    if power.max() <= 0:
        raise AnalysisError("filter scan transmitted no power")

    spacing = float(np.max(np.diff(centers)))
    undersampled = spacing > filter_fwhm_ghz / _SCAN_POINTS_PER_FWHM
    if undersampled:
        logger.warning(
            f"Filter scan spacing {spacing:.4g} GHz exceeds a quarter of the "
            f"{filter_fwhm_ghz} GHz filter width"
        )
    return spectral_line(centers, power / power.max(), undersampled=undersampled)


def correlation_table(
    stream: TimestampStream,
    basis: str,
    window_ps: float,
    integration_time_s: Optional[float] = None,
) -> CorrelationTable:
    """Coincidences between the analyzer ports of one basis in a polarization-resolved stream."""
    if basis not in _BASIS_PORTS:
        raise AnalysisError(f"unknown basis {basis!r}")
    a, b = _BASIS_PORTS[basis]
    try:
        sig = [stream.channel_for(f"signal_{p}") for p in (a, b)]
        idl = [stream.channel_for(f"idler_{p}") for p in (a, b)]
    except KeyError as e:
        raise AnalysisError(f"stream has no polarization-resolved channel {e}") from None

    counts = []
    accidentals = []
    for s in sig:
        for i in idl:
            r = count_coincidences(stream, s, i, window_ps)
            counts.append(r.coincidences)
            accidentals.append(r.accidentals_estimate)
    return CorrelationTable(
        basis=basis,
        counts=tuple(counts),
        accidentals=tuple(accidentals),
        integration_time_s=integration_time_s or stream.duration_s,
    )
