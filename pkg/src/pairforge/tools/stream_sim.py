"""Monte Carlo timestamp streams from a pair source and two detector arms.

Per run: Poisson pair emission, per-arm survival, optional polarization
routing into the four analyzer outputs of each arm, Gaussian jitter per
detection, Poisson dark counts per channel, then a sequential
non-paralyzable dead-time filter per channel that also spawns afterpulses.

Randomness comes from one numpy ``SeedSequence`` split into independent
child streams (emission, routing, one per arm, one per channel), so a seed
fully determines the output.
"""

import heapq
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..exceptions import SimulationError
from ..settings import settings
from .detection_model import ArmBudget, DetectorModel
from .polarization import EntangledStateModel, joint_probability, pam_projection_angles
from .units import FWHM_PER_SIGMA, ns_to_ps, s_to_ps

logger = logging.getLogger(__name__)

GENERATOR_ID = "numpy.random.PCG64+SeedSequence.spawn"

SIGNAL_CHANNEL = 0
IDLER_CHANNEL = 1
# Polarization-resolved layout: H, V, D, A per arm.
POLARIZATION_CHANNELS: Dict[str, Dict[str, int]] = {
    "signal": {"H": 0, "V": 1, "D": 2, "A": 3},
    "idler": {"H": 4, "V": 5, "D": 6, "A": 7},
}

ORIGIN_PAIR = 0
ORIGIN_DARK = 1
ORIGIN_AFTERPULSE = 2

MAX_AFTERPULSE_DEPTH = 10
_DRAW_BLOCK = 4096


class AnalyzerArm(BaseModel):
    """Wave-plate settings of one polarization analysis module."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    hv_hwp_rad: float = 0.0
    da_hwp_rad: float = math.pi / 8.0
    hv_probability: float = Field(0.5, ge=0, le=1, description="Beam-splitter ratio into H/V")


class AnalyzerSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    signal: AnalyzerArm = AnalyzerArm()
    idler: AnalyzerArm = AnalyzerArm()


class FiberDrift(BaseModel):
    """Slow sinusoidal polarization rotation on the idler fiber."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    amplitude_rad: float = 0.0
    period_s: float = Field(1.0, gt=0)
    phase_rad: float = 0.0

    def rotation(self, t_s: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.amplitude_rad * np.sin(2.0 * np.pi * t_s / self.period_s + self.phase_rad)


class SimConfig(BaseModel):
    """Everything that determines one simulated stream."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    pgr_hz: float = Field(..., ge=0)
    duration_s: float = Field(..., gt=0)
    seed: int = Field(..., ge=0, lt=2**64)
    signal_arm: ArmBudget
    idler_arm: ArmBudget
    polarization_state: Optional[EntangledStateModel] = None
    analyzer_settings: Optional[AnalyzerSettings] = None
    idler_drift: Optional[FiberDrift] = None
    pump_power_mw: Optional[float] = Field(None, ge=0)

    @property
    def polarization_resolved(self) -> bool:
        return self.polarization_state is not None

    def channel_map(self) -> Dict[int, str]:
        if not self.polarization_resolved:
            return {SIGNAL_CHANNEL: "signal", IDLER_CHANNEL: "idler"}
        return {
            ch: f"{arm}_{label}"
            for arm, outputs in POLARIZATION_CHANNELS.items()
            for label, ch in outputs.items()
        }

    def detector_for(self, channel: int) -> DetectorModel:
        label = self.channel_map()[channel]
        arm = self.signal_arm if label.startswith("signal") else self.idler_arm
        return arm.detector


class ChannelStats(BaseModel):
    """Per-detector bookkeeping for livetime checks."""

    channel: int
    label: str
    offered: int = Field(..., ge=0, description="Photon and dark candidates inside the run")
    accepted: int = Field(..., ge=0)
    afterpulses: int = Field(0, ge=0, description="Accepted afterpulses")

    @property
    def livetime_fraction(self) -> float:
        if self.offered == 0:
            return 1.0
        return (self.accepted - self.afterpulses) / self.offered


class TimestampStream(BaseModel):
    """Merged detection events: parallel arrays of channel id and time in ps."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    channels: np.ndarray = Field(..., description="uint8 channel ids")
    times_ps: np.ndarray = Field(..., description="int64 picoseconds since run start")
    origins: Optional[np.ndarray] = Field(None, description="uint8 origin tags, debug runs only")
    duration_s: float = Field(..., gt=0)
    channel_map: Dict[int, str]
    seed: Optional[int] = None
    generator: Optional[str] = None
    pump_power_mw: Optional[float] = None
    stats: Dict[int, ChannelStats] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_events(self) -> "TimestampStream":
        if self.channels.shape != self.times_ps.shape:
            raise ValueError("channels and times_ps must have the same length")
        if self.origins is not None and self.origins.shape != self.times_ps.shape:
            raise ValueError("origins must match the event count")
        if self.times_ps.size:
            if int(self.times_ps.min()) < 0 or int(self.times_ps.max()) > self.duration_ps:
                raise ValueError(f"event times must lie in [0, {self.duration_ps}] ps")
            unknown = set(np.unique(self.channels).tolist()) - set(self.channel_map)
            if unknown:
                raise ValueError(f"channels {sorted(unknown)} are not in the channel map")
        return self

    def __len__(self) -> int:
        return int(self.times_ps.size)

    @property
    def duration_ps(self) -> int:
        return int(round(s_to_ps(self.duration_s)))

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.times_ps) >= 0))

    def times_for(self, channel: int) -> NDArray[np.int64]:
        return self.times_ps[self.channels == channel]

    def count(self, channel: int) -> int:
        return int(np.count_nonzero(self.channels == channel))

    def channel_for(self, label: str) -> int:
        for ch, name in self.channel_map.items():
            if name == label:
                return ch
        raise KeyError(label)

    def header(self) -> Dict[str, str]:
        """Metadata written ahead of the events in both stream formats."""
        head = {
            "duration_s": repr(self.duration_s),
            "channel_map": ",".join(f"{ch}:{name}" for ch, name in sorted(self.channel_map.items())),
        }
        if self.seed is not None:
            head["seed"] = str(self.seed)
        if self.generator:
            head["generator"] = self.generator
        if self.pump_power_mw is not None:
            head["pump_power_mw"] = repr(self.pump_power_mw)
        return head


class _Draws:
    """Block-buffered uniform and exponential draws from one generator."""

    def __init__(self, rng: np.random.Generator) -> None:
        self._rng = rng
        self._uniform: List[float] = []
        self._exponential: List[float] = []

    def uniform(self) -> float:
        if not self._uniform:
            self._uniform = self._rng.random(_DRAW_BLOCK).tolist()[::-1]
        return self._uniform.pop()

    def exponential(self) -> float:
        if not self._exponential:
            self._exponential = self._rng.standard_exponential(_DRAW_BLOCK).tolist()[::-1]
        return self._exponential.pop()


def _dead_time_filter(
    times: NDArray[np.int64],
    origins: NDArray[np.uint8],
    det: DetectorModel,
    duration_ps: int,
    rng: np.random.Generator,
) -> Tuple[NDArray[np.int64], NDArray[np.uint8], int]:
    """Non-paralyzable dead time with afterpulse cascades on one sorted channel."""
    dead = int(round(ns_to_ps(det.dead_time_ns)))
    p = det.afterpulse_prob
    if p == 0 and dead == 0:
        return times, origins, 0

    kept_t: List[int] = []
    kept_o: List[int] = []
    last = -(2**62)
    if p == 0:
        for t, o in zip(times.tolist(), origins.tolist()):
            if t - last >= dead:
                kept_t.append(t)
                kept_o.append(o)
                last = t
        return np.asarray(kept_t, dtype=np.int64), np.asarray(kept_o, dtype=np.uint8), 0

    tau_ps = ns_to_ps(det.afterpulse_tau_ns)
    draws = _Draws(rng)
    pending: List[Tuple[int, int]] = []  # (time, cascade depth)
    primary_t = times.tolist()
    primary_o = origins.tolist()
    i, n = 0, len(primary_t)
    afterpulses = 0
    while i < n or pending:
        if pending and (i >= n or pending[0][0] < primary_t[i]):
            t, depth = heapq.heappop(pending)
            origin = ORIGIN_AFTERPULSE
        else:
            t, origin, depth = primary_t[i], primary_o[i], 0
            i += 1
        if t - last < dead:
            continue
        kept_t.append(t)
        kept_o.append(origin)
        last = t
        if origin == ORIGIN_AFTERPULSE:
            afterpulses += 1
        if depth < MAX_AFTERPULSE_DEPTH and draws.uniform() < p:
            t_after = t + int(round(draws.exponential() * tau_ps))
            if t_after <= duration_ps:
                heapq.heappush(pending, (t_after, depth + 1))
    return np.asarray(kept_t, dtype=np.int64), np.asarray(kept_o, dtype=np.uint8), afterpulses


def _expected_events(config: SimConfig) -> float:
    darks = sum(config.detector_for(ch).dark_rate_hz for ch in config.channel_map())
    return config.duration_s * (
        config.pgr_hz * (config.signal_arm.eta_static + config.idler_arm.eta_static) + darks
    )


def _jitter(
    times_ps: NDArray[np.float64], det: DetectorModel, rng: np.random.Generator
) -> NDArray[np.float64]:
    if det.jitter_fwhm_ps <= 0:
        return times_ps
    return times_ps + rng.normal(0.0, det.jitter_fwhm_ps / FWHM_PER_SIGMA, size=times_ps.size)


def _route(
    config: SimConfig, emission_ps: NDArray[np.float64], rng: np.random.Generator
) -> Tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Analyzer output channel of each pair's signal and idler photon."""
    n = emission_ps.size
    if not config.polarization_resolved:
        return np.full(n, SIGNAL_CHANNEL), np.full(n, IDLER_CHANNEL)
    assert config.polarization_state is not None
    analyzer = config.analyzer_settings or AnalyzerSettings()

    # each arm's beam splitter picks its basis independently
    s_hv = rng.random(n) < analyzer.signal.hv_probability
    i_hv = rng.random(n) < analyzer.idler.hv_probability

    def port_angles(
        arm: AnalyzerArm, hv: NDArray[np.bool_]
    ) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        hv_a, hv_b = pam_projection_angles(arm.hv_hwp_rad)
        da_a, da_b = pam_projection_angles(arm.da_hwp_rad)
        return np.where(hv, hv_a, da_a), np.where(hv, hv_b, da_b)

    sa, sb = port_angles(analyzer.signal, s_hv)
    ia, ib = port_angles(analyzer.idler, i_hv)
    if config.idler_drift is not None:
        # rotating the photon by δ is rotating the analyzer by -δ
        delta = config.idler_drift.rotation(emission_ps * 1e-12)
        ia, ib = ia - delta, ib - delta

    state = config.polarization_state
    probs = np.stack(
        [
            joint_probability(state, sa, ia),
            joint_probability(state, sa, ib),
            joint_probability(state, sb, ia),
            joint_probability(state, sb, ib),
        ],
        axis=-1,
    )
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    outcome = np.minimum((rng.random(n)[:, None] > cdf).sum(axis=1), 3)

    sig_port = outcome // 2
    idl_port = outcome % 2
    sig_ch = np.where(s_hv, 0, 2) + sig_port
    idl_ch = 4 + np.where(i_hv, 0, 2) + idl_port
    return sig_ch.astype(np.int64), idl_ch.astype(np.int64)


def simulate(config: SimConfig) -> TimestampStream:
    """Simulate one merged, time-ordered detection stream."""
    expected = _expected_events(config)
    if expected > settings.max_events:
        raise SimulationError(
            f"expected {expected:.3g} events exceed the cap of {settings.max_events}; "
            "simulate shorter durations in chunks with distinct seeds, or raise "
            "PAIRFORGE_MAX_EVENTS"
        )

    channel_map = config.channel_map()
    channel_ids = sorted(channel_map)
    root = np.random.SeedSequence(config.seed)
    children = root.spawn(4 + len(channel_ids))
    rng_emit, rng_route, rng_sig, rng_idl = (
        np.random.Generator(np.random.PCG64(c)) for c in children[:4]
    )
    rng_channel = {
        ch: np.random.Generator(np.random.PCG64(c)) for ch, c in zip(channel_ids, children[4:])
    }

    duration_ps = int(round(s_to_ps(config.duration_s)))
    n_pairs = int(rng_emit.poisson(config.pgr_hz * config.duration_s))
    emission_ps = np.sort(rng_emit.uniform(0.0, duration_ps, size=n_pairs))
    sig_ch, idl_ch = _route(config, emission_ps, rng_route)
    logger.debug(f"Emitted {n_pairs} pairs over {config.duration_s} s")

    per_channel: Dict[int, List[NDArray[np.float64]]] = {ch: [] for ch in channel_ids}
    for arm, rng, ch_of_pair in (
        (config.signal_arm, rng_sig, sig_ch),
        (config.idler_arm, rng_idl, idl_ch),
    ):
        survived = rng.random(n_pairs) < arm.eta_static
        t = _jitter(emission_ps[survived], arm.detector, rng)
        for ch in np.unique(ch_of_pair).tolist():
            per_channel[ch].append(t[ch_of_pair[survived] == ch])

    all_ch: List[NDArray[np.uint8]] = []
    all_t: List[NDArray[np.int64]] = []
    all_o: List[NDArray[np.uint8]] = []
    stats: Dict[int, ChannelStats] = {}
    for ch in channel_ids:
        det = config.detector_for(ch)
        rng = rng_channel[ch]
        photons = np.rint(np.concatenate(per_channel[ch] or [np.empty(0)])).astype(np.int64)
        photons = photons[(photons >= 0) & (photons <= duration_ps)]
        n_dark = int(rng.poisson(det.dark_rate_hz * config.duration_s))
        darks = rng.integers(0, duration_ps, size=n_dark, endpoint=True, dtype=np.int64)

        times = np.concatenate([photons, darks])
        origins = np.concatenate(
            [np.full(photons.size, ORIGIN_PAIR, np.uint8), np.full(n_dark, ORIGIN_DARK, np.uint8)]
        )
        order = np.argsort(times, kind="stable")
        times, origins = times[order], origins[order]
        kept_t, kept_o, n_after = _dead_time_filter(times, origins, det, duration_ps, rng)

        stats[ch] = ChannelStats(
            channel=ch,
            label=channel_map[ch],
            offered=int(times.size),
            accepted=int(kept_t.size),
            afterpulses=n_after,
        )
        all_ch.append(np.full(kept_t.size, ch, np.uint8))
        all_t.append(kept_t)
        all_o.append(kept_o)
        logger.debug(
            f"Channel {ch} ({channel_map[ch]}): {times.size} offered, "
            f"{kept_t.size} accepted, {n_after} afterpulses"
        )

    channels = np.concatenate(all_ch)
    times_ps = np.concatenate(all_t)
    origins_all = np.concatenate(all_o)
    # ties: channel id, then insertion order
    order = np.lexsort((channels, times_ps))

    stream = TimestampStream(
        channels=channels[order],
        times_ps=times_ps[order],
        origins=origins_all[order] if settings.debug else None,
        duration_s=config.duration_s,
        channel_map=channel_map,
        seed=config.seed,
        generator=GENERATOR_ID,
        pump_power_mw=config.pump_power_mw,
        stats=stats,
    )
    logger.info(f"Simulated {len(stream)} events on {len(channel_ids)} channels (seed {config.seed})")
    return stream
