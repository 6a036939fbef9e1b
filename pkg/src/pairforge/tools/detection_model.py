"""Analytical forward model of singles and coincidences.

Each arm sees the pair flux through a static efficiency, adds dark counts,
and loses a rate-dependent livetime fraction to a non-paralyzable dead time.
An afterpulse counts only when the detector has recovered by the time it
fires; counted afterpulses scale the singles by 1/(1 - y) (cascades
included) and feed only the accidentals.
"""

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import fixed_point
from scipy.special import erf

from ..exceptions import DetectionModelError
from .units import ps_to_s

logger = logging.getLogger(__name__)

_FIXED_POINT_MAXITER = 100
_FIXED_POINT_XTOL = 1e-12
# Above this S·Δt the low-occupancy accidental formula is no longer accurate.
_OCCUPANCY_WARN = 0.1
_SQRT_LN2 = math.sqrt(math.log(2.0))


class DetectorModel(BaseModel):
    """Single-photon detector imperfections."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    pde: float = Field(..., ge=0, le=1, description="Photon detection efficiency")
    dead_time_ns: float = Field(0.0, ge=0, description="Non-paralyzable dead time")
    dark_rate_hz: float = Field(0.0, ge=0)
    afterpulse_prob: float = Field(0.0, ge=0, le=1)
    afterpulse_tau_ns: float = Field(0.0, ge=0, description="Exponential afterpulse delay")
    jitter_fwhm_ps: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def check_afterpulse_delay(self) -> "DetectorModel":
        if self.afterpulse_prob > 0 and self.afterpulse_tau_ns <= 0:
            raise ValueError("afterpulse_tau_ns must be positive when afterpulse_prob > 0")
        return self

    @property
    def dead_time_s(self) -> float:
        return self.dead_time_ns * 1e-9


class ArmBudget(BaseModel):
    """Static efficiency of one arm and the detector at its end."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    eta_static: float = Field(..., gt=0, le=1)
    detector: DetectorModel

    @classmethod
    def from_losses(cls, transmission: float, detector: DetectorModel) -> "ArmBudget":
        """η_static as optical transmission times the detector's PDE."""
        if not 0 < transmission <= 1:
            raise DetectionModelError(f"transmission must lie in (0, 1], got {transmission}")
        return cls(eta_static=transmission * detector.pde, detector=detector)


class CoincidenceWindow(BaseModel):
    """Coincidence window Δt and the combined timing jitter it is judged against.

    Δt = 0 is allowed so that window sweeps can start at zero.
    """

    model_config = ConfigDict(frozen=True)

    window_ps: float = Field(..., ge=0)
    sigma_total_ps: float = Field(..., gt=0)

    @property
    def window_s(self) -> float:
        return float(ps_to_s(self.window_ps))


class RatePrediction(BaseModel):
    """Predicted measured rates for one source/detector configuration."""

    pgr_hz: float
    singles_signal_hz: float
    singles_idler_hz: float
    true_hz: float
    accidental_hz: float
    measured_hz: float
    capture_fraction: float = Field(..., ge=0, le=1)
    herald_signal: float
    herald_idler: float
    eta_eff_signal: float
    eta_eff_idler: float
    eta_dynamic_signal: float
    eta_dynamic_idler: float

    @property
    def pgr_estimate(self) -> float:
        """S_s·S_i/C_true: what the singles/coincidence estimator would report."""
        if self.true_hz <= 0:
            return 0.0
        return self.singles_signal_hz * self.singles_idler_hz / self.true_hz


class SweepRow(BaseModel):
    power_mw: float
    prediction: RatePrediction


def _check_rate(rate_hz: float) -> None:
    if not math.isfinite(rate_hz) or rate_hz < 0:
        raise DetectionModelError(f"rate must be finite and nonnegative, got {rate_hz}")


def afterpulse_yield(rate_at_detector_hz: float, det: DetectorModel) -> float:
    """Probability y that a detection is followed by a counted afterpulse.

    The delay δ ~ Exp(τ_ap) must clear the parent's dead time, and the
    detector must not have been taken by a primary arrival in the meantime
    (exact for δ < 2·τ_dead, first order beyond). With a = R + 1/τ_ap:

        y = p · e^(-τ_dead/τ_ap) · [(1 - e^(-a·τ_dead))/(a·τ_ap) + e^(-a·τ_dead)]
    """
    _check_rate(rate_at_detector_hz)
    p = det.afterpulse_prob
    if p == 0:
        return 0.0
    dead = det.dead_time_s
    if dead == 0:
        return p
    tau = det.afterpulse_tau_ns * 1e-9
    a = rate_at_detector_hz + 1.0 / tau
    recovered = -math.expm1(-a * dead) / (a * tau) + math.exp(-a * dead)
    return p * math.exp(-dead / tau) * recovered


def _afterpulse_gain(rate_at_detector_hz: float, det: DetectorModel) -> float:
    y = afterpulse_yield(rate_at_detector_hz, det)
    if y >= 1.0:
        raise DetectionModelError(
            f"afterpulse cascade does not terminate (counted afterpulse probability {y:g})"
        )
    return 1.0 / (1.0 - y)


def dynamic_efficiency(rate_at_detector_hz: float, det: DetectorModel) -> float:
    """Livetime fraction of a non-paralyzable detector, in (0, 1].

    Solves live = 1 - S·τ with S = R·live/(1 - y), y from
    :func:`afterpulse_yield`; the solution is 1/(1 + R·τ/(1 - y)).
    """
    _check_rate(rate_at_detector_hz)
    load = _afterpulse_gain(rate_at_detector_hz, det) * rate_at_detector_hz * det.dead_time_s
    if load == 0:
        return 1.0

    def livetime(live: float) -> float:
        return 1.0 - load * live

    try:
        live = fixed_point(
            livetime, 1.0, xtol=_FIXED_POINT_XTOL, maxiter=_FIXED_POINT_MAXITER
        )
    except RuntimeError as e:
        raise DetectionModelError(f"livetime iteration did not converge: {e}") from e
    return float(live)


def capture_fraction(win: CoincidenceWindow) -> float:
    """F = erf(√ln2 · Δt/σ_total)."""
    return float(erf(_SQRT_LN2 * win.window_ps / win.sigma_total_ps))


def combine_jitter(components_ps: Sequence[float]) -> float:
    """Root-sum-square of FWHM jitter contributions."""
    if len(components_ps) == 0:
        raise DetectionModelError("no jitter components given")
    arr = np.asarray(components_ps, dtype=float)
    if np.any(arr <= 0):
        raise DetectionModelError(f"jitter components must be positive, got {list(components_ps)}")
    return float(np.sqrt(np.sum(arr**2)))


def window_for(
    signal: DetectorModel,
    idler: DetectorModel,
    window_ps: float = 0.0,
    jitter_multiple: float = 10.0,
) -> CoincidenceWindow:
    """Window for a detector pair; Δt defaults to ``jitter_multiple`` × σ_total."""
    parts = [j for j in (signal.jitter_fwhm_ps, idler.jitter_fwhm_ps) if j > 0]
    sigma = combine_jitter(parts) if parts else 1.0
    return CoincidenceWindow(window_ps=window_ps or jitter_multiple * sigma, sigma_total_ps=sigma)


def _arm_singles(pgr_hz: float, arm: ArmBudget) -> Tuple[float, float]:
    offered = pgr_hz * arm.eta_static + arm.detector.dark_rate_hz
    eta_dyn = dynamic_efficiency(offered, arm.detector)
    singles = _afterpulse_gain(offered, arm.detector) * offered * eta_dyn
    return eta_dyn, singles


def predict_rates(
    pgr_hz: float, signal: ArmBudget, idler: ArmBudget, win: CoincidenceWindow
) -> RatePrediction:
    """Measured singles, coincidences and heralding efficiencies at a pair rate."""
    _check_rate(pgr_hz)
    dyn_s, singles_s = _arm_singles(pgr_hz, signal)
    dyn_i, singles_i = _arm_singles(pgr_hz, idler)
    eta_s = signal.eta_static * dyn_s
    eta_i = idler.eta_static * dyn_i

    true = pgr_hz * eta_s * eta_i
    accidental = singles_s * singles_i * win.window_s
    fraction = capture_fraction(win)

    for label, singles in (("signal", singles_s), ("idler", singles_i)):
        occupancy = singles * win.window_s
        if occupancy > _OCCUPANCY_WARN:
            logger.warning(
                f"{label} singles {singles:.4g} Hz give S·Δt = {occupancy:.3g}; "
                "the accidental estimate assumes S·Δt ≪ 1"
            )

    return RatePrediction(
        pgr_hz=pgr_hz,
        singles_signal_hz=singles_s,
        singles_idler_hz=singles_i,
        true_hz=true,
        accidental_hz=accidental,
        measured_hz=fraction * true + accidental,
        capture_fraction=fraction,
        herald_signal=true / singles_i if singles_i > 0 else 0.0,
        herald_idler=true / singles_s if singles_s > 0 else 0.0,
        eta_eff_signal=eta_s,
        eta_eff_idler=eta_i,
        eta_dynamic_signal=dyn_s,
        eta_dynamic_idler=dyn_i,
    )


def predict_sweep(
    powers_mw: Sequence[float],
    brightness_hz_per_mw: float,
    signal: ArmBudget,
    idler: ArmBudget,
    win: CoincidenceWindow,
) -> List[SweepRow]:
    """predict_rates over pump power with pgr = brightness × power."""
    if brightness_hz_per_mw < 0:
        raise DetectionModelError("brightness must be nonnegative")
    rows = []
    for power in powers_mw:
        if power < 0:
            raise DetectionModelError(f"pump power must be nonnegative, got {power} mW")
        rows.append(
            SweepRow(
                power_mw=power,
                prediction=predict_rates(brightness_hz_per_mw * power, signal, idler, win),
            )
        )
    logger.debug(f"Predicted {len(rows)} sweep points")
    return rows
