"""Quasi-phase-matching solver and sinc² spectral model.

Collinear, plane-wave, type-0 phase matching: all three fields see the same
principal-axis index. The pump is monochromatic, so the joint spectrum is a
one-dimensional function of the idler frequency.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import brentq

from ..exceptions import PairForgeError, PhaseMatchingError
from .dispersion import DispersionTable, group_index, wave_number
from .units import SPEED_OF_LIGHT, ghz_to_nm, mm_to_um, nm_to_ghz

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

# sinc(x)^2 = 1/2 at |x| = 1.39155737825151 with sinc(x) = sin(x)/x.
SINC2_HALF_MAX_X = 1.3915573782515103

# Speed of light in µm·GHz, for Δk [rad/µm] versus frequency [GHz].
_C_UM_GHZ = SPEED_OF_LIGHT * 1e-3

_ENERGY_RTOL = 1e-9
_ROOT_XTOL_GHZ = 1e-7
_WINDOW_IN_FWHM = 20.0
_STEPS_PER_FWHM = 8.0


class CrystalSpec(BaseModel):
    """Geometry, poling and operating point of one nonlinear crystal."""

    model_config = ConfigDict(frozen=True)

    dispersion: DispersionTable
    length_mm: float = Field(..., gt=0)
    poling_period_um: Optional[float] = Field(None, gt=0)
    temperature_c: float = 25.0
    aperture_mm: Tuple[float, float] = (1.0, 1.0)

    @field_validator("aperture_mm")
    @classmethod
    def validate_aperture(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if min(v) <= 0:
            raise ValueError("aperture must be positive")
        return v

    def with_period(self, poling_period_um: Optional[float]) -> "CrystalSpec":
        return self.model_copy(update={"poling_period_um": poling_period_um})


class SpdcTriple(BaseModel):
    """Pump, signal and idler vacuum wavelengths in nm."""

    model_config = ConfigDict(frozen=True)

    pump_nm: float = Field(..., gt=0)
    signal_nm: float = Field(..., gt=0)
    idler_nm: float = Field(..., gt=0)

    @model_validator(mode="after")
    def check_energy(self) -> "SpdcTriple":
        lhs = 1.0 / self.pump_nm
        rhs = 1.0 / self.signal_nm + 1.0 / self.idler_nm
        if abs(lhs - rhs) > _ENERGY_RTOL * lhs:
            raise ValueError(
                f"energy not conserved: 1/{self.pump_nm} != 1/{self.signal_nm} + 1/{self.idler_nm}"
            )
        if self.signal_nm > self.idler_nm:
            raise ValueError("signal must be the shorter daughter wavelength")
        return self

    @classmethod
    def from_pump(cls, pump_nm: float, fixed_nm: float) -> "SpdcTriple":
        """Complete a triple from the pump and one daughter wavelength."""
        other = conjugate_wavelength(pump_nm, fixed_nm)
        signal, idler = sorted((fixed_nm, other))
        return cls(pump_nm=pump_nm, signal_nm=signal, idler_nm=idler)


class SpectralLine(BaseModel):
    """Sampled spectrum on an optical-frequency axis."""

    center_frequency_ghz: float
    fwhm_ghz: float = Field(..., gt=0)
    samples: List[Tuple[float, float]]
    undersampled: bool = False

    @field_validator("samples")
    @classmethod
    def validate_samples(cls, v: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        freqs = np.array([s[0] for s in v])
        if freqs.size > 1 and np.any(np.diff(freqs) < 0):
            raise ValueError("samples must be sorted by frequency")
        intens = np.array([s[1] for s in v])
        if intens.size and (intens.min() < 0 or intens.max() > 1.0 + 1e-9):
            raise ValueError("relative intensities must lie in [0, 1]")
        return v

    @property
    def frequencies_ghz(self) -> FloatArray:
        return np.array([s[0] for s in self.samples], dtype=float)

    @property
    def intensities(self) -> FloatArray:
        return np.array([s[1] for s in self.samples], dtype=float)


class TuningPoint(BaseModel):
    """One row of a tuning curve; failed points carry the error text."""

    pump_nm: float
    signal_nm: float
    idler_nm: float
    poling_period_um: Optional[float] = None
    fwhm_ghz: Optional[float] = None
    error: Optional[str] = None


def conjugate_wavelength(pump_nm: float, fixed_nm: float) -> float:
    """Daughter wavelength λ with 1/λ_pump = 1/λ + 1/λ_fixed."""
    if pump_nm <= 0:
        raise PhaseMatchingError(f"pump wavelength must be positive, got {pump_nm} nm")
    if fixed_nm <= pump_nm:
        raise PhaseMatchingError(
            f"no physical solution: fixed wavelength {fixed_nm} nm must exceed the "
            f"pump {pump_nm} nm"
        )
    return 1.0 / (1.0 / pump_nm - 1.0 / fixed_nm)


def _bulk_mismatch(spec: CrystalSpec, triple: SpdcTriple) -> float:
    table, t = spec.dispersion, spec.temperature_c
    return (
        wave_number(table, triple.pump_nm, t)
        - wave_number(table, triple.signal_nm, t)
        - wave_number(table, triple.idler_nm, t)
    )


def phase_mismatch(spec: CrystalSpec, triple: SpdcTriple) -> float:
    """Δk = k_p - k_s - k_i - 2π/Λ in rad/µm; no grating term when Λ is unset."""
    dk = _bulk_mismatch(spec, triple)
    if spec.poling_period_um is not None:
        dk -= 2.0 * np.pi / spec.poling_period_um
    return dk


def solve_poling_period(spec: CrystalSpec, triple: SpdcTriple) -> float:
    """First-order poling period Λ = 2π/(k_p - k_s - k_i) in µm; any Λ already set is ignored."""
    bulk = _bulk_mismatch(spec, triple)
    if bulk <= 0:
        raise PhaseMatchingError(
            f"no first-order QPM solution: bulk mismatch {bulk:.6g} rad/µm is not positive"
        )
    return float(2.0 * np.pi / bulk)


def _mismatch_vs_idler(
    spec: CrystalSpec, pump_nm: float, idler_ghz: FloatArray
) -> FloatArray:
    """Δk over an idler-frequency array at fixed pump (signal from energy conservation)."""
    table, t = spec.dispersion, spec.temperature_c
    signal_ghz = nm_to_ghz(pump_nm) - idler_ghz
    if np.any(signal_ghz <= 0):
        raise PhaseMatchingError("idler frequency exceeds the pump frequency")
    dk = (
        wave_number(table, pump_nm, t)
        - wave_number(table, ghz_to_nm(signal_ghz), t)
        - wave_number(table, ghz_to_nm(idler_ghz), t)
    )
    if spec.poling_period_um is not None:
        dk = dk - 2.0 * np.pi / spec.poling_period_um
    return np.asarray(dk, dtype=float)


def _sinc_squared(x: FloatArray) -> FloatArray:
    return np.sinc(x / np.pi) ** 2


def line_fwhm(frequencies_ghz: FloatArray, intensities: FloatArray) -> Tuple[float, float]:
    """FWHM and centre of a sampled single-peaked line, by linear interpolation."""
    if frequencies_ghz.size < 3:
        raise PhaseMatchingError("a line needs at least three samples")
    peak = int(np.argmax(intensities))
    half = intensities[peak] / 2.0
    if half <= 0:
        raise PhaseMatchingError("line has no positive intensity")

    left = np.nonzero(intensities[:peak] < half)[0]
    right = np.nonzero(intensities[peak:] < half)[0]
    if left.size == 0 or right.size == 0:
        raise PhaseMatchingError(
            f"grid {frequencies_ghz[0]:.6g}..{frequencies_ghz[-1]:.6g} GHz does not "
            "bracket both half-maximum points"
        )
    i = left[-1]
    j = peak + right[0]
    lo = np.interp(half, intensities[i : i + 2], frequencies_ghz[i : i + 2])
    # interp needs increasing x: walk the falling edge backwards
    hi = np.interp(half, intensities[j - 1 : j + 1][::-1], frequencies_ghz[j - 1 : j + 1][::-1])
    return float(hi - lo), float((hi + lo) / 2.0)


def spectral_line(
    freqs: FloatArray, intens: FloatArray, undersampled: bool = False
) -> SpectralLine:
    """Wrap sorted samples as a SpectralLine with its measured FWHM and centre."""
    fwhm, center = line_fwhm(freqs, intens)
    return SpectralLine(
        center_frequency_ghz=center,
        fwhm_ghz=fwhm,
        samples=list(zip(freqs.tolist(), intens.tolist())),
        undersampled=undersampled,
    )


def joint_spectral_intensity(
    spec: CrystalSpec, pump_nm: float, idler_grid_nm: Sequence[float]
) -> SpectralLine:
    """sinc²(ΔkL/2) over an idler wavelength grid, sampled against idler frequency."""
    if len(idler_grid_nm) == 0:
        raise PhaseMatchingError("idler grid is empty")
    if spec.poling_period_um is None:
        raise PhaseMatchingError("crystal has no poling period; solve one first")

    freqs = np.sort(nm_to_ghz(np.asarray(idler_grid_nm, dtype=float)))
    dk = _mismatch_vs_idler(spec, pump_nm, freqs)
    intens = _sinc_squared(dk * mm_to_um(spec.length_mm) / 2.0)
    return spectral_line(freqs, intens)


def sinc_squared_line(
    center_ghz: float, fwhm_ghz: float, frequencies_ghz: Sequence[float]
) -> SpectralLine:
    """Ideal sinc² line with a prescribed FWHM."""
    if fwhm_ghz <= 0:
        raise PhaseMatchingError("line FWHM must be positive")
    freqs = np.sort(np.asarray(frequencies_ghz, dtype=float))
    x = 2.0 * SINC2_HALF_MAX_X * (freqs - center_ghz) / fwhm_ghz
    return spectral_line(freqs, _sinc_squared(x))


def estimated_fwhm_ghz(spec: CrystalSpec, pump_nm: float, idler_nm: float) -> float:
    """Linearized FWHM 0.8859·c / (L·|n_g,s - n_g,i|)."""
    signal_nm = conjugate_wavelength(pump_nm, idler_nm)
    t = spec.temperature_c
    dng = abs(group_index(spec.dispersion, signal_nm, t) - group_index(spec.dispersion, idler_nm, t))
    idler_ghz = nm_to_ghz(idler_nm)
    if dng == 0:
        return 0.05 * idler_ghz
    est = 4.0 * SINC2_HALF_MAX_X * _C_UM_GHZ / (2.0 * np.pi * mm_to_um(spec.length_mm) * dng)
    return float(min(est, 0.05 * idler_ghz))


def _idler_window(
    spec: CrystalSpec, pump_nm: float, center_ghz: float, half_width: float
) -> Tuple[float, float]:
    """Search window intersected with the range where both daughters are tabulated."""
    lam_lo, lam_hi = spec.dispersion.valid_range_um
    nu_min, nu_max = nm_to_ghz(lam_hi * 1e3), nm_to_ghz(lam_lo * 1e3)
    pump_ghz = nm_to_ghz(pump_nm)
    lo = max(center_ghz - half_width, nu_min, pump_ghz - nu_max)
    hi = min(center_ghz + half_width, nu_max, pump_ghz - nu_min)
    return lo, hi


def half_maximum_points(
    spec: CrystalSpec,
    pump_nm: float,
    idler_center_nm: float,
    search_step_ghz: Optional[float] = None,
) -> Tuple[float, float, float]:
    """Idler frequencies (low, peak, high) in GHz where sinc² is ½, 1, ½.

    Without a poling period the grating is solved at the given centre, which
    puts the peak there exactly. With a period, the peak is the root of Δk
    closest to the centre inside the search window.
    """
    center_ghz = float(nm_to_ghz(idler_center_nm))
    if spec.poling_period_um is None:
        triple = SpdcTriple.from_pump(pump_nm, idler_center_nm)
        spec = spec.with_period(solve_poling_period(spec, triple))
        peak: Optional[float] = center_ghz
    else:
        peak = None

    est = estimated_fwhm_ghz(spec, pump_nm, idler_center_nm)
    step = search_step_ghz or est / _STEPS_PER_FWHM
    lo_bound, hi_bound = _idler_window(spec, pump_nm, center_ghz, _WINDOW_IN_FWHM * est)
    length_um = mm_to_um(spec.length_mm)

    def dk(nu: float) -> float:
        return float(_mismatch_vs_idler(spec, pump_nm, np.array([nu]))[0])

    def g(nu: float) -> float:
        return float(_sinc_squared(np.array([dk(nu) * length_um / 2.0]))[0]) - 0.5

    if peak is None:
        grid = np.arange(lo_bound, hi_bound + step, step)
        grid = grid[grid <= hi_bound]
        values = _mismatch_vs_idler(spec, pump_nm, grid)
        flips = np.nonzero(np.sign(values[:-1]) != np.sign(values[1:]))[0]
        if flips.size == 0:
            raise PhaseMatchingError(
                f"no phase-matching peak in the idler window {lo_bound:.6g}..{hi_bound:.6g} GHz"
            )
        k = flips[np.argmin(np.abs(grid[flips] - center_ghz))]
        peak = float(brentq(dk, grid[k], grid[k + 1], xtol=_ROOT_XTOL_GHZ))
    peak_ghz: float = peak

    def crossing(direction: int) -> float:
        prev = peak_ghz
        while True:
            cur = prev + direction * step
            if not lo_bound <= cur <= hi_bound:
                raise PhaseMatchingError(
                    f"no half-maximum crossing within the idler window "
                    f"{lo_bound:.6g}..{hi_bound:.6g} GHz"
                )
            if g(cur) < 0:
                return float(brentq(g, min(prev, cur), max(prev, cur), xtol=_ROOT_XTOL_GHZ))
            prev = cur

    return crossing(-1), peak_ghz, crossing(+1)


def emission_bandwidth(
    spec: CrystalSpec,
    pump_nm: float,
    idler_center_nm: float,
    search_step_ghz: Optional[float] = None,
) -> float:
    """FWHM of the idler sinc² spectrum in GHz."""
    lo, _, hi = half_maximum_points(spec, pump_nm, idler_center_nm, search_step_ghz)
    return hi - lo


def tuning_curve(
    spec: CrystalSpec,
    pump_range_nm: Tuple[float, float],
    idler_fixed_nm: float,
    n_points: int,
    fixed_period: bool = False,
    workers: int = 1,
) -> List[TuningPoint]:
    """Signal wavelength and emission bandwidth across a pump-wavelength range.

    By default Λ is re-solved at every pump wavelength so each point sits on
    its own phase-matching peak. With ``fixed_period`` the crystal's Λ (or
    the one solved at the range midpoint) is kept for every point.
    """
    if n_points < 2:
        raise PhaseMatchingError("a tuning curve needs at least two points")
    lo, hi = sorted(pump_range_nm)
    pumps = np.linspace(lo, hi, n_points)

    fixed: Optional[float] = None
    if fixed_period:
        fixed = spec.poling_period_um
        if fixed is None:
            mid = float((lo + hi) / 2.0)
            fixed = solve_poling_period(spec, SpdcTriple.from_pump(mid, idler_fixed_nm))
            logger.info(f"Fixed-period tuning curve uses Λ = {fixed:.6g} µm solved at {mid:.6g} nm")

    def evaluate(pump_nm: float) -> TuningPoint:
        signal_nm = conjugate_wavelength(pump_nm, idler_fixed_nm)
        point = TuningPoint(pump_nm=pump_nm, signal_nm=signal_nm, idler_nm=idler_fixed_nm)
        try:
            period = fixed
            if period is None:
                triple = SpdcTriple.from_pump(pump_nm, idler_fixed_nm)
                period = solve_poling_period(spec, triple)
            fwhm = emission_bandwidth(spec.with_period(period), pump_nm, idler_fixed_nm)
            return point.model_copy(update={"poling_period_um": period, "fwhm_ghz": fwhm})
        except PairForgeError as e:
            logger.warning(f"Tuning point at {pump_nm:.6g} nm failed: {e}")
            return point.model_copy(update={"error": str(e)})

    runner: Callable[[float], TuningPoint] = evaluate
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(runner, pumps.tolist()))
    return [runner(p) for p in pumps.tolist()]
