"""Tests for quasi-phase-matching, the sinc² spectrum and tuning curves."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from pairforge.exceptions import PhaseMatchingError
from pairforge.tools.phasematch import (
    SINC2_HALF_MAX_X,
    CrystalSpec,
    SpdcTriple,
    conjugate_wavelength,
    emission_bandwidth,
    half_maximum_points,
    joint_spectral_intensity,
    line_fwhm,
    phase_mismatch,
    sinc_squared_line,
    solve_poling_period,
    tuning_curve,
)
from pairforge.tools.units import ghz_to_nm, nm_to_ghz

PUMP_NM = 473.0
IDLER_NM = 1550.0


@pytest.fixture
def triple() -> SpdcTriple:
    return SpdcTriple.from_pump(PUMP_NM, IDLER_NM)


@pytest.fixture
def poled(crystal: CrystalSpec, triple: SpdcTriple) -> CrystalSpec:
    return crystal.with_period(solve_poling_period(crystal, triple))


@pytest.mark.unit
class TestConjugateWavelength:
    def test_design_point_signal(self) -> None:
        assert conjugate_wavelength(473.0, 1550.0) == pytest.approx(680.73, abs=0.1)

    def test_degenerate_point(self) -> None:
        assert conjugate_wavelength(532.0, 1064.0) == pytest.approx(1064.0, rel=1e-12)

    def test_other_pump(self) -> None:
        assert conjugate_wavelength(460.0, 1550.0) == pytest.approx(654.1, abs=0.05)

    def test_no_physical_solution(self) -> None:
        with pytest.raises(PhaseMatchingError, match="no physical solution"):
            conjugate_wavelength(473.0, 400.0)

    def test_triple_conserves_energy(self, triple: SpdcTriple) -> None:
        lhs = 1.0 / triple.pump_nm
        rhs = 1.0 / triple.signal_nm + 1.0 / triple.idler_nm
        assert lhs == pytest.approx(rhs, rel=1e-9)
        assert triple.signal_nm < triple.idler_nm

    def test_triple_rejects_energy_violation(self) -> None:
        with pytest.raises(ValidationError, match="energy"):
            SpdcTriple(pump_nm=473.0, signal_nm=700.0, idler_nm=1550.0)


@pytest.mark.unit
class TestPolingPeriod:
    def test_solved_period_zeroes_mismatch(self, poled: CrystalSpec, triple: SpdcTriple) -> None:
        assert abs(phase_mismatch(poled, triple)) < 1e-9

    def test_design_period_regression(self, poled: CrystalSpec) -> None:
        assert poled.poling_period_um == pytest.approx(6.888, abs=0.01)

    def test_without_grating_is_bulk_mismatch(
        self, crystal: CrystalSpec, poled: CrystalSpec, triple: SpdcTriple
    ) -> None:
        bulk = phase_mismatch(crystal, triple)
        assert poled.poling_period_um is not None
        assert bulk == pytest.approx(2 * math.pi / poled.poling_period_um, rel=1e-12)

    def test_half_sinc_argument_at_design_point(self, poled: CrystalSpec, triple: SpdcTriple) -> None:
        assert abs(phase_mismatch(poled, triple) * poled.length_mm * 1e3 / 2) < 1e-3

    def test_small_temperature_sensitivity(self, crystal: CrystalSpec, triple: SpdcTriple) -> None:
        warm = crystal.model_copy(update={"temperature_c": 50.0})
        p40 = solve_poling_period(crystal, triple)
        p50 = solve_poling_period(warm, triple)
        assert p40 != p50
        assert abs(p50 - p40) / p40 < 1e-2

    def test_ignores_existing_period(self, poled: CrystalSpec, triple: SpdcTriple) -> None:
        assert solve_poling_period(poled.with_period(3.0), triple) == pytest.approx(
            poled.poling_period_um, rel=1e-12
        )

    def test_rejects_nonpositive_length(self, crystal: CrystalSpec) -> None:
        with pytest.raises(ValidationError):
            CrystalSpec(dispersion=crystal.dispersion, length_mm=0.0)


@pytest.mark.unit
class TestJointSpectralIntensity:
    def test_peak_is_one_at_phase_matching(self, poled: CrystalSpec) -> None:
        grid = np.linspace(1540.0, 1560.0, 201)
        line = joint_spectral_intensity(poled, PUMP_NM, grid)
        freqs = line.frequencies_ghz
        idx = int(np.argmin(np.abs(freqs - nm_to_ghz(IDLER_NM))))
        assert line.intensities[idx] == pytest.approx(1.0, abs=1e-9)
        assert np.all((line.intensities >= 0) & (line.intensities <= 1))
        assert np.all(np.diff(freqs) > 0)

    def test_half_maximum_at_sinc_crossings(self, poled: CrystalSpec) -> None:
        lo, peak, hi = half_maximum_points(poled, PUMP_NM, IDLER_NM)
        assert lo < peak < hi
        pump_ghz = nm_to_ghz(PUMP_NM)
        for idler_ghz in (lo, hi):
            triple = SpdcTriple(
                pump_nm=PUMP_NM,
                signal_nm=ghz_to_nm(pump_ghz - idler_ghz),
                idler_nm=ghz_to_nm(idler_ghz),
            )
            x = phase_mismatch(poled, triple) * poled.length_mm * 1e3 / 2
            assert abs(x) == pytest.approx(SINC2_HALF_MAX_X, rel=1e-5)

    def test_requires_period(self, crystal: CrystalSpec) -> None:
        with pytest.raises(PhaseMatchingError, match="poling period"):
            joint_spectral_intensity(crystal, PUMP_NM, [1550.0])

    def test_empty_grid(self, poled: CrystalSpec) -> None:
        with pytest.raises(PhaseMatchingError, match="empty"):
            joint_spectral_intensity(poled, PUMP_NM, [])

    def test_dense_grid_matches_bisection(self, poled: CrystalSpec) -> None:
        center = nm_to_ghz(IDLER_NM)
        freqs = np.linspace(center - 750.0, center + 750.0, 100_001)
        line = joint_spectral_intensity(poled, PUMP_NM, ghz_to_nm(freqs))
        assert line.fwhm_ghz == pytest.approx(
            emission_bandwidth(poled, PUMP_NM, IDLER_NM), rel=1e-3
        )


@pytest.mark.unit
class TestSincSquaredLine:
    def test_prescribed_width(self) -> None:
        freqs = np.linspace(-1000.0, 1000.0, 4001)
        line = sinc_squared_line(0.0, 300.0, freqs)
        assert line.fwhm_ghz == pytest.approx(300.0, rel=1e-3)
        assert line.center_frequency_ghz == pytest.approx(0.0, abs=1e-6)

    def test_first_null(self) -> None:
        fwhm = 300.0
        null = math.pi * fwhm / (2 * SINC2_HALF_MAX_X)
        freqs = np.linspace(-null, null, 1001)
        line = sinc_squared_line(0.0, fwhm, freqs)
        assert line.intensities[0] == pytest.approx(0.0, abs=1e-12)
        assert line.intensities[-1] == pytest.approx(0.0, abs=1e-12)

    def test_half_max_constant(self) -> None:
        assert (math.sin(SINC2_HALF_MAX_X) / SINC2_HALF_MAX_X) ** 2 == pytest.approx(0.5, abs=1e-12)

    def test_line_fwhm_needs_both_crossings(self) -> None:
        freqs = np.linspace(0.0, 10.0, 11)
        with pytest.raises(PhaseMatchingError, match="bracket"):
            line_fwhm(freqs, np.linspace(0.0, 1.0, 11))


@pytest.mark.unit
class TestEmissionBandwidth:
    def test_design_point_near_300_ghz(self, crystal: CrystalSpec) -> None:
        fwhm = emission_bandwidth(crystal, PUMP_NM, IDLER_NM)
        assert 255.0 <= fwhm <= 345.0
        assert fwhm == pytest.approx(282.4, abs=1.0)

    def test_doubling_length_halves_width(self, crystal: CrystalSpec) -> None:
        long = crystal.model_copy(update={"length_mm": 20.0})
        ratio = emission_bandwidth(long, PUMP_NM, IDLER_NM) / emission_bandwidth(
            crystal, PUMP_NM, IDLER_NM
        )
        assert ratio == pytest.approx(0.5, rel=0.05)

    def test_narrower_for_shorter_pump(self, crystal: CrystalSpec) -> None:
        assert emission_bandwidth(crystal, 460.0, IDLER_NM) < emission_bandwidth(
            crystal, 490.0, IDLER_NM
        )

    def test_resolution_independent(self, poled: CrystalSpec) -> None:
        coarse = emission_bandwidth(poled, PUMP_NM, IDLER_NM)
        fine = emission_bandwidth(poled, PUMP_NM, IDLER_NM, search_step_ghz=1.0)
        assert fine == pytest.approx(coarse, rel=1e-4)

    def test_supplied_period_finds_same_peak(self, crystal: CrystalSpec, poled: CrystalSpec) -> None:
        _, peak, _ = half_maximum_points(poled, PUMP_NM, IDLER_NM)
        assert peak == pytest.approx(nm_to_ghz(IDLER_NM), abs=1e-3)
        assert emission_bandwidth(poled, PUMP_NM, IDLER_NM) == pytest.approx(
            emission_bandwidth(crystal, PUMP_NM, IDLER_NM), rel=1e-6
        )

    def test_no_peak_in_window(self, poled: CrystalSpec) -> None:
        detuned = poled.with_period(5.0)
        with pytest.raises(PhaseMatchingError, match="no phase-matching peak"):
            emission_bandwidth(detuned, PUMP_NM, IDLER_NM)


@pytest.mark.unit
class TestTuningCurve:
    def test_signal_and_bandwidth_increase_with_pump(self, crystal: CrystalSpec) -> None:
        points = tuning_curve(crystal, (450.0, 500.0), IDLER_NM, 11)
        assert [p.pump_nm for p in points] == sorted(p.pump_nm for p in points)
        assert all(p.error is None for p in points)
        signals = [p.signal_nm for p in points]
        widths = [p.fwhm_ghz for p in points if p.fwhm_ghz is not None]
        assert len(widths) == len(points)
        assert all(b > a for a, b in zip(signals, signals[1:]))
        assert all(b > a for a, b in zip(widths, widths[1:]))

    def test_design_pump_signal(self, crystal: CrystalSpec) -> None:
        points = tuning_curve(crystal, (463.0, 483.0), IDLER_NM, 3)
        assert points[1].pump_nm == pytest.approx(473.0)
        assert points[1].signal_nm == pytest.approx(680.7, abs=0.1)

    def test_parallel_matches_serial(self, crystal: CrystalSpec) -> None:
        serial = tuning_curve(crystal, (450.0, 500.0), IDLER_NM, 5)
        parallel = tuning_curve(crystal, (450.0, 500.0), IDLER_NM, 5, workers=3)
        assert serial == parallel

    def test_fixed_period_shares_grating(self, crystal: CrystalSpec) -> None:
        points = tuning_curve(crystal, (472.0, 474.0), IDLER_NM, 3, fixed_period=True)
        periods = {p.poling_period_um for p in points if p.error is None}
        assert len(periods) == 1
        assert points[1].error is None

    def test_failed_point_is_recorded(self, crystal: CrystalSpec) -> None:
        # a 390 nm pump lies below the table's lower bound
        points = tuning_curve(crystal, (390.0, 420.0), IDLER_NM, 3)
        assert len(points) == 3
        assert points[0].error is not None and "lower bound" in points[0].error
        assert points[0].fwhm_ghz is None
        assert points[1].error is None and points[2].error is None

    def test_needs_two_points(self, crystal: CrystalSpec) -> None:
        with pytest.raises(PhaseMatchingError):
            tuning_curve(crystal, (450.0, 500.0), IDLER_NM, 1)
