"""Tests for the polarization-state model and visibility estimators."""

import logging
import math
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from pairforge.exceptions import PolarizationError, StreamFormatError
from pairforge.tools.polarization import (
    CorrelationTable,
    EntangledStateModel,
    basis_angles,
    bootstrap_uncertainty,
    characterize,
    density_matrix,
    fidelity_bound,
    joint_probability,
    outcome_probabilities,
    pam_projection_angles,
    read_correlation_tables,
    tables_to_frame,
    uncertainty,
    visibility,
    visibility_vs_phase,
)
from pairforge.tools.tables import write_table

PHI_PLUS = EntangledStateModel()
DA_TABLE = CorrelationTable(basis="DA", counts=(4850, 75, 60, 4700))


@pytest.mark.unit
class TestStateModel:
    def test_phi_plus_probabilities(self) -> None:
        assert joint_probability(PHI_PLUS, 0.0, 0.0) == pytest.approx(0.5)
        assert joint_probability(PHI_PLUS, 0.0, math.pi / 2) == pytest.approx(0.0, abs=1e-15)
        assert joint_probability(PHI_PLUS, math.pi / 4, math.pi / 4) == pytest.approx(0.5)

    def test_phi_minus_diagonal_null(self) -> None:
        state = EntangledStateModel(phase_rad=math.pi)
        assert joint_probability(state, math.pi / 4, math.pi / 4) == pytest.approx(0.0, abs=1e-15)

    def test_broadcasts_over_arrays(self) -> None:
        angles = np.linspace(0.0, math.pi, 7)
        p = joint_probability(PHI_PLUS, angles, 0.0)
        assert isinstance(p, np.ndarray)
        assert p.shape == (7,)
        assert np.allclose(p, 0.5 * np.cos(angles) ** 2)

    @pytest.mark.parametrize("phase,balance,p_mix", [(0.0, 0.5, 0.0), (1.3, 0.3, 0.2), (-2.0, 0.9, 1.0)])
    def test_density_matrix_is_physical(self, phase: float, balance: float, p_mix: float) -> None:
        rho = density_matrix(
            EntangledStateModel(phase_rad=phase, amplitude_balance=balance, p_mix=p_mix)
        )
        assert np.allclose(rho, rho.conj().T)
        assert np.trace(rho).real == pytest.approx(1.0)
        assert np.all(np.linalg.eigvalsh(rho) > -1e-12)

    @pytest.mark.parametrize("basis", ["HV", "DA"])
    def test_basis_outcomes_sum_to_one(self, basis: str) -> None:
        state = EntangledStateModel(phase_rad=0.7, amplitude_balance=0.4, p_mix=0.1)
        angles = basis_angles(basis)
        assert outcome_probabilities(state, angles, angles).sum() == pytest.approx(1.0)

    def test_pbs_ports(self) -> None:
        assert pam_projection_angles(0.0) == pytest.approx((0.0, -math.pi / 2))
        assert pam_projection_angles(math.pi / 8) == pytest.approx((math.pi / 4, -math.pi / 4))

    def test_unknown_basis(self) -> None:
        with pytest.raises(PolarizationError, match="unknown basis"):
            basis_angles("RL")

    def test_state_bounds(self) -> None:
        with pytest.raises(ValidationError):
            EntangledStateModel(p_mix=1.5)


@pytest.mark.unit
class TestVisibilityVsPhase:
    def test_da_follows_cosine(self) -> None:
        phases = np.linspace(-math.pi, math.pi, 16)
        for point in visibility_vs_phase(phases):
            assert point.v_da == pytest.approx(math.cos(point.phase_rad), abs=1e-6)
            assert point.v_hv == pytest.approx(1.0, abs=1e-12)

    def test_mixing_scales_da_only(self) -> None:
        phases = [0.0, 0.5, 2.0]
        for point in visibility_vs_phase(phases, p_mix=0.3):
            assert point.v_da == pytest.approx(0.7 * math.cos(point.phase_rad), abs=1e-6)
            assert point.v_hv == pytest.approx(1.0, abs=1e-12)

    def test_unbalanced_amplitudes_lower_da(self) -> None:
        (point,) = visibility_vs_phase([0.0], amplitude_balance=0.8)
        assert point.v_da == pytest.approx(2 * math.sqrt(0.8 * 0.2), abs=1e-6)


@pytest.mark.unit
class TestVisibility:
    def test_perfect_table(self) -> None:
        assert visibility(CorrelationTable(basis="HV", counts=(100, 0, 0, 100))) == 1.0

    def test_typical_table(self) -> None:
        table = CorrelationTable(basis="HV", counts=(98, 2, 4, 96))
        assert visibility(table) == pytest.approx(0.94)

    def test_reference_da_table(self) -> None:
        assert visibility(DA_TABLE) == pytest.approx(0.97212, abs=1e-5)

    def test_accidental_correction_raises_visibility(self) -> None:
        rng = np.random.default_rng(5)
        for _ in range(20):
            same = rng.integers(500, 5000, size=2)
            cross = rng.integers(10, 400, size=2)
            acc = float(rng.uniform(0.0, 9.0))
            counts = (int(same[0]), int(cross[0]), int(cross[1]), int(same[1]))
            raw = CorrelationTable(basis="DA", counts=counts)
            corrected = CorrelationTable(basis="DA", counts=counts, accidentals=(acc,) * 4)
            assert visibility(corrected) >= visibility(raw)

    def test_negative_corrected_cells_warn(self, caplog: pytest.LogCaptureFixture) -> None:
        table = CorrelationTable(basis="HV", counts=(10, 0, 0, 10), accidentals=(1.0,) * 4)
        assert table.has_negative_corrected
        with caplog.at_level(logging.WARNING, logger="pairforge.tools.polarization"):
            visibility(table)
        assert "below their accidental estimate" in caplog.text

    def test_nothing_above_accidentals(self) -> None:
        table = CorrelationTable(basis="HV", counts=(1, 1, 1, 1), accidentals=(1.0,) * 4)
        with pytest.raises(PolarizationError, match="no coincidences"):
            visibility(table)

    def test_negative_counts_are_invalid(self) -> None:
        with pytest.raises(ValidationError, match="nonnegative"):
            CorrelationTable(basis="HV", counts=(10, -1, 0, 10))

    def test_fidelity_bound(self) -> None:
        assert fidelity_bound(0.973, 0.949) == pytest.approx(0.961)
        assert fidelity_bound(1.0, 1.0) == 1.0

    def test_fidelity_bound_range(self) -> None:
        with pytest.raises(PolarizationError, match="v_da"):
            fidelity_bound(0.9, 1.2)


@pytest.mark.unit
class TestUncertainty:
    def test_reference_delta_method(self) -> None:
        assert uncertainty(DA_TABLE) == pytest.approx(2.383e-3, rel=1e-3)

    def test_scales_as_inverse_root_counts(self) -> None:
        big = CorrelationTable(basis="DA", counts=tuple(100 * c for c in DA_TABLE.counts))
        assert uncertainty(big) == pytest.approx(uncertainty(DA_TABLE) / 10, rel=1e-9)

    def test_perfect_table_is_boundary_degenerate(self) -> None:
        estimate = characterize(CorrelationTable(basis="HV", counts=(100, 0, 0, 100)), n_resamples=50)
        assert estimate.standard_error == 0.0
        assert estimate.boundary_degenerate

    def test_bootstrap_agrees_with_delta_method(self) -> None:
        boot = bootstrap_uncertainty(DA_TABLE, n_resamples=10_000, seed=3)
        assert boot == pytest.approx(uncertainty(DA_TABLE), rel=0.1)

    def test_bootstrap_is_seeded(self) -> None:
        assert bootstrap_uncertainty(DA_TABLE, 500, seed=1) == bootstrap_uncertainty(DA_TABLE, 500, seed=1)

    def test_bootstrap_needs_resamples(self) -> None:
        with pytest.raises(PolarizationError, match="two resamples"):
            bootstrap_uncertainty(DA_TABLE, n_resamples=1)

    def test_empty_table(self) -> None:
        with pytest.raises(PolarizationError, match="zero total"):
            uncertainty(CorrelationTable(basis="HV", counts=(0, 0, 0, 0)))

    def test_characterize_without_bootstrap(self) -> None:
        estimate = characterize(DA_TABLE, n_resamples=0)
        assert estimate.bootstrap_error is None
        assert estimate.basis == "DA"
        assert not estimate.boundary_degenerate
        assert not estimate.negative_corrected


@pytest.mark.unit
class TestCorrelationTableFiles:
    def test_csv_round_trip(self, tmp_path: Path) -> None:
        tables = [
            CorrelationTable(
                basis="HV",
                counts=(980, 12, 9, 1003),
                accidentals=(1.25, 0.5, 0.5, 1.25),
                integration_time_s=10.0,
            ),
            DA_TABLE,
        ]
        path = write_table(tables_to_frame(tables), tmp_path / "tables.csv", "polarization")
        assert path.read_text(encoding="utf-8").startswith("# tool=pairforge")
        assert read_correlation_tables(path) == tables

    def test_missing_columns(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.csv"
        path.write_text("basis,c_aa,c_ab\nHV,1,2\n", encoding="utf-8")
        with pytest.raises(StreamFormatError, match="missing columns"):
            read_correlation_tables(path)

    def test_negative_count_row(self, tmp_path: Path) -> None:
        path = tmp_path / "neg.csv"
        path.write_text("basis,c_aa,c_ab,c_ba,c_bb\nHV,10,-3,0,10\n", encoding="utf-8")
        with pytest.raises(StreamFormatError, match="row 0"):
            read_correlation_tables(path)

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(StreamFormatError, match="Cannot read"):
            read_correlation_tables(tmp_path / "absent.csv")
