"""Two-photon polarization state, analyzer projections and visibility estimators.

Two-qubit vectors are ordered HH, HV, VH, VV with the signal photon first.
A linear analyzer at angle θ projects onto cos θ |H⟩ + sin θ |V⟩.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..exceptions import PolarizationError, StreamFormatError

logger = logging.getLogger(__name__)

Basis = Literal["HV", "DA"]
ArrayLike = Union[float, NDArray[np.float64]]

# HWP in front of the PBS, per basis.
DEFAULT_HWP_RAD: Dict[str, float] = {"HV": 0.0, "DA": math.pi / 8.0}

CELLS = ("aa", "ab", "ba", "bb")
TABLE_COLUMNS = (
    ["basis"]
    + [f"c_{c}" for c in CELLS]
    + [f"acc_{c}" for c in CELLS]
    + ["integration_time_s"]
)


class EntangledStateModel(BaseModel):
    """√b|HH⟩ + e^{iφ}√(1-b)|VV⟩, mixed with weight p_mix toward its H/V-dephased version."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    phase_rad: float = 0.0
    amplitude_balance: float = Field(0.5, ge=0, le=1)
    p_mix: float = Field(0.0, ge=0, le=1)


def density_matrix(state: EntangledStateModel) -> NDArray[np.complex128]:
    b = state.amplitude_balance
    psi = np.array(
        [math.sqrt(b), 0.0, 0.0, np.exp(1j * state.phase_rad) * math.sqrt(1.0 - b)],
        dtype=complex,
    )
    pure = np.outer(psi, psi.conj())
    dephased = np.diag([b, 0.0, 0.0, 1.0 - b]).astype(complex)
    return (1.0 - state.p_mix) * pure + state.p_mix * dephased


def joint_probability(
    state: EntangledStateModel, theta_signal: ArrayLike, theta_idler: ArrayLike
) -> ArrayLike:
    """Joint click probability behind linear analyzers at (θ_s, θ_i); broadcasts over arrays."""
    ts, ti = np.broadcast_arrays(
        np.asarray(theta_signal, dtype=float), np.asarray(theta_idler, dtype=float)
    )
    cs, ss = np.cos(ts), np.sin(ts)
    ci, si = np.cos(ti), np.sin(ti)
    v = np.stack([cs * ci, cs * si, ss * ci, ss * si], axis=-1)
    rho = density_matrix(state)
    p = np.einsum("...j,jk,...k->...", v, rho, v).real
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def pam_projection_angles(hwp_rad: float) -> Tuple[float, float]:
    """Analyzer angles of the transmitted and reflected PBS ports behind a HWP at α.

    The HWP maps θ to 2α - θ and the PBS transmits H, so the ports project
    onto 2α and 2α - π/2.
    """
    return 2.0 * hwp_rad, 2.0 * hwp_rad - math.pi / 2.0


def basis_angles(basis: str, hwp_rad: Optional[float] = None) -> Tuple[float, float]:
    if basis not in DEFAULT_HWP_RAD:
        raise PolarizationError(
            f"unknown basis {basis!r}; expected one of {sorted(DEFAULT_HWP_RAD)}"
        )
    return pam_projection_angles(DEFAULT_HWP_RAD[basis] if hwp_rad is None else hwp_rad)


def outcome_probabilities(
    state: EntangledStateModel,
    signal_angles: Tuple[float, float],
    idler_angles: Tuple[float, float],
) -> NDArray[np.float64]:
    """Probabilities of the four (aa, ab, ba, bb) outputs of one basis setting."""
    (sa, sb), (ia, ib) = signal_angles, idler_angles
    return np.asarray(
        joint_probability(state, np.array([sa, sa, sb, sb]), np.array([ia, ib, ia, ib])),
        dtype=float,
    )


class CorrelationTable(BaseModel):
    """Coincidence counts of one analysis basis."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    basis: Basis
    counts: Tuple[int, int, int, int] = Field(..., description="Raw C_aa, C_ab, C_ba, C_bb")
    accidentals: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    integration_time_s: Optional[float] = Field(None, gt=0)

    @field_validator("counts", "accidentals")
    @classmethod
    def validate_nonnegative(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if min(v) < 0:
            raise ValueError("counts and accidental estimates must be nonnegative")
        return v

    @property
    def corrected(self) -> NDArray[np.float64]:
        return np.asarray(self.counts, dtype=float) - np.asarray(self.accidentals, dtype=float)

    @property
    def has_negative_corrected(self) -> bool:
        return bool(np.any(self.corrected < 0))


class PhasePoint(BaseModel):
    phase_rad: float
    v_hv: float
    v_da: float


class VisibilityEstimate(BaseModel):
    basis: Basis
    visibility: float
    standard_error: float
    bootstrap_error: Optional[float] = None
    boundary_degenerate: bool = False
    negative_corrected: bool = False


def _visibility_from_cells(cells: NDArray[np.float64]) -> NDArray[np.float64]:
    """(aa + bb - ab - ba)/(sum) along the last axis; NaN where the sum is not positive."""
    same = cells[..., 0] + cells[..., 3]
    cross = cells[..., 1] + cells[..., 2]
    total = same + cross
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(total > 0, (same - cross) / total, np.nan)


def visibility(table: CorrelationTable) -> float:
    """Visibility on accidental-corrected counts."""
    if table.has_negative_corrected:
        logger.warning(
            f"{table.basis} table has cells below their accidental estimate: "
            f"{table.corrected.tolist()}"
        )
    corrected = table.corrected
    if corrected.sum() <= 0:
        raise PolarizationError(f"{table.basis} table has no coincidences above accidentals")
    return float(_visibility_from_cells(corrected))


def fidelity_bound(v_hv: float, v_da: float) -> float:
    """Lower bound (V_HV + V_DA)/2 on the Bell-state fidelity."""
    for name, v in (("v_hv", v_hv), ("v_da", v_da)):
        if not -1.0 <= v <= 1.0:
            raise PolarizationError(f"{name} = {v} is outside [-1, 1]")
    return (v_hv + v_da) / 2.0


def visibility_vs_phase(
    phases_rad: Sequence[float],
    amplitude_balance: float = 0.5,
    p_mix: float = 0.0,
) -> List[PhasePoint]:
    """Model visibilities in both bases across a grid of relative phases."""
    hv = basis_angles("HV")
    da = basis_angles("DA")
    points = []
    for phi in phases_rad:
        state = EntangledStateModel(phase_rad=phi, amplitude_balance=amplitude_balance, p_mix=p_mix)
        points.append(
            PhasePoint(
                phase_rad=phi,
                v_hv=float(_visibility_from_cells(outcome_probabilities(state, hv, hv))),
                v_da=float(_visibility_from_cells(outcome_probabilities(state, da, da))),
            )
        )
    return points


def uncertainty(table: CorrelationTable) -> float:
    """First-order Poisson standard error of the visibility.

    Accidental estimates are treated as exact; the variance of each cell is
    its raw count.
    """
    raw = np.asarray(table.counts, dtype=float)
    corrected = table.corrected
    same = corrected[0] + corrected[3]
    cross = corrected[1] + corrected[2]
    total = same + cross
    if raw.sum() <= 0 or total <= 0:
        raise PolarizationError(f"{table.basis} table has zero total counts")
    var_same = raw[0] + raw[3]
    var_cross = raw[1] + raw[2]
    d_same = 2.0 * cross / total**2
    d_cross = 2.0 * same / total**2
    return float(math.sqrt(d_same**2 * var_same + d_cross**2 * var_cross))


def bootstrap_uncertainty(
    table: CorrelationTable, n_resamples: int = 10_000, seed: int = 0
) -> float:
    """Standard deviation of the visibility over Poisson resamples of the raw counts."""
    if n_resamples < 2:
        raise PolarizationError("bootstrap needs at least two resamples")
    if sum(table.counts) <= 0:
        raise PolarizationError(f"{table.basis} table has zero total counts")
    rng = np.random.default_rng(seed)
    draws = rng.poisson(np.asarray(table.counts, dtype=float), size=(n_resamples, 4))
    v = _visibility_from_cells(draws - np.asarray(table.accidentals, dtype=float))
    v = v[np.isfinite(v)]
    if v.size < 2:
        raise PolarizationError("too few valid bootstrap resamples")
    return float(np.std(v, ddof=1))


def characterize(
    table: CorrelationTable, n_resamples: int = 10_000, seed: int = 0
) -> VisibilityEstimate:
    v = visibility(table)
    corrected = table.corrected
    same = corrected[0] + corrected[3]
    cross = corrected[1] + corrected[2]
    return VisibilityEstimate(
        basis=table.basis,
        visibility=v,
        standard_error=uncertainty(table),
        bootstrap_error=bootstrap_uncertainty(table, n_resamples, seed) if n_resamples else None,
        # the delta method collapses when one cell pair is empty
        boundary_degenerate=bool(same <= 0 or cross <= 0),
        negative_corrected=table.has_negative_corrected,
    )


def tables_to_frame(tables: Sequence[CorrelationTable]) -> pd.DataFrame:
    rows = []
    for t in tables:
        row: Dict[str, object] = {"basis": t.basis}
        row.update({f"c_{c}": n for c, n in zip(CELLS, t.counts)})
        row.update({f"acc_{c}": a for c, a in zip(CELLS, t.accidentals)})
        row["integration_time_s"] = t.integration_time_s
        rows.append(row)
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def read_correlation_tables(path: Union[str, Path]) -> List[CorrelationTable]:
    """Read correlation tables from CSV; ``#`` lines are metadata."""
    try:
        df = pd.read_csv(path, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise StreamFormatError(f"Cannot read correlation tables from {path}: {e}") from e
    missing = [c for c in TABLE_COLUMNS[:5] if c not in df.columns]
    if missing:
        raise StreamFormatError(f"{path}: missing columns {missing}")

    tables = []
    for i, row in df.iterrows():
        acc = tuple(
            float(row[f"acc_{c}"])
            if f"acc_{c}" in df.columns and pd.notna(row[f"acc_{c}"])
            else 0.0
            for c in CELLS
        )
        t_int = row.get("integration_time_s")
        try:
            table = CorrelationTable(
                basis=str(row["basis"]).strip(),
                counts=tuple(int(row[f"c_{c}"]) for c in CELLS),
                accidentals=acc,
                integration_time_s=float(t_int) if t_int is not None and pd.notna(t_int) else None,
            )
        except (ValidationError, ValueError) as e:
            raise StreamFormatError(f"{path}: row {i}: {e}") from e
        tables.append(table)
    logger.debug(f"Read {len(tables)} correlation tables from {path}")
    return tables
