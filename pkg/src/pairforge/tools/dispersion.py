"""Temperature- and wavelength-dependent refractive index of nonlinear crystals.

Coefficients live in versioned YAML data files under ``config/dispersion``;
see the header of ``ktp.yaml`` for the functional form. Tables are immutable
and every function here is pure, so they are safe to share across threads.
"""

import logging
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union, overload

import numpy as np
import yaml
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..exceptions import ConfigurationError, DispersionDomainError
from .units import nm_to_um

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

# Step for the numerical derivative in group_index, µm.
_DERIVATIVE_STEP_UM = 1e-5


class DispersionTable(BaseModel):
    """Sellmeier and thermo-optic coefficients for one principal axis."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    crystal_id: str
    axis: str = Field(..., description="Principal axis; type-0 QPM uses z")
    citation: str = ""
    sellmeier_coefficients: Tuple[float, ...]
    thermo_optic_coefficients: Tuple[Tuple[float, ...], ...] = ()
    reference_temperature_c: float = 25.0
    valid_range_um: Tuple[float, float]
    temperature_range_c: Tuple[float, float] = (0.0, 200.0)

    @field_validator("sellmeier_coefficients")
    @classmethod
    def validate_sellmeier(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        """Coefficients are [A, B_1, C_1, ..., D]: an even count of at least two."""
        if len(v) < 2 or len(v) % 2:
            raise ValueError(
                "sellmeier_coefficients must be [A, B_1, C_1, ..., B_m, C_m, D]"
            )
        return v

    @field_validator("valid_range_um", "temperature_range_c")
    @classmethod
    def validate_interval(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if v[0] >= v[1]:
            raise ValueError(f"interval {v} is empty")
        return v

    @field_validator("valid_range_um")
    @classmethod
    def validate_positive_wavelengths(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if v[0] <= 0:
            raise ValueError("wavelength range must be positive")
        return v

    @property
    def key(self) -> str:
        return self.crystal_id

    def _index_um(self, wavelength_um: FloatArray, temperature_c: float) -> FloatArray:
        """Evaluate n(λ, T) without domain checks."""
        lam2 = wavelength_um**2
        coeffs = self.sellmeier_coefficients
        n_sq = np.full_like(wavelength_um, coeffs[0])
        for b, c in zip(coeffs[1:-1:2], coeffs[2:-1:2]):
            n_sq = n_sq + b / (1.0 - c / lam2)
        n_sq = n_sq - coeffs[-1] * lam2
        n = np.sqrt(n_sq)

        delta_t = temperature_c - self.reference_temperature_c
        for order, poly in enumerate(self.thermo_optic_coefficients, start=1):
            n_m = sum(a / wavelength_um**j for j, a in enumerate(poly))
            n = n + n_m * delta_t**order
        return n

    def check_domain(self, wavelength_um: FloatArray, temperature_c: float) -> None:
        """Raise DispersionDomainError naming the violated bound."""
        lo, hi = self.valid_range_um
        if wavelength_um.size and float(np.min(wavelength_um)) < lo:
            raise DispersionDomainError(
                f"{self.crystal_id}: wavelength {float(np.min(wavelength_um)):.6g} µm "
                f"is below the lower bound {lo} µm"
            )
        if wavelength_um.size and float(np.max(wavelength_um)) > hi:
            raise DispersionDomainError(
                f"{self.crystal_id}: wavelength {float(np.max(wavelength_um)):.6g} µm "
                f"is above the upper bound {hi} µm"
            )
        t_lo, t_hi = self.temperature_range_c
        if not t_lo <= temperature_c <= t_hi:
            bound = "lower" if temperature_c < t_lo else "upper"
            limit = t_lo if bound == "lower" else t_hi
            raise DispersionDomainError(
                f"{self.crystal_id}: temperature {temperature_c} °C violates the "
                f"{bound} bound {limit} °C"
            )


@overload
def refractive_index(table: DispersionTable, wavelength_nm: float, temperature_c: float) -> float: ...
@overload
def refractive_index(table: DispersionTable, wavelength_nm: FloatArray, temperature_c: float) -> FloatArray: ...


def refractive_index(
    table: DispersionTable,
    wavelength_nm: Union[float, FloatArray],
    temperature_c: float,
) -> Union[float, FloatArray]:
    """Refractive index n(λ, T) for a vacuum wavelength in nm."""
    lam_um = np.asarray(nm_to_um(np.asarray(wavelength_nm, dtype=float)))
    table.check_domain(np.atleast_1d(lam_um), temperature_c)
    n = table._index_um(lam_um, temperature_c)
    return float(n) if np.ndim(n) == 0 else n


@overload
def wave_number(table: DispersionTable, wavelength_nm: float, temperature_c: float) -> float: ...
@overload
def wave_number(table: DispersionTable, wavelength_nm: FloatArray, temperature_c: float) -> FloatArray: ...


def wave_number(
    table: DispersionTable,
    wavelength_nm: Union[float, FloatArray],
    temperature_c: float,
) -> Union[float, FloatArray]:
    """Angular wavenumber k = 2πn/λ in rad/µm."""
    lam_um = np.asarray(nm_to_um(np.asarray(wavelength_nm, dtype=float)))
    n = refractive_index(table, wavelength_nm, temperature_c)
    k = 2.0 * np.pi * np.asarray(n) / lam_um
    return float(k) if np.ndim(k) == 0 else k


def group_index(table: DispersionTable, wavelength_nm: float, temperature_c: float) -> float:
    """Group index n - λ dn/dλ at a vacuum wavelength in nm."""
    lam_um = float(nm_to_um(wavelength_nm))
    table.check_domain(np.atleast_1d(lam_um), temperature_c)
    h = _DERIVATIVE_STEP_UM
    pts = np.array([lam_um - h, lam_um, lam_um + h])
    n_lo, n_mid, n_hi = table._index_um(pts, temperature_c)
    return float(n_mid - lam_um * (n_hi - n_lo) / (2.0 * h))


def _default_data_path() -> Path:
    return Path(str(resources.files("pairforge") / "config" / "dispersion" / "ktp.yaml"))


@lru_cache(maxsize=8)
def _load_cached(path: str) -> Dict[str, DispersionTable]:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"Cannot read dispersion data {path}: {e}") from e

    if not isinstance(raw, dict) or set(raw) != {"tables"}:
        raise ConfigurationError(f"{path}: expected a single top-level key 'tables'")

    tables: Dict[str, DispersionTable] = {}
    for i, entry in enumerate(raw["tables"] or []):
        try:
            table = DispersionTable.model_validate(entry)
        except ValidationError as e:
            raise ConfigurationError(f"{path}: table #{i}: {e}") from e
        if table.key in tables:
            raise ConfigurationError(f"{path}: duplicate crystal_id {table.key!r}")
        tables[table.key] = table
    logger.debug(f"Loaded {len(tables)} dispersion tables from {path}")
    return tables


def load_dispersion_tables(path: Optional[Union[str, Path]] = None) -> Dict[str, DispersionTable]:
    """Load every table of a dispersion data file (the packaged KTP file by default)."""
    resolved = Path(path).resolve() if path else _default_data_path()
    return dict(_load_cached(str(resolved)))


def get_dispersion_table(
    crystal_id: str = "ktp_z", path: Optional[Union[str, Path]] = None
) -> DispersionTable:
    """Look up one table by crystal id."""
    tables = load_dispersion_tables(path)
    try:
        return tables[crystal_id]
    except KeyError:
        raise ConfigurationError(
            f"Unknown dispersion table {crystal_id!r}; available: {sorted(tables)}"
        ) from None


def available_tables(path: Optional[Union[str, Path]] = None) -> List[str]:
    return sorted(load_dispersion_tables(path))
