"""Focusing parameter ξ = λ_p L / (2π w_p²) and collection-waist bookkeeping."""

import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..exceptions import FocusingError
from .units import mm_to_um, nm_to_um

_CONSISTENCY_RTOL = 1e-9


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise FocusingError(f"{name} must be positive, got {value}")


def waist_from_xi(xi: float, pump_nm: float, length_mm: float) -> float:
    """Pump waist in µm for a focusing parameter ξ."""
    _require_positive(xi=xi, pump_nm=pump_nm, length_mm=length_mm)
    return math.sqrt(nm_to_um(pump_nm) * mm_to_um(length_mm) / (2.0 * math.pi * xi))


def xi_from_waist(waist_um: float, pump_nm: float, length_mm: float) -> float:
    """Focusing parameter ξ for a pump waist in µm."""
    _require_positive(waist_um=waist_um, pump_nm=pump_nm, length_mm=length_mm)
    return nm_to_um(pump_nm) * mm_to_um(length_mm) / (2.0 * math.pi * waist_um**2)


class FocusingPlan(BaseModel):
    """Pump focusing and fiber-collection waists of one source design."""

    model_config = ConfigDict(frozen=True)

    xi: float = Field(..., gt=0)
    pump_waist_um: float = Field(..., gt=0)
    signal_waist_um: float = Field(..., gt=0)
    idler_waist_um: float = Field(..., gt=0)
    pump_nm: float = Field(..., gt=0)
    length_mm: float = Field(..., gt=0)

    @model_validator(mode="after")
    def check_consistency(self) -> "FocusingPlan":
        expected = xi_from_waist(self.pump_waist_um, self.pump_nm, self.length_mm)
        if abs(expected - self.xi) > _CONSISTENCY_RTOL * self.xi:
            raise ValueError(
                f"ξ = {self.xi} is inconsistent with w_p = {self.pump_waist_um} µm "
                f"(expected {expected:.12g})"
            )
        return self


def plan_focusing(
    pump_nm: float,
    length_mm: float,
    signal_waist_um: float,
    idler_waist_um: float,
    xi: Optional[float] = None,
    pump_waist_um: Optional[float] = None,
) -> FocusingPlan:
    """Build a plan from exactly one of ξ or w_p; collection waists are taken as given."""
    if (xi is None) == (pump_waist_um is None):
        raise FocusingError("give exactly one of xi or pump_waist_um")
    if xi is not None:
        pump_waist_um = waist_from_xi(xi, pump_nm, length_mm)
    else:
        assert pump_waist_um is not None
        xi = xi_from_waist(pump_waist_um, pump_nm, length_mm)
    return FocusingPlan(
        xi=xi,
        pump_waist_um=pump_waist_um,
        signal_waist_um=signal_waist_um,
        idler_waist_um=idler_waist_um,
        pump_nm=pump_nm,
        length_mm=length_mm,
    )
