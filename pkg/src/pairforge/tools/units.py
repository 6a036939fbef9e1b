"""Unit conversions shared by the optics tools.

Public interfaces take wavelengths in nm; dispersion formulas work in µm.
Optical frequencies are in GHz and use the exact SI speed of light.
"""

from typing import TypeVar, Union

import numpy as np
from numpy.typing import NDArray
from scipy.constants import c as SPEED_OF_LIGHT  # m/s, exact

ArrayOrFloat = TypeVar("ArrayOrFloat", float, NDArray[np.float64])
Number = Union[float, NDArray[np.float64]]

# FWHM of a Gaussian in units of its standard deviation, 2*sqrt(2 ln 2).
FWHM_PER_SIGMA = float(2.0 * np.sqrt(2.0 * np.log(2.0)))

_C_NM_GHZ = SPEED_OF_LIGHT  # c in nm*GHz: 1e9 nm/m / 1e9 Hz/GHz


def nm_to_um(wavelength_nm: ArrayOrFloat) -> ArrayOrFloat:
    return wavelength_nm * 1e-3


def um_to_nm(wavelength_um: ArrayOrFloat) -> ArrayOrFloat:
    return wavelength_um * 1e3


def mm_to_um(length_mm: ArrayOrFloat) -> ArrayOrFloat:
    return length_mm * 1e3


def nm_to_ghz(wavelength_nm: ArrayOrFloat) -> ArrayOrFloat:
    """Vacuum wavelength (nm) to optical frequency (GHz)."""
    return _C_NM_GHZ / wavelength_nm


def ghz_to_nm(frequency_ghz: ArrayOrFloat) -> ArrayOrFloat:
    """Optical frequency (GHz) to vacuum wavelength (nm)."""
    return _C_NM_GHZ / frequency_ghz


def fwhm_to_sigma(fwhm: ArrayOrFloat) -> ArrayOrFloat:
    return fwhm / FWHM_PER_SIGMA


def ps_to_s(time_ps: ArrayOrFloat) -> ArrayOrFloat:
    return time_ps * 1e-12


def s_to_ps(time_s: ArrayOrFloat) -> ArrayOrFloat:
    return time_s * 1e12


def ns_to_ps(time_ns: ArrayOrFloat) -> ArrayOrFloat:
    return time_ns * 1e3
