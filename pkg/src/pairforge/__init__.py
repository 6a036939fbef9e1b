"""pairforge - design and analysis toolkit for nondegenerate SPDC photon-pair sources.

pairforge models a periodically poled crystal (dispersion, quasi-phase
matching, emission bandwidth, focusing), predicts detected singles,
coincidences and heralding efficiencies for real detectors, simulates
time-tagged detection streams, and analyzes those streams for heralding,
pair rate, brightness and polarization entanglement.
"""

__version__ = "0.1.0"
__author__ = "pairforge developers"

from .main import app

__all__ = ["app", "__version__"]
