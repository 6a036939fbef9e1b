"""Shared fixtures for the pairforge test suite."""

from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
import pytest
import yaml

from pairforge.tools.detection_model import ArmBudget, DetectorModel
from pairforge.tools.dispersion import DispersionTable, get_dispersion_table
from pairforge.tools.phasematch import CrystalSpec
from pairforge.tools.stream_sim import TimestampStream


@pytest.fixture
def ktp() -> DispersionTable:
    return get_dispersion_table("ktp_z")


@pytest.fixture
def crystal(ktp: DispersionTable) -> CrystalSpec:
    """10 mm ppKTP at 40 °C without a poling period."""
    return CrystalSpec(dispersion=ktp, length_mm=10.0, temperature_c=40.0)


@pytest.fixture
def ideal_detector() -> DetectorModel:
    return DetectorModel(pde=1.0)


@pytest.fixture
def si_spad() -> DetectorModel:
    return DetectorModel(pde=0.65, dead_time_ns=50, dark_rate_hz=250, jitter_fwhm_ps=350)


@pytest.fixture
def snspd() -> DetectorModel:
    return DetectorModel(pde=0.35, dead_time_ns=25, dark_rate_hz=100, jitter_fwhm_ps=50)


@pytest.fixture
def ingaas() -> DetectorModel:
    return DetectorModel(pde=0.20, dead_time_ns=20_000, dark_rate_hz=100, jitter_fwhm_ps=150)


def make_arm(eta: float, **detector: float) -> ArmBudget:
    """ArmBudget with a DetectorModel built from keyword fields."""
    fields: Dict[str, float] = {"pde": 1.0}
    fields.update(detector)
    return ArmBudget(eta_static=eta, detector=DetectorModel(**fields))


def make_stream(
    events: Sequence[tuple],
    duration_s: float = 1e-6,
    channel_map: Optional[Dict[int, str]] = None,
) -> TimestampStream:
    """Stream from (channel, time_ps) tuples, kept in the given order."""
    channels = np.array([e[0] for e in events], dtype=np.uint8)
    times = np.array([e[1] for e in events], dtype=np.int64)
    return TimestampStream(
        channels=channels,
        times_ps=times,
        duration_s=duration_s,
        channel_map=channel_map or {0: "signal", 1: "idler"},
    )


RUN_FILE = {
    "crystal": {"dispersion_table": "ktp_z", "length_mm": 10, "temperature_c": 40},
    "source": {
        "pump_nm": 473,
        "idler_nm": 1550,
        "pump_power_mw": [1, 2],
        "brightness_hz_per_mw": 5.61e5,
        "xi": 0.02,
        "signal_waist_um": 87,
        "idler_waist_um": 141,
    },
    "detectors": {
        "test_spad": {
            "pde": 0.65,
            "dead_time_ns": 50,
            "dark_rate_hz": 250,
            "jitter_fwhm_ps": 350,
        },
    },
    "arms": {
        "signal": {"detector": "test_spad", "eta_static": 0.25},
        "idler": {"detector": "snspd", "eta_static": 0.2},
    },
    "analysis": {
        "windows_ps": [0, 500, 1000, 4000],
        "duration_s": 0.05,
        "seed": 7,
        "tuning_points": 3,
        "bootstrap_resamples": 200,
    },
}


@pytest.fixture
def run_data() -> Dict:
    return yaml.safe_load(yaml.safe_dump(RUN_FILE))


@pytest.fixture
def run_file(tmp_path: Path, run_data: Dict) -> Path:
    """A small, fast run file with its outputs under tmp_path."""
    run_data["output_dir"] = str(tmp_path / "out")
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(run_data, sort_keys=False), encoding="utf-8")
    return path
