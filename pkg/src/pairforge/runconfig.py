"""Run-file loading and validation.

A run file is one YAML document. Physical keys carry their unit as a suffix
(``pump_nm``, ``dead_time_ns``); models forbid unknown keys, and every
validation problem is reported as a ConfigurationError naming the file, the
dotted key and its line.
"""

import logging
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigurationError
from .settings import settings
from .tools.detection_model import ArmBudget, CoincidenceWindow, DetectorModel, window_for
from .tools.dispersion import get_dispersion_table
from .tools.gaussian_optics import FocusingPlan, plan_focusing
from .tools.phasematch import CrystalSpec
from .tools.polarization import EntangledStateModel
from .tools.stream_sim import FiberDrift, SimConfig

logger = logging.getLogger(__name__)

UNIT_SUFFIXES = (
    "_nm", "_um", "_mm", "_c", "_ps", "_ns", "_hz", "_mw", "_s", "_ghz", "_rad", "_deg"
)

_STRICT = ConfigDict(extra="forbid", frozen=True)


class CrystalConfig(BaseModel):
    model_config = _STRICT

    dispersion_table: str = "ktp_z"
    dispersion_file: Optional[str] = None
    length_mm: float = Field(..., gt=0)
    temperature_c: float = 25.0
    poling_period_um: Optional[float] = Field(None, gt=0)


class SourceConfig(BaseModel):
    model_config = _STRICT

    pump_nm: float = Field(..., gt=0)
    idler_nm: float = Field(..., gt=0)
    pump_power_mw: List[float] = Field(default_factory=lambda: [1.0])
    brightness_hz_per_mw: float = Field(..., ge=0)
    xi: Optional[float] = Field(None, gt=0)
    pump_waist_um: Optional[float] = Field(None, gt=0)
    signal_waist_um: float = Field(..., gt=0)
    idler_waist_um: float = Field(..., gt=0)

    @field_validator("pump_power_mw")
    @classmethod
    def validate_powers(cls, v: List[float]) -> List[float]:
        if not v or min(v) < 0:
            raise ValueError("pump_power_mw must be a nonempty list of nonnegative powers")
        return v

    @model_validator(mode="after")
    def check_focusing(self) -> "SourceConfig":
        if (self.xi is None) == (self.pump_waist_um is None):
            raise ValueError("give exactly one of xi or pump_waist_um")
        return self


class ArmConfig(BaseModel):
    """One detection arm: a detector name and either η_static or a transmission."""

    model_config = _STRICT

    detector: str
    eta_static: Optional[float] = Field(None, gt=0, le=1)
    transmission: Optional[float] = Field(None, gt=0, le=1)

    @model_validator(mode="after")
    def check_efficiency(self) -> "ArmConfig":
        if (self.eta_static is None) == (self.transmission is None):
            raise ValueError("give exactly one of eta_static or transmission")
        return self


class ArmsConfig(BaseModel):
    model_config = _STRICT

    signal: ArmConfig
    idler: ArmConfig


class AnalysisConfig(BaseModel):
    model_config = _STRICT

    window_ps: Optional[float] = Field(None, gt=0)
    jitter_multiple: float = Field(10.0, gt=0)
    windows_ps: List[float] = Field(default_factory=list)
    accidental_mode: Literal["singles", "delayed"] = "singles"
    delay_ps: float = Field(100_000.0, ge=0)
    duration_s: float = Field(1.0, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    pump_range_nm: Tuple[float, float] = (450.0, 500.0)
    tuning_points: int = Field(11, ge=2)
    tuning_workers: int = Field(1, ge=1)
    fixed_period: bool = False
    jsi_span_ghz: float = Field(1500.0, gt=0)
    jsi_points: int = Field(601, ge=3)
    filter_fwhm_ghz: float = Field(125.0, gt=0)
    scan_step_ghz: float = Field(10.0, gt=0)
    bootstrap_resamples: int = Field(10_000, ge=0)
    chunk_duration_s: Optional[float] = Field(None, gt=0)


class DriftConfig(BaseModel):
    model_config = _STRICT

    amplitude_rad: float = 0.0
    period_s: float = Field(1.0, gt=0)
    phase_rad: float = 0.0


class PolarizationConfig(BaseModel):
    model_config = _STRICT

    phase_rad: float = 0.0
    amplitude_balance: float = Field(0.5, ge=0, le=1)
    p_mix: float = Field(0.0, ge=0, le=1)
    drift: Optional[DriftConfig] = None


class RunConfig(BaseModel):
    """Validated contents of one run file."""

    model_config = _STRICT

    crystal: CrystalConfig
    source: SourceConfig
    arms: ArmsConfig
    detectors: Dict[str, DetectorModel] = Field(default_factory=dict)
    analysis: AnalysisConfig = AnalysisConfig()
    polarization: PolarizationConfig = PolarizationConfig()
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def check_detector_references(self) -> "RunConfig":
        for name, arm in (("signal", self.arms.signal), ("idler", self.arms.idler)):
            if arm.detector not in self.detectors:
                raise ValueError(
                    f"arms.{name}.detector {arm.detector!r} is not defined; "
                    f"known detectors: {sorted(self.detectors)}"
                )
        return self

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def crystal_spec(self) -> CrystalSpec:
        table = get_dispersion_table(self.crystal.dispersion_table, self.crystal.dispersion_file)
        return CrystalSpec(
            dispersion=table,
            length_mm=self.crystal.length_mm,
            poling_period_um=self.crystal.poling_period_um,
            temperature_c=self.crystal.temperature_c,
        )

    def focusing(self) -> FocusingPlan:
        s = self.source
        return plan_focusing(
            s.pump_nm,
            self.crystal.length_mm,
            s.signal_waist_um,
            s.idler_waist_um,
            xi=s.xi,
            pump_waist_um=s.pump_waist_um,
        )

    def arm(self, name: str) -> ArmBudget:
        cfg: ArmConfig = getattr(self.arms, name)
        det = self.detectors[cfg.detector]
        if cfg.eta_static is not None:
            return ArmBudget(eta_static=cfg.eta_static, detector=det)
        assert cfg.transmission is not None
        return ArmBudget.from_losses(cfg.transmission, det)

    def window(self) -> CoincidenceWindow:
        return window_for(
            self.detectors[self.arms.signal.detector],
            self.detectors[self.arms.idler.detector],
            window_ps=self.analysis.window_ps or 0.0,
            jitter_multiple=self.analysis.jitter_multiple,
        )

    def state(self) -> EntangledStateModel:
        p = self.polarization
        return EntangledStateModel(
            phase_rad=p.phase_rad, amplitude_balance=p.amplitude_balance, p_mix=p.p_mix
        )

    def sim_config(
        self, power_mw: float, seed: Optional[int] = None, polarization: bool = False
    ) -> SimConfig:
        """Simulation of one pump power; pgr = brightness × power."""
        drift = self.polarization.drift
        return SimConfig(
            pgr_hz=self.source.brightness_hz_per_mw * power_mw,
            duration_s=self.analysis.duration_s,
            seed=self.analysis.seed if seed is None else seed,
            signal_arm=self.arm("signal"),
            idler_arm=self.arm("idler"),
            polarization_state=self.state() if polarization else None,
            idler_drift=FiberDrift(**drift.model_dump()) if polarization and drift else None,
            pump_power_mw=power_mw,
        )


def packaged_path(name: str) -> Path:
    return Path(str(resources.files("pairforge") / "config" / name))


def _line_index(
    node: yaml.Node, prefix: str = "", index: Optional[Dict[str, int]] = None
) -> Dict[str, int]:
    """Map dotted keys of a composed YAML tree to 1-based line numbers."""
    index = {} if index is None else index
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            index[key] = key_node.start_mark.line + 1
            _line_index(value_node, key, index)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            key = f"{prefix}.{i}"
            index[key] = item.start_mark.line + 1
            _line_index(item, key, index)
    return index


def _read_yaml(path: Path) -> Tuple[Dict[str, Any], Dict[str, int]]:
    try:
        text = path.read_text(encoding="utf-8")
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except OSError as e:
        raise ConfigurationError(f"Cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path}: invalid YAML: {e}") from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return data, _line_index(root) if root is not None else {}


def _known_fields() -> Dict[str, List[str]]:
    """Field names of every run-file model, keyed by name without unit suffix."""
    models = (
        CrystalConfig, SourceConfig, ArmConfig, AnalysisConfig,
        DriftConfig, PolarizationConfig, RunConfig, DetectorModel,
    )
    stems: Dict[str, List[str]] = {}
    for model in models:
        for name in model.model_fields:
            for suffix in UNIT_SUFFIXES:
                if name.endswith(suffix):
                    stems.setdefault(name[: -len(suffix)], []).append(name)
    return stems


def _describe(err: Dict[str, Any], lines: Dict[str, int], path: str) -> str:
    loc = [str(part) for part in err["loc"]]
    dotted = ".".join(loc)
    line = None
    for k in range(len(loc), 0, -1):
        line = lines.get(".".join(loc[:k]))
        if line is not None:
            break
    if line is None:
        where = path
    elif line == 0:
        where = f"{path} (--set)"
    else:
        where = f"{path}:{line}"
    message = err["msg"]
    if err["type"] == "extra_forbidden":
        candidates = _known_fields().get(loc[-1])
        if candidates:
            message = f"missing unit suffix (did you mean {' or '.join(sorted(set(candidates)))}?)"
        else:
            message = "unknown key"
    return f"{where}: {dotted or '<root>'}: {message}"


def _set_dotted(data: Dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node: Any = data
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
            continue
        node = node.setdefault(part, {})
        if not isinstance(node, (dict, list)):
            raise ConfigurationError(f"override {dotted!r}: {part!r} is not a mapping")
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def parse_override(text: str) -> Tuple[str, Any]:
    """``a.b=value`` with the value parsed as YAML."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigurationError(f"override {text!r} must look like dotted.key=value")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"override {text!r}: invalid value: {e}") from e
    return key.strip(), value


def resolve_config_path(path: Optional[Union[str, Path]]) -> Path:
    """Explicit path, then the configured directory, then the packaged default."""
    if path is None:
        default_dir = settings.get_config_dir()
        if default_dir and (default_dir / "run.yaml").is_file():
            return default_dir / "run.yaml"
        return packaged_path("run.yaml")
    candidate = Path(path).expanduser()
    if candidate.is_file():
        return candidate
    default_dir = settings.get_config_dir()
    if default_dir and not candidate.is_absolute() and (default_dir / candidate).is_file():
        return default_dir / candidate
    raise ConfigurationError(f"Run file {path} not found")


def load_detectors(path: Optional[Path] = None) -> Dict[str, Any]:
    data, _ = _read_yaml(path or packaged_path("detectors.yaml"))
    return data


def load_run_config(
    path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()
) -> RunConfig:
    """Load, merge packaged detectors into, override and validate a run file."""
    resolved = resolve_config_path(path)
    data, lines = _read_yaml(resolved)

    for text in overrides:
        key, value = parse_override(text)
        _set_dotted(data, key, value)
        lines.setdefault(key, 0)

    run_detectors = data.get("detectors") or {}
    if not isinstance(run_detectors, dict):
        raise ConfigurationError(f"{resolved}: detectors must be a mapping of named blocks")
    data["detectors"] = {**load_detectors(), **run_detectors}

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        details = "; ".join(_describe(err, lines, str(resolved)) for err in e.errors())
        raise ConfigurationError(f"Invalid run file: {details}") from e

    logger.debug(f"Loaded run file {resolved} with {len(overrides)} overrides")
    return config
