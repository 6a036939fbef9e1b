"""Main CLI entry point for pairforge."""

import logging
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, TypeVar

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .exceptions import PairForgeError
from .settings import settings

if TYPE_CHECKING:
    from .pipeline import RunContext

app = typer.Typer(
    name="pairforge",
    help="Design and analysis toolkit for nondegenerate SPDC photon-pair sources",
    add_completion=False,
)

console = Console()
err_console = Console(stderr=True)

T = TypeVar("T")

ConfigOption = typer.Option(
    None,
    "--config",
    "-c",
    help="Run file (default: $PAIRFORGE_CONFIG_DIR/run.yaml, else the packaged run.yaml)",
    dir_okay=False,
)
SetOption = typer.Option(
    [], "--set", "-s", help="Override a run-file key, e.g. --set source.pump_nm=480"
)
OutputOption = typer.Option(None, "--output", "-o", help="Output directory", file_okay=False)
VerboseOption = typer.Option(False, "--verbose", "-v", help="Enable verbose logging")


def setup_logging(verbose: bool = False) -> None:
    """Setup logging configuration."""
    log_level = logging.DEBUG if verbose else getattr(logging, settings.log_level)
    handlers: List[logging.Handler] = [RichHandler(console=err_console, rich_tracebacks=True)]
    if settings.log_file:
        file_handler = logging.FileHandler(settings.log_file)
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s")
        )
        handlers.append(file_handler)

    logging.basicConfig(
        level=log_level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=handlers,
        force=True,
    )


def _execute(verbose: bool, action: Callable[[], T]) -> T:
    """Run a subcommand body, mapping failures to exit codes (1 validation, 2 runtime)."""
    setup_logging(verbose)
    logger = logging.getLogger(__name__)
    try:
        return action()
    except PairForgeError as e:
        logger.error(str(e))
        raise typer.Exit(code=e.exit_code)
    except ValidationError as e:
        logger.error(f"Invalid input: {e}")
        raise typer.Exit(code=1)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        raise typer.Exit(code=130)
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        if verbose:
            err_console.print_exception()
        raise typer.Exit(code=2)


def _context(config: Optional[Path], overrides: List[str], output: Optional[Path]) -> "RunContext":
    from .pipeline import RunContext

    return RunContext.load(config, overrides, output)


def _print_mapping(title: str, values: Dict[str, float]) -> None:
    table = Table(title=title)
    table.add_column("quantity")
    table.add_column("value", justify="right")
    for key, value in values.items():
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    console.print(table)


@app.command("tuning-curve")
def tuning_curve_cmd(
    config: Optional[Path] = ConfigOption,
    overrides: List[str] = SetOption,
    output: Optional[Path] = OutputOption,
    verbose: bool = VerboseOption,
) -> None:
    """Signal wavelength, poling period and bandwidth across the pump range."""
    from .pipeline import run_tuning_curve

    path = _execute(verbose, lambda: run_tuning_curve(_context(config, overrides, output)))
    console.print(f"Tuning curve written to {path}")


@app.command()
def bandwidth(
    config: Optional[Path] = ConfigOption,
    overrides: List[str] = SetOption,
    output: Optional[Path] = OutputOption,
    verbose: bool = VerboseOption,
) -> None:
    """Idler emission bandwidth (FWHM) at the configured design point."""
    from .pipeline import run_bandwidth

    result = _execute(verbose, lambda: run_bandwidth(_context(config, overrides, output)))
    _print_mapping("Emission bandwidth", result)


@app.command()
def jsi(
    config: Optional[Path] = ConfigOption,
    overrides: List[str] = SetOption,
    output: Optional[Path] = OutputOption,
    verbose: bool = VerboseOption,
) -> None:
    """Joint spectral intensity against idler frequency."""
    from .pipeline import run_jsi

    path = _execute(verbose, lambda: run_jsi(_context(config, overrides, output)))
    console.print(f"JSI written to {path}")


@app.command()
def waist(
    xi: Optional[float] = typer.Option(None, "--xi", help="Focusing parameter ξ"),
    waist_um: Optional[float] = typer.Option(None, "--waist-um", help="Pump waist in µm"),
    pump_nm: float = typer.Option(..., "--pump-nm", help="Pump wavelength in nm"),
    length_mm: float = typer.Option(..., "--length-mm", help="Crystal length in mm"),
    verbose: bool = VerboseOption,
) -> None:
    """Convert between focusing parameter ξ and pump waist."""
    from .exceptions import FocusingError
    from .tools.gaussian_optics import waist_from_xi, xi_from_waist

    def convert() -> str:
        if (xi is None) == (waist_um is None):
            raise FocusingError("give exactly one of --xi or --waist-um")
        if xi is not None:
            return f"{waist_from_xi(xi, pump_nm, length_mm):.1f} µm"
        assert waist_um is not None
        return f"ξ = {xi_from_waist(waist_um, pump_nm, length_mm):.4g}"

    console.print(_execute(verbose, convert))


@app.command()
def predict(
    config: Optional[Path] = ConfigOption,
    overrides: List[str] = SetOption,
    output: Optional[Path] = OutputOption,
    verbose: bool = VerboseOption,
) -> None:
    """Analytical singles, coincidences and heralding over the pump-power sweep."""
    from .pipeline import run_predict

    path = _execute(verbose, lambda: run_predict(_context(config, overrides, output)))
    console.print(f"Predictions written to {path}")


@app.command()
def simulate(
    config: Optional[Path] = ConfigOption,
    overrides: List[str] = SetOption,
    output: Optional[Path] = OutputOption,
    binary: bool = typer.Option(False, "--binary", help="Write QTT1 binary streams"),
    polarization: bool = typer.Option(
        False, "--polarization", help="Route photons through the polarization analyzers"
    ),
    verbose: bool = VerboseOption,
) -> None:
    """Monte Carlo timestamp streams, one per configured pump power."""
    from .pipeline import run_simulate

    paths = _execute(
        verbose,
        lambda: run_simulate(
            _context(config, overrides, output), binary=binary, polarization=polarization
        ),
    )
    for path in paths:
        console.print(f"Stream written to {path}")


@app.command()
def analyze(
    streams: List[Path] = typer.Argument(..., help="Stream files", exists=True, dir_okay=False),
    config: Optional[Path] = ConfigOption,
    overrides: List[str] = SetOption,
    output: Optional[Path] = OutputOption,
    fwhm_ghz: Optional[float] = typer.Option(
        None, "--fwhm-ghz", help="Bandwidth for spectral brightness (default: computed)"
    ),
    verbose: bool = VerboseOption,
) -> None:
    """Coincidences, heralding, PGR and brightness from stream files."""
    from .pipeline import run_analyze

    paths = _execute(
        verbose, lambda: run_analyze(_context(config, overrides, output), streams, fwhm_ghz)
    )
    for path in paths:
        console.print(f"Results written to {path}")


@app.command("scan-filter")
def scan_filter(
    config: Optional[Path] = ConfigOption,
    overrides: List[str] = SetOption,
    output: Optional[Path] = OutputOption,
    verbose: bool = VerboseOption,
) -> None:
    """Tunable Gaussian filter scan across the theoretical idler line."""
    from .pipeline import run_scan_filter

    result = _execute(verbose, lambda: run_scan_filter(_context(config, overrides, output)))
    _print_mapping("Filter scan", result)


@app.command()
def deconvolve(
    measured_ghz: float = typer.Option(..., "--measured-ghz", help="Measured FWHM in GHz"),
    filter_ghz: float = typer.Option(..., "--filter-ghz", help="Filter FWHM in GHz"),
    verbose: bool = VerboseOption,
) -> None:
    """Remove a Gaussian filter's width from a measured FWHM."""
    from .tools.tag_analysis import deconvolve_fwhm

    value = _execute(verbose, lambda: deconvolve_fwhm(measured_ghz, filter_ghz))
    console.print(f"{value:.1f} GHz")


@app.command("polarization")
def polarization_cmd(
    tables: Optional[Path] = typer.Option(
        None,
        "--tables",
        help="Correlation-table CSV; simulated when omitted",
        exists=True,
        dir_okay=False,
    ),
    phase_points: int = typer.Option(
        0, "--phase-points", help="Also tabulate V(φ) on this many phases"
    ),
    config: Optional[Path] = ConfigOption,
    overrides: List[str] = SetOption,
    output: Optional[Path] = OutputOption,
    verbose: bool = VerboseOption,
) -> None:
    """Visibilities and fidelity bound from correlation tables or a simulated run."""
    from .pipeline import run_polarization

    result = _execute(
        verbose,
        lambda: run_polarization(_context(config, overrides, output), tables, phase_points),
    )
    _print_mapping("Polarization entanglement", result)


@app.command()
def version() -> None:
    """Display pairforge version information."""
    from . import __version__

    console.print(f"pairforge version: {__version__}")


@app.command("check-config")
def check_config(
    config: Optional[Path] = ConfigOption,
    overrides: List[str] = SetOption,
    verbose: bool = VerboseOption,
) -> None:
    """Validate a run file and show the resolved settings."""
    from .runconfig import load_run_config, resolve_config_path

    def check() -> None:
        path = resolve_config_path(config)
        run = load_run_config(path, overrides)
        console.print(f"[green]✓[/green] Run file {path} is valid")
        console.print(f"[blue]Detectors:[/blue] {', '.join(sorted(run.detectors))}")
        console.print(f"[blue]Coincidence window:[/blue] {run.window().window_ps:.1f} ps")
        console.print(f"[blue]Output directory:[/blue] {run.output_dir or settings.output_dir}")
        console.print(f"[blue]Event cap:[/blue] {settings.max_events}")

    _execute(verbose, check)


if __name__ == "__main__":
    app()
