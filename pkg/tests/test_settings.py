"""Tests for process settings and CSV table output."""

from pathlib import Path

import pandas as pd
import pytest
from pydantic import ValidationError

from pairforge import __version__
from pairforge.settings import PairForgeSettings, settings
from pairforge.tools.tables import config_hash, metadata_lines, read_table, write_table


@pytest.mark.unit
class TestSettings:
    def test_defaults(self) -> None:
        fresh = PairForgeSettings(_env_file=None)
        assert fresh.max_events == 50_000_000
        assert fresh.float_format == "%.10g"
        assert fresh.debug is False

    def test_environment_prefix(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("PAIRFORGE_MAX_EVENTS", "1000")
        monkeypatch.setenv("PAIRFORGE_LOG_LEVEL", "debug")
        fresh = PairForgeSettings(_env_file=None)
        assert fresh.max_events == 1000
        assert fresh.log_level == "DEBUG"

    @pytest.mark.parametrize(
        "field,value",
        [("max_events", 0), ("log_level", "verbose"), ("float_format", "plain")],
    )
    def test_invalid_values(self, field: str, value: object) -> None:
        with pytest.raises(ValidationError):
            PairForgeSettings(_env_file=None, **{field: value})

    def test_directories(self, tmp_path: Path) -> None:
        fresh = PairForgeSettings(
            _env_file=None, config_dir=str(tmp_path), output_dir=str(tmp_path / "out")
        )
        assert fresh.get_config_dir() == tmp_path.resolve()
        assert fresh.get_output_dir() == (tmp_path / "out").resolve()
        assert PairForgeSettings(_env_file=None).get_config_dir() is None


@pytest.mark.unit
class TestTables:
    def test_hash_ignores_key_order(self) -> None:
        a = config_hash({"source": {"pump_nm": 473, "idler_nm": 1550}, "seed": 1})
        b = config_hash({"seed": 1, "source": {"idler_nm": 1550, "pump_nm": 473}})
        assert a == b
        assert len(a) == 64

    def test_hash_changes_with_values(self) -> None:
        assert config_hash({"seed": 1}) != config_hash({"seed": 2})

    def test_metadata_lines(self) -> None:
        text = metadata_lines("predict", config_sha256="abc", seed=5, extra={"window_ps": 3535.5})
        assert text.splitlines() == [
            f"# tool=pairforge {__version__}",
            "# subcommand=predict",
            "# config_sha256=abc",
            "# seed=5",
            "# window_ps=3535.5",
        ]

    def test_write_and_read(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setattr(settings, "float_format", "%.4g")
        frame = pd.DataFrame({"power_mw": [1.0, 2.0], "rate_hz": [123456.789, 2.5]})
        path = write_table(frame, tmp_path / "nested" / "rates.csv", "predict", seed=3)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[:2] == [f"# tool=pairforge {__version__}", "# subcommand=predict"]
        assert "power_mw,rate_hz" in lines
        assert "1,1.235e+05" in lines
        back = read_table(path)
        assert list(back.columns) == ["power_mw", "rate_hz"]
        assert back["rate_hz"].tolist() == [123500.0, 2.5]
