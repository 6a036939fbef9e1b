"""CSV tables with a ``#``-prefixed provenance header."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd

from ..settings import settings

logger = logging.getLogger(__name__)


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a configuration."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def metadata_lines(
    subcommand: str,
    config_sha256: Optional[str] = None,
    seed: Optional[int] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> str:
    from .. import __version__

    meta: Dict[str, Any] = {"tool": f"pairforge {__version__}", "subcommand": subcommand}
    if config_sha256:
        meta["config_sha256"] = config_sha256
    if seed is not None:
        meta["seed"] = seed
    meta.update(extra or {})
    return "".join(f"# {k}={v}\n" for k, v in meta.items())


def write_table(
    frame: pd.DataFrame,
    path: Union[str, Path],
    subcommand: str,
    config_sha256: Optional[str] = None,
    seed: Optional[int] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write ``frame`` as CSV after the metadata block; the body depends only on the data."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as f:
        f.write(metadata_lines(subcommand, config_sha256, seed, extra))
        frame.to_csv(f, index=False, float_format=settings.float_format, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {out}")
    return out


def read_table(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")
