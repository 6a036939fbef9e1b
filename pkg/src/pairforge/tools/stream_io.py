"""Reading and writing timestamp streams.

Text format: ``# key=value`` header lines, then one ``channel,time_ps`` row
per event. Binary format: the magic ``QTT1``, a little-endian uint32 header
length, the same header block as UTF-8 text, then packed records of one
uint8 channel and one little-endian uint64 time in ps.
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..exceptions import StreamFormatError
from .stream_sim import ChannelStats, TimestampStream

logger = logging.getLogger(__name__)

MAGIC = b"QTT1"
FORMAT_ID = "pairforge-stream/1"
RECORD_DTYPE = np.dtype([("channel", "u1"), ("time", "<u8")])

PathLike = Union[str, Path]


def _header_text(stream: TimestampStream) -> str:
    head = {"format": FORMAT_ID, **stream.header()}
    if stream.stats:
        head["stats"] = ";".join(
            f"{s.channel}:{s.offered}/{s.accepted}/{s.afterpulses}"
            for s in sorted(stream.stats.values(), key=lambda s: s.channel)
        )
    return "".join(f"# {k}={v}\n" for k, v in head.items())


def _parse_header(lines: list, path: PathLike) -> Dict[str, str]:
    head: Dict[str, str] = {}
    for line in lines:
        body = line.lstrip("#").strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        if not sep:
            raise StreamFormatError(f"{path}: malformed header line {line.strip()!r}")
        head[key.strip()] = value.strip()
    for required in ("duration_s", "channel_map"):
        if required not in head:
            raise StreamFormatError(f"{path}: header is missing {required!r}")
    return head


def _channel_map(text: str, path: PathLike) -> Dict[int, str]:
    mapping: Dict[int, str] = {}
    try:
        for item in text.split(","):
            ch, _, name = item.partition(":")
            mapping[int(ch)] = name
    except ValueError as e:
        raise StreamFormatError(f"{path}: bad channel_map {text!r}") from e
    return mapping


def _stats(
    text: Optional[str], channel_map: Dict[int, str], path: PathLike
) -> Dict[int, ChannelStats]:
    if not text:
        return {}
    stats: Dict[int, ChannelStats] = {}
    try:
        for item in text.split(";"):
            ch, _, counts = item.partition(":")
            offered, accepted, after = (int(x) for x in counts.split("/"))
            stats[int(ch)] = ChannelStats(
                channel=int(ch),
                label=channel_map.get(int(ch), ""),
                offered=offered,
                accepted=accepted,
                afterpulses=after,
            )
    except ValueError as e:
        raise StreamFormatError(f"{path}: bad stats {text!r}") from e
    return stats


def _build(
    head: Dict[str, str], channels: np.ndarray, times: np.ndarray, path: PathLike
) -> TimestampStream:
    cmap = _channel_map(head["channel_map"], path)
    try:
        return TimestampStream(
            channels=channels.astype(np.uint8),
            times_ps=times.astype(np.int64),
            duration_s=float(head["duration_s"]),
            channel_map=cmap,
            seed=int(head["seed"]) if "seed" in head else None,
            generator=head.get("generator"),
            pump_power_mw=float(head["pump_power_mw"]) if "pump_power_mw" in head else None,
            stats=_stats(head.get("stats"), cmap, path),
        )
    except ValueError as e:
        raise StreamFormatError(f"{path}: {e}") from e


def write_stream(stream: TimestampStream, path: PathLike, fmt: Optional[str] = None) -> Path:
    """Write a stream; ``fmt`` is "text" or "binary", else chosen by suffix (.qtt is binary)."""
    out = Path(path)
    fmt = fmt or ("binary" if out.suffix.lower() in (".qtt", ".bin") else "text")
    out.parent.mkdir(parents=True, exist_ok=True)
    header = _header_text(stream)

    if fmt == "binary":
        records = np.empty(len(stream), dtype=RECORD_DTYPE)
        records["channel"] = stream.channels
        records["time"] = stream.times_ps
        encoded = header.encode("utf-8")
        with open(out, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(records.tobytes())
    elif fmt == "text":
        frame = pd.DataFrame({"channel": stream.channels, "time_ps": stream.times_ps})
        with open(out, "w", encoding="utf-8", newline="") as f:
            f.write(header)
            frame.to_csv(f, header=False, index=False, lineterminator="\n")
    else:
        raise StreamFormatError(f"unknown stream format {fmt!r}")

    logger.info(f"Wrote {len(stream)} events to {out} ({fmt})")
    return out


def _read_binary(path: Path) -> Tuple[Dict[str, str], np.ndarray, np.ndarray]:
    raw = path.read_bytes()
    if len(raw) < 8:
        raise StreamFormatError(f"{path}: truncated QTT1 header")
    (length,) = struct.unpack("<I", raw[4:8])
    end = 8 + length
    if end > len(raw):
        raise StreamFormatError(f"{path}: header length {length} runs past the end of file")
    try:
        text = raw[8:end].decode("utf-8")
    except UnicodeDecodeError as e:
        raise StreamFormatError(f"{path}: header is not UTF-8") from e
    body = raw[end:]
    if len(body) % RECORD_DTYPE.itemsize:
        raise StreamFormatError(
            f"{path}: {len(body)} record bytes is not a multiple of {RECORD_DTYPE.itemsize}"
        )
    records = np.frombuffer(body, dtype=RECORD_DTYPE)
    head = _parse_header(text.splitlines(), path)
    return head, records["channel"], records["time"]


def _read_text(path: Path) -> Tuple[Dict[str, str], np.ndarray, np.ndarray]:
    lines = []
    try:
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                lines.append(line)
    except UnicodeDecodeError as e:
        raise StreamFormatError(f"{path}: neither a QTT1 file nor UTF-8 text") from e
    head = _parse_header(lines, path)
    try:
        frame = pd.read_csv(
            path,
            comment="#",
            header=None,
            names=["channel", "time_ps"],
            dtype={"channel": "int64", "time_ps": "int64"},
        )
    except pd.errors.EmptyDataError:
        return head, np.empty(0, np.uint8), np.empty(0, np.int64)
    except (ValueError, pd.errors.ParserError) as e:
        raise StreamFormatError(f"{path}: malformed event rows: {e}") from e
    if len(frame) and (frame["channel"].min() < 0 or frame["channel"].max() > 255):
        raise StreamFormatError(f"{path}: channel ids must fit in 8 bits")
    return head, frame["channel"].to_numpy(), frame["time_ps"].to_numpy()


def read_stream(path: PathLike) -> TimestampStream:
    """Read a stream in either format, detected by the leading magic bytes."""
    src = Path(path)
    try:
        with open(src, "rb") as f:
            magic = f.read(len(MAGIC))
    except OSError as e:
        raise StreamFormatError(f"Cannot read stream {src}: {e}") from e

    head, channels, times = _read_binary(src) if magic == MAGIC else _read_text(src)
    if head.get("format", FORMAT_ID) != FORMAT_ID:
        raise StreamFormatError(f"{src}: unsupported stream format {head['format']!r}")
    stream = _build(head, channels, times, src)
    logger.debug(f"Read {len(stream)} events from {src}")
    return stream
