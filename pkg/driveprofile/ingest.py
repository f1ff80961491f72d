"""Parsing of per-sensor CSV logs and behavior label files."""

from __future__ import annotations

import io
import logging
import re
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import TIME_UNITS
from .errors import DataError, ParseError, ValidationError
from .models import (
    CHANNELS,
    Axis,
    Behavior,
    Channel,
    ChannelSummary,
    EventLabel,
    SensorKind,
    SensorTrace,
    Session,
    SessionSummary,
    channel_name,
    first_non_increasing,
)

logger = logging.getLogger(__name__)

# Canonical file name first, then the public dataset's name.
SENSOR_FILES: Dict[SensorKind, Tuple[str, ...]] = {
    SensorKind.ACCELERATION: ("Acceleration.csv", "acelerometro_terra.csv"),
    SensorKind.LINEAR_ACCELERATION: ("LinearAcceleration.csv", "aceleracaoLinear_terra.csv"),
    SensorKind.MAGNETOMETER: ("Magnetometer.csv", "magnetometro_terra.csv"),
    SensorKind.GYROSCOPE: ("Gyroscope.csv", "giroscopio_terra.csv"),
}
EVENT_FILES: Tuple[str, ...] = ("events.csv", "groundTruth.csv")

_US_PER_UNIT = {"s": 1_000_000, "ms": 1_000, "us": 1}
_INTEGER = re.compile(r"[+-]?\d+")
_PANDAS_LINE = re.compile(r"line (\d+)")


def _read_table(raw_text: str, *, header: Optional[int]) -> pd.DataFrame:
    try:
        return pd.read_csv(
            io.StringIO(raw_text),
            header=header,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError:
        return pd.DataFrame()
    except pd.errors.ParserError as exc:
        match = _PANDAS_LINE.search(str(exc))
        raise ParseError(str(exc), line=int(match.group(1)) if match else None) from exc


def _check_numeric(column: pd.Series, what: str, first_line: int) -> None:
    numeric = pd.to_numeric(column, errors="coerce")
    bad = np.flatnonzero(numeric.isna().to_numpy())
    if bad.size:
        row = int(bad[0])
        raw = column.iloc[row]
        detail = "missing value" if not isinstance(raw, str) or not raw else f"{raw!r}"
        raise ParseError(f"{what}: not a number ({detail})", line=row + first_line)


def _to_microseconds(column: pd.Series, unit: str, what: str, first_line: int) -> np.ndarray:
    if unit not in TIME_UNITS:
        raise DataError(f"unknown time unit {unit!r} (expected one of {', '.join(TIME_UNITS)})")
    _check_numeric(column, what, first_line)
    text = column.str.strip()
    if text.map(lambda value: bool(_INTEGER.fullmatch(value))).all():
        ints = text.astype(np.int64).to_numpy()
        if unit == "ns":
            return ints // 1_000
        return ints * _US_PER_UNIT[unit]
    scale = 1e-3 if unit == "ns" else float(_US_PER_UNIT[unit])
    return np.round(text.map(float).to_numpy(dtype=np.float64) * scale).astype(np.int64)


def _locate_columns(header: Sequence[str], expected_axes: int) -> Tuple[str, List[str]]:
    lowered = {name.strip().lower(): name for name in header}
    time_col = lowered.get("timestamp", header[0])
    axis_names = [axis.value for axis in Axis][:expected_axes]
    if all(name in lowered for name in axis_names):
        return time_col, [lowered[name] for name in axis_names]
    rest = [name for name in header if name != time_col]
    if len(rest) < expected_axes:
        raise ParseError(
            f"expected a timestamp and {expected_axes} axis columns, got {len(header)} columns",
            line=1,
        )
    return time_col, rest[:expected_axes]


def parse_sensor_file(
    raw_text: str,
    sensor_kind: SensorKind,
    expected_axes: int = 3,
    timestamp_unit: str = "us",
) -> List[SensorTrace]:
    """Parse one sensor log (header + ``timestamp,x,y,z`` rows) into one trace per axis."""
    table = _read_table(raw_text, header=0)
    if table.empty:
        raise ValidationError(f"{sensor_kind.value}: no samples")
    time_col, axis_cols = _locate_columns(list(table.columns), expected_axes)
    timestamps = _to_microseconds(table[time_col], timestamp_unit, "timestamp", first_line=2)

    index = first_non_increasing(timestamps)
    if index is not None:
        raise ValidationError(
            f"{sensor_kind.value}: non-monotonic timestamp at sample {index} (line {index + 2})",
            index=index,
        )

    traces: List[SensorTrace] = []
    for axis, column in zip(Axis, axis_cols):
        _check_numeric(table[column], f"{sensor_kind.value} {axis.value}", first_line=2)
        values = table[column].str.strip().map(float).to_numpy(dtype=np.float64)
        traces.append(
            SensorTrace(sensor_kind=sensor_kind, axis=axis, timestamps=timestamps, values=values)
        )
    return traces


def parse_event_file(
    raw_text: str, unit: str = "us", offset_us: int = 0
) -> List[EventLabel]:
    """Parse ``behavior,start,end`` rows; a non-numeric first row is taken as the header."""
    table = _read_table(raw_text, header=None)
    if table.empty:
        return []
    if table.shape[1] < 3:
        raise ParseError("label rows need behavior, start and end", line=1)
    first_line = 1
    if pd.isna(pd.to_numeric(table.iloc[0, 1], errors="coerce")):
        table = table.iloc[1:].reset_index(drop=True)
        first_line = 2
    if table.empty:
        return []

    starts = _to_microseconds(table[1], unit, "start", first_line) + offset_us
    ends = _to_microseconds(table[2], unit, "end", first_line) + offset_us
    labels: List[EventLabel] = []
    for row, (name, start, end) in enumerate(zip(table[0], starts, ends)):
        line = row + first_line
        try:
            labels.append(
                EventLabel(behavior=Behavior.parse(str(name)), start=int(start), end=int(end))
            )
        except ValidationError as exc:
            raise ValidationError(f"line {line}: {exc.message}", index=row) from exc
    return sorted(labels, key=lambda label: label.start)


def format_sensor_file(traces: Sequence[SensorTrace]) -> str:
    """Render the traces of one sensor back into the layout parse_sensor_file reads."""
    if not traces:
        raise ValidationError("no traces to format")
    timestamps = traces[0].timestamps
    for trace in traces[1:]:
        if not np.array_equal(trace.timestamps, timestamps):
            raise ValidationError(
                f"{channel_name(trace.channel)} does not share the sensor's timestamps"
            )
    frame = pd.DataFrame({"timestamp": timestamps})
    for trace in traces:
        frame[trace.axis.value] = trace.values
    return frame.to_csv(index=False, lineterminator="\n")


def format_event_file(labels: Iterable[EventLabel]) -> str:
    frame = pd.DataFrame(
        [(label.behavior.value, label.start, label.end) for label in labels],
        columns=["behavior", "start_us", "end_us"],
    )
    return frame.to_csv(index=False, lineterminator="\n")


def validate_session(
    traces: Sequence[SensorTrace], labels: Sequence[EventLabel] = ()
) -> SessionSummary:
    """Check that exactly the 12 canonical channels are present and summarise them."""
    counts = Counter(trace.channel for trace in traces)
    duplicates = sorted(channel_name(c) for c, n in counts.items() if n > 1)
    if duplicates:
        raise ValidationError(f"duplicate channels: {', '.join(duplicates)}")
    missing = [channel_name(c) for c in CHANNELS if c not in counts]
    if missing:
        raise ValidationError(f"missing channels: {', '.join(missing)}")

    by_channel: Dict[Channel, SensorTrace] = {trace.channel: trace for trace in traces}
    channels = [
        ChannelSummary(
            sensor_kind=kind,
            axis=axis,
            samples=len(trace),
            first_us=int(trace.timestamps[0]),
            last_us=int(trace.timestamps[-1]),
            median_interval_us=trace.median_interval_us,
            rate_hz=trace.native_rate_hz,
        )
        for (kind, axis), trace in ((c, by_channel[c]) for c in CHANNELS)
    ]
    label_counts = Counter(label.behavior.value for label in labels)
    return SessionSummary(
        channels=channels,
        duration_us=max(c.last_us for c in channels) - min(c.first_us for c in channels),
        label_count=len(labels),
        label_counts=dict(sorted(label_counts.items())),
    )


def _find_file(directory: Path, names: Sequence[str]) -> Optional[Path]:
    for name in names:
        candidate = directory / name
        if candidate.exists():
            return candidate
    return None


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path.name}: not valid UTF-8 text (byte {exc.start})") from exc
    except OSError as exc:
        raise DataError(f"{path.name}: unreadable ({exc.strerror or exc})") from exc


def load_session(
    directory: Path,
    timestamp_unit: str = "us",
    label_unit: str = "us",
    labels_relative: bool = False,
) -> Session:
    """Read the four sensor files and the label file of one recording session."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"session directory not found: {directory}")

    traces: List[SensorTrace] = []
    for kind, names in SENSOR_FILES.items():
        path = _find_file(directory, names)
        if path is None:
            raise ValidationError(
                f"{directory.name}: missing channels {kind.value}.x, {kind.value}.y, "
                f"{kind.value}.z (no {names[0]})"
            )
        text = _read_text(path)
        try:
            traces.extend(parse_sensor_file(text, kind, 3, timestamp_unit))
        except DataError as exc:
            exc.message = f"{path.name}: {exc.message}"
            exc.args = (exc.message,)
            raise

    offset = min(int(trace.timestamps[0]) for trace in traces) if labels_relative else 0
    label_path = _find_file(directory, EVENT_FILES)
    labels: List[EventLabel] = []
    if label_path is None:
        logger.info("session=%s no label file; all frames are normal", directory.name)
    else:
        labels = parse_event_file(_read_text(label_path), label_unit, offset)

    summary = validate_session(traces, labels)
    logger.info(
        "session=%s channels=%d duration_s=%.1f labels=%d",
        directory.name,
        summary.channel_count,
        summary.duration_us / 1e6,
        summary.label_count,
    )
    return Session(name=directory.name, traces=traces, labels=labels, summary=summary)
