"""Uniform-rate resampling, MinMax scaling and window sliding."""

from __future__ import annotations

import hashlib
import logging
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ValidationError
from .models import (
    CHANNELS,
    NUM_FEATURES,
    Behavior,
    EventLabel,
    FrameSeries,
    ScalerParams,
    SensorTrace,
    WindowPair,
    channel_name,
)

logger = logging.getLogger(__name__)

TARGET_RATE_HZ = 50.0


def period_us(rate: float) -> int:
    """Bin width in microseconds; the rate must divide one second exactly."""
    if rate <= 0:
        raise ValidationError(f"rate must be positive, got {rate}")
    period = int(round(1e6 / rate))
    if period * rate != 1e6:
        raise ValidationError(f"rate {rate} Hz does not give a whole-microsecond period")
    return period


def resample_channel(
    trace: SensorTrace, target_rate: float = TARGET_RATE_HZ, span: Tuple[int, int] = (0, 0)
) -> np.ndarray:
    """First-sample-per-bin downsampling with zero-order hold for empty bins."""
    t0, t1 = span
    timestamps = trace.timestamps
    if t0 < timestamps[0]:
        raise ValidationError(
            f"{channel_name(trace.channel)}: span starts at {t0} before the first sample "
            f"at {int(timestamps[0])}; no value to hold"
        )
    period = period_us(target_rate)
    count = max(int((t1 - t0) // period), 0)
    bin_starts = t0 + np.arange(count, dtype=np.int64) * period
    first = np.searchsorted(timestamps, bin_starts, side="left")
    clipped = np.minimum(first, len(timestamps) - 1)
    occupied = (first < len(timestamps)) & (timestamps[clipped] < bin_starts + period)
    return trace.values[np.where(occupied, first, first - 1)]


def assemble_frames(
    channels: Sequence[np.ndarray],
    labels: Iterable[EventLabel] = (),
    start: int = 0,
    rate: float = TARGET_RATE_HZ,
    name: str = "",
) -> FrameSeries:
    """Stack 12 resampled channels (canonical order) and label every frame."""
    if len(channels) != NUM_FEATURES:
        raise ValidationError(f"expected {NUM_FEATURES} channels, got {len(channels)}")
    lengths = {len(channel) for channel in channels}
    if len(lengths) != 1:
        raise ValidationError(f"channel length mismatch: {sorted(lengths)}")
    frames = np.column_stack([np.asarray(c, dtype=np.float64) for c in channels])

    timestamps = start + np.arange(len(frames), dtype=np.int64) * period_us(rate)
    codes = np.full(len(frames), Behavior.NORMAL.code, dtype=np.int64)
    # Later-starting events overwrite earlier ones where they overlap.
    for label in sorted(labels, key=lambda item: item.start):
        covered = (timestamps >= label.start) & (timestamps < label.end)
        codes[covered] = label.behavior.code
    return FrameSeries(start=start, rate=rate, frames=frames, labels=codes, name=name)


def fit_scaler(series: Union[FrameSeries, Sequence[FrameSeries]]) -> ScalerParams:
    """Column-wise extrema over Normal frames only."""
    parts = [series] if isinstance(series, FrameSeries) else list(series)
    normal = np.concatenate(
        [part.frames[part.normal_mask()] for part in parts]
        or [np.empty((0, NUM_FEATURES))]
    )
    if len(normal) < 2:
        raise ValidationError(
            f"need at least 2 normal frames to fit the scaler, got {len(normal)}"
        )

    digest = hashlib.sha256(np.ascontiguousarray(normal, dtype="<f8").tobytes()).hexdigest()
    params = ScalerParams(
        minimum=normal.min(axis=0), maximum=normal.max(axis=0), provenance=digest
    )
    flat = [channel_name(CHANNELS[j]) for j in np.flatnonzero(params.degenerate)]
    if flat:
        logger.warning("degenerate features scale to 0: %s", ", ".join(flat))
    logger.debug("scaler fitted frames=%d sha256=%s", len(normal), digest[:12])
    return params


def apply_scaler(series: FrameSeries, params: ScalerParams) -> FrameSeries:
    """(x - min) / (max - min) per feature; no clamping, degenerate features map to 0."""
    return series.with_frames(scale_frames(series.frames, params))


def scale_frames(frames: np.ndarray, params: ScalerParams) -> np.ndarray:
    degenerate = params.degenerate
    span = np.where(degenerate, 1.0, params.maximum - params.minimum)
    scaled = (frames - params.minimum) / span
    scaled[..., degenerate] = 0.0
    return scaled


def unscale_frames(scaled: np.ndarray, params: ScalerParams) -> np.ndarray:
    return scaled * (params.maximum - params.minimum) + params.minimum


def uniform_windows(labels: np.ndarray, window_size: int) -> np.ndarray:
    """Mask over window starts whose W+1 frames all carry the same label."""
    changes = np.concatenate(([0], np.cumsum(labels[1:] != labels[:-1])))
    starts = np.arange(len(labels) - window_size)
    return changes[starts + window_size] == changes[starts]


def slide_windows(
    series: FrameSeries, window_size: int, strict: bool = False
) -> List[WindowPair]:
    """Stride-1 (W frames, next frame) pairs labeled by their target frame."""
    if window_size < 1:
        raise ValidationError(f"window size must be positive, got {window_size}")
    count = len(series) - window_size
    if count <= 0:
        raise ValidationError(
            f"series shorter than window: {len(series)} frames, window {window_size}"
        )
    views = sliding_window_view(series.frames, (window_size, NUM_FEATURES))[:, 0]
    keep = uniform_windows(series.labels, window_size) if strict else np.ones(count, bool)
    return [
        WindowPair(
            input=views[k],
            target=series.frames[k + window_size],
            label=series.label_at(k + window_size),
            origin=int(k) + window_size,
            session=series.name,
        )
        for k in np.flatnonzero(keep)
    ]
