import numpy as np
import pytest
from sklearn.preprocessing import MinMaxScaler

from driveprofile.errors import ValidationError
from driveprofile.models import (
    NUM_FEATURES,
    Axis,
    Behavior,
    EventLabel,
    FrameSeries,
    SensorKind,
    SensorTrace,
)
from driveprofile.preprocess import (
    apply_scaler,
    assemble_frames,
    fit_scaler,
    period_us,
    resample_channel,
    scale_frames,
    slide_windows,
    unscale_frames,
)


def _trace(timestamps, values) -> SensorTrace:
    return SensorTrace(
        SensorKind.ACCELERATION,
        Axis.X,
        np.asarray(timestamps, dtype=np.int64),
        np.asarray(values, dtype=np.float64),
    )


def _series(frames: np.ndarray, labels=None) -> FrameSeries:
    if labels is None:
        labels = np.zeros(len(frames), dtype=np.int64)
    return FrameSeries(start=0, rate=50.0, frames=frames, labels=np.asarray(labels), name="s")


def test_period_must_be_whole_microseconds() -> None:
    assert period_us(50.0) == 20_000
    assert period_us(25) == 40_000
    with pytest.raises(ValidationError):
        period_us(3.0)
    with pytest.raises(ValidationError):
        period_us(0)


def test_resampling_aligned_50hz_signal_is_identity() -> None:
    values = np.sin(np.arange(40) / 3.0)
    trace = _trace(np.arange(40) * 20_000, values)
    np.testing.assert_array_equal(resample_channel(trace, 50.0, (0, 40 * 20_000)), values)


def test_downsampling_takes_first_sample_of_each_bin() -> None:
    trace = _trace(np.arange(20) * 10_000, np.arange(20, dtype=float))
    np.testing.assert_array_equal(resample_channel(trace, 50.0, (0, 200_000)), np.arange(0, 20, 2))


def test_upsampling_holds_previous_value() -> None:
    trace = _trace(np.arange(4) * 100_000, [1.0, 2.0, 3.0, 4.0])
    out = resample_channel(trace, 50.0, (0, 300_000))
    np.testing.assert_array_equal(out, np.repeat([1.0, 2.0, 3.0], 5))


def test_jittered_samples_fall_in_their_bins() -> None:
    trace = _trace([0, 19_999, 20_001, 61_000], [1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(resample_channel(trace, 50.0, (0, 80_000)), [1.0, 3.0, 3.0, 4.0])


def test_span_before_first_sample_is_rejected() -> None:
    trace = _trace([100, 20_100], [1.0, 2.0])
    with pytest.raises(ValidationError, match="before the first sample"):
        resample_channel(trace, 50.0, (0, 40_000))


def test_assemble_frames_labels_half_open_intervals() -> None:
    channels = [np.zeros(30) for _ in range(NUM_FEATURES)]
    labels = [EventLabel(Behavior.AGGR_RIGHT_TURN, 10 * 20_000, 15 * 20_000)]
    series = assemble_frames(channels, labels)
    aggressive = np.flatnonzero(series.labels != Behavior.NORMAL.code)
    np.testing.assert_array_equal(aggressive, [10, 11, 12, 13, 14])
    assert series.label_at(10) is Behavior.AGGR_RIGHT_TURN


def test_later_event_wins_where_labels_overlap() -> None:
    channels = [np.zeros(20) for _ in range(NUM_FEATURES)]
    labels = [
        EventLabel(Behavior.AGGR_LEFT_TURN, 8 * 20_000, 12 * 20_000),
        EventLabel(Behavior.AGGR_BRAKE, 2 * 20_000, 10 * 20_000),
    ]
    series = assemble_frames(channels, labels)
    assert series.label_at(9) is Behavior.AGGR_LEFT_TURN
    assert series.label_at(7) is Behavior.AGGR_BRAKE
    assert series.label_at(12) is Behavior.NORMAL


def test_assemble_frames_checks_channels() -> None:
    with pytest.raises(ValidationError):
        assemble_frames([np.zeros(5)] * 11)
    with pytest.raises(ValidationError, match="length mismatch"):
        assemble_frames([np.zeros(5)] * 11 + [np.zeros(6)])


def test_scaler_ignores_aggressive_frames() -> None:
    rng = np.random.default_rng(4)
    frames = rng.normal(size=(200, NUM_FEATURES))
    labels = np.zeros(200, dtype=np.int64)
    clean = fit_scaler(_series(frames.copy(), labels))

    frames[50:60] = 1e6
    labels[50:60] = Behavior.AGGR_BRAKE.code
    poisoned = fit_scaler(_series(frames, labels))
    normal = frames[labels == 0]
    np.testing.assert_array_equal(poisoned.minimum, normal.min(axis=0))
    np.testing.assert_array_equal(poisoned.maximum, normal.max(axis=0))
    assert not np.array_equal(clean.maximum, np.full(NUM_FEATURES, 1e6))

    scaled = apply_scaler(_series(frames, labels), poisoned).frames
    assert scaled[labels == 0].min() >= 0.0 and scaled[labels == 0].max() <= 1.0
    # No clamping: the outliers stay far outside [0, 1].
    assert scaled[labels != 0].min() > 1.0


def test_scaler_matches_sklearn_minmax() -> None:
    frames = np.random.default_rng(9).uniform(-3, 7, size=(120, NUM_FEATURES))
    params = fit_scaler(_series(frames))
    expected = MinMaxScaler().fit(frames).transform(frames)
    np.testing.assert_allclose(scale_frames(frames, params), expected, rtol=0, atol=1e-12)
    np.testing.assert_allclose(unscale_frames(expected, params), frames, atol=1e-12)


def test_degenerate_feature_scales_to_zero() -> None:
    frames = np.random.default_rng(1).normal(size=(30, NUM_FEATURES))
    frames[:, 3] = 2.5
    params = fit_scaler(_series(frames))
    assert params.degenerate[3]
    scaled = scale_frames(frames + 1.0, params)
    np.testing.assert_array_equal(scaled[:, 3], np.zeros(30))
    assert np.all(np.isfinite(scaled))


def test_scaler_needs_two_normal_frames() -> None:
    frames = np.zeros((3, NUM_FEATURES))
    with pytest.raises(ValidationError):
        fit_scaler(_series(frames, [0, 1, 1]))


def test_slide_windows_count_and_alignment() -> None:
    frames = np.arange(10 * NUM_FEATURES, dtype=float).reshape(10, NUM_FEATURES)
    labels = [0] * 7 + [Behavior.AGGR_BRAKE.code] * 3
    pairs = slide_windows(_series(frames, labels), 3)
    assert len(pairs) == 10 - 3
    first = pairs[0]
    np.testing.assert_array_equal(first.input, frames[0:3])
    np.testing.assert_array_equal(first.target, frames[3])
    assert first.origin == 3
    assert [pair.label for pair in pairs][-3:] == [Behavior.AGGR_BRAKE] * 3
    assert pairs[3].label is Behavior.NORMAL
    assert all(pair.session == "s" for pair in pairs)


def test_strict_windows_drop_mixed_label_windows() -> None:
    frames = np.zeros((10, NUM_FEATURES))
    labels = [0] * 5 + [Behavior.AGGR_BRAKE.code] * 5
    strict = slide_windows(_series(frames, labels), 2, strict=True)
    # Windows touching frames 4 and 5 together (starts 3 and 4) mix labels.
    assert [pair.origin for pair in strict] == [2, 3, 4, 7, 8, 9]


def test_series_shorter_than_window_is_rejected() -> None:
    series = _series(np.zeros((5, NUM_FEATURES)))
    with pytest.raises(ValidationError, match="shorter than window"):
        slide_windows(series, 5)
    assert len(slide_windows(series, 4)) == 1
