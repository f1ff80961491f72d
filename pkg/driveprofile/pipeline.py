"""Training on normal-only windows and residual scoring at inference time."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .config import DataConfig, TrainConfig
from .errors import ModelError, ValidationError
from .ingest import load_session
from .lstm import LstmModel, forward, init_model
from .models import (
    AGGRESSIVE_BEHAVIORS,
    CHANNELS,
    Behavior,
    FrameSeries,
    ScalerParams,
    ScoreRecord,
    Session,
    WindowPair,
)
from .optim import AdamState, adam_step, clip_gradients, mse_loss, objective, residuals
from .preprocess import (
    TARGET_RATE_HZ,
    apply_scaler,
    assemble_frames,
    fit_scaler,
    resample_channel,
    slide_windows,
)

logger = logging.getLogger(__name__)

SCORE_BATCH = 256


class Decision(str, Enum):
    NORMAL = "normal"
    AGGRESSIVE = "aggressive"


@dataclass
class TrainResult:
    model: LstmModel
    loss_history: List[float]
    manifest: Dict[str, Any]


@dataclass
class PreparedData:
    scaler: ScalerParams
    window_size: int
    train_pairs: List[WindowPair]
    normal_pairs: List[WindowPair]
    aggressive_pairs: Dict[Behavior, List[WindowPair]] = field(default_factory=dict)

    def counts(self) -> Dict[str, int]:
        counts = {"train": len(self.train_pairs), "normal": len(self.normal_pairs)}
        for behavior in AGGRESSIVE_BEHAVIORS:
            counts[behavior.value] = len(self.aggressive_pairs.get(behavior, []))
        return counts


def build_frames(session: Session, target_rate: float = TARGET_RATE_HZ) -> FrameSeries:
    """Resample the 12 channels over the span every channel covers."""
    t0 = max(int(trace.timestamps[0]) for trace in session.traces)
    t1 = min(int(trace.timestamps[-1]) for trace in session.traces)
    if t1 <= t0:
        raise ValidationError(f"{session.name}: channels do not overlap in time")
    by_channel = {trace.channel: trace for trace in session.traces}
    resampled = [resample_channel(by_channel[c], target_rate, (t0, t1)) for c in CHANNELS]
    series = assemble_frames(
        resampled, session.labels, start=t0, rate=target_rate, name=session.name
    )
    logger.debug("session=%s frames=%d", session.name, len(series))
    return series


def load_frames(paths: Sequence[Path], data: DataConfig, target_rate: float) -> List[FrameSeries]:
    return [
        build_frames(
            load_session(path, data.timestamp_unit, data.label_unit, data.labels_relative),
            target_rate,
        )
        for path in paths
    ]


def split_point(length: int, train_fraction: float) -> int:
    """Frames before this index form the contiguous training block."""
    return int(np.floor(length * train_fraction))


def normal_windows(labels: np.ndarray, window_size: int) -> np.ndarray:
    """Mask over window starts whose W+1 frames are all Normal."""
    abnormal = np.concatenate(([0], np.cumsum(labels != Behavior.NORMAL.code)))
    starts = np.arange(len(labels) - window_size)
    return abnormal[starts + window_size + 1] == abnormal[starts]


def check_training_sessions(train_frames: Sequence[FrameSeries], carve_normal: bool) -> None:
    if carve_normal:
        return
    for series in train_frames:
        aggressive = int(np.count_nonzero(~series.normal_mask()))
        if aggressive:
            raise ValidationError(
                f"non-normal data in training set: session {series.name or '?'} has "
                f"{aggressive} aggressive frames (set data.carve_normal to exclude them)"
            )


def fit_training_scaler(
    train_frames: Sequence[FrameSeries], train_fraction: float
) -> ScalerParams:
    blocks = []
    for series in train_frames:
        cut = split_point(len(series), train_fraction)
        blocks.append(
            FrameSeries(
                start=series.start,
                rate=series.rate,
                frames=series.frames[:cut],
                labels=series.labels[:cut],
                name=series.name,
            )
        )
    return fit_scaler(blocks)


def prepare_dataset(
    train_frames: Sequence[FrameSeries],
    eval_frames: Sequence[FrameSeries],
    window_size: int,
    train_fraction: float = 0.7,
    strict: bool = False,
    carve_normal: bool = False,
    scaler: Optional[ScalerParams] = None,
) -> PreparedData:
    """Contiguous split of the training sessions plus aggressive windows of the eval sessions.

    Training windows are the pure-Normal windows lying wholly before each session's
    cut; the Normal windows starting after the cut are the evaluation negatives.
    """
    check_training_sessions(train_frames, carve_normal)
    scaler = scaler or fit_training_scaler(train_frames, train_fraction)

    train_pairs: List[WindowPair] = []
    normal_pairs: List[WindowPair] = []
    for series in train_frames:
        scaled = apply_scaler(series, scaler)
        cut = split_point(len(series), train_fraction)
        pure = normal_windows(series.labels, window_size)
        labelled = slide_windows(scaled, window_size, strict)
        for pair in labelled:
            start = pair.origin - window_size
            if pair.origin < cut and pure[start]:
                train_pairs.append(pair)
            elif start >= cut and pair.label is Behavior.NORMAL:
                normal_pairs.append(pair)

    aggressive: Dict[Behavior, List[WindowPair]] = {b: [] for b in AGGRESSIVE_BEHAVIORS}
    for series in eval_frames:
        for pair in slide_windows(apply_scaler(series, scaler), window_size, strict):
            if pair.label.is_aggressive:
                aggressive[pair.label].append(pair)

    prepared = PreparedData(
        scaler=scaler,
        window_size=window_size,
        train_pairs=train_pairs,
        normal_pairs=normal_pairs,
        aggressive_pairs=aggressive,
    )
    logger.info(
        "window=%d %s",
        window_size,
        " ".join(f"{key}={value}" for key, value in prepared.counts().items()),
    )
    return prepared


def _uniform_window(pairs: Sequence[WindowPair]) -> int:
    sizes = {pair.window_size for pair in pairs}
    if len(sizes) > 1:
        raise ValidationError(f"pairs mix window sizes {sorted(sizes)}")
    return sizes.pop()


def train(
    config: TrainConfig, normal_pairs: Sequence[WindowPair], scaler_hash: str = ""
) -> TrainResult:
    """Fit a fresh model with seeded shuffled mini-batches of Adam steps."""
    if not normal_pairs:
        raise ValidationError("no training windows")
    impure = sum(1 for pair in normal_pairs if pair.label is not Behavior.NORMAL)
    if impure:
        raise ValidationError(f"non-normal data in training set: {impure} windows")
    window = _uniform_window(normal_pairs)
    if window != config.window_size:
        raise ValidationError(
            f"training windows have size {window}, config expects {config.window_size}"
        )

    model = init_model(
        config.hidden_size,
        config.num_layers,
        config.seed,
        dense_size=config.dense_size,
        window_size=window,
    )
    state = AdamState.for_model(model)
    rng = np.random.default_rng([config.seed, 1])
    targets = np.stack([pair.target for pair in normal_pairs])
    count = len(normal_pairs)

    history: List[float] = []
    best: Optional[LstmModel] = None
    best_epoch = config.epochs
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(count) if config.shuffle else np.arange(count)
        total = 0.0
        for begin in range(0, count, config.batch_size):
            batch = order[begin : begin + config.batch_size]
            inputs = np.stack([normal_pairs[k].input for k in batch])
            data_loss, _, grads = objective(model, inputs, targets[batch], config.optimizer)
            if config.clip_norm > 0:
                clip_gradients(grads, config.clip_norm)
            adam_step(model, grads, state, config.optimizer)
            total += data_loss * len(batch)
        history.append(total / count)
        logger.info("epoch=%d/%d loss=%.6g", epoch, config.epochs, history[-1])
        if config.retain_best and history[-1] < min(history[:-1], default=np.inf):
            best, best_epoch = model.copy(), epoch

    if best is not None:
        model = best
    manifest: Dict[str, Any] = {
        "train_config": asdict(config),
        "seed": config.seed,
        "scaler_sha256": scaler_hash,
        "window_size": window,
        "parameter_count": model.parameter_count(),
        "train_windows": count,
        "non_normal_windows": 0,
        "adam_steps": state.t,
        "loss_history": history,
        "final_loss": history[-1],
        "best_epoch": best_epoch,
    }
    return TrainResult(model=model, loss_history=history, manifest=manifest)


def _check_window(model: LstmModel, window: int) -> None:
    if model.window_size and model.window_size != window:
        raise ModelError(f"model was trained on window {model.window_size}, pair has {window}")


def score_window(model: LstmModel, pair: WindowPair) -> ScoreRecord:
    _check_window(model, pair.window_size)
    prediction, _ = forward(model, pair.input)
    error, _ = mse_loss(prediction, pair.target)
    return ScoreRecord(origin=pair.origin, error=error, label=pair.label, session=pair.session)


def score_dataset(
    model: LstmModel, pairs: Sequence[WindowPair], batch_size: int = SCORE_BATCH
) -> List[ScoreRecord]:
    """Score every pair in order; batches share no state between pairs."""
    if not pairs:
        return []
    _check_window(model, _uniform_window(pairs))
    records: List[ScoreRecord] = []
    for begin in range(0, len(pairs), batch_size):
        chunk = pairs[begin : begin + batch_size]
        prediction, _ = forward(model, np.stack([pair.input for pair in chunk]))
        errors = residuals(prediction, np.stack([pair.target for pair in chunk]))
        records.extend(
            ScoreRecord(origin=p.origin, error=float(e), label=p.label, session=p.session)
            for p, e in zip(chunk, errors)
        )
    return records


def classify(record: ScoreRecord, threshold: float) -> Decision:
    """Aggressive iff the residual strictly exceeds the threshold."""
    if not np.isfinite(threshold):
        raise ValidationError(f"threshold must be finite, got {threshold}")
    return Decision.AGGRESSIVE if record.error > threshold else Decision.NORMAL
