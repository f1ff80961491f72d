"""ROC-AUC scoring and the window-size x behavior experiment grid."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .config import TrainConfig
from .errors import ValidationError
from .lstm import LstmModel
from .models import Behavior, FrameSeries, ScalerParams, ScoreRecord, WindowPair
from .pipeline import (
    TrainResult,
    check_training_sessions,
    fit_training_scaler,
    prepare_dataset,
    score_dataset,
    train,
)
from .storage import checkpoint_bytes

logger = logging.getLogger(__name__)

# Row order of the AUC table.
TABLE_LABELS: Tuple[Behavior, ...] = (
    Behavior.AGGR_RIGHT_TURN,
    Behavior.AGGR_LEFT_TURN,
    Behavior.AGGR_LANE_CHANGE_RIGHT,
    Behavior.AGGR_LANE_CHANGE_LEFT,
    Behavior.AGGR_BRAKE,
    Behavior.AGGR_ACCELERATION,
)
POOLED_LABEL = "all_aggressive"


@dataclass(frozen=True)
class RocResult:
    auc: float
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    n_pos: int
    n_neg: int

    @property
    def curve(self) -> List[Tuple[float, float]]:
        return [(float(x), float(y)) for x, y in zip(self.fpr, self.tpr)]

    def curve_area(self) -> float:
        return float(np.trapezoid(self.tpr, self.fpr))


def mann_whitney_auc(positives: np.ndarray, negatives: np.ndarray) -> float:
    """(#pos > neg + 0.5 * #ties) / (n_pos * n_neg) from tie-averaged ranks."""
    n_pos, n_neg = len(positives), len(negatives)
    ranks = rankdata(np.concatenate((positives, negatives)), method="average")
    u_statistic = float(np.sum(ranks[:n_pos])) - n_pos * (n_pos + 1) / 2.0
    return u_statistic / (n_pos * n_neg)


def roc_curve(
    positives: np.ndarray, negatives: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sweep tau over +inf, every distinct error (descending), -inf; positive iff error > tau."""
    thresholds = np.concatenate(
        ([np.inf], np.unique(np.concatenate((positives, negatives)))[::-1], [-np.inf])
    )
    pos_sorted, neg_sorted = np.sort(positives), np.sort(negatives)
    tp = len(pos_sorted) - np.searchsorted(pos_sorted, thresholds, side="right")
    fp = len(neg_sorted) - np.searchsorted(neg_sorted, thresholds, side="right")
    fpr, tpr = fp / len(neg_sorted), tp / len(pos_sorted)
    keep = np.concatenate(([True], (np.diff(fpr) != 0) | (np.diff(tpr) != 0)))
    return fpr[keep], tpr[keep], thresholds[keep]


def roc_from_errors(positives: Sequence[float], negatives: Sequence[float]) -> RocResult:
    pos = np.asarray(positives, dtype=np.float64)
    neg = np.asarray(negatives, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise ValidationError(f"degenerate ROC: {len(pos)} positives, {len(neg)} negatives")
    fpr, tpr, thresholds = roc_curve(pos, neg)
    result = RocResult(
        auc=mann_whitney_auc(pos, neg),
        fpr=fpr,
        tpr=tpr,
        thresholds=thresholds,
        n_pos=len(pos),
        n_neg=len(neg),
    )
    if abs(result.curve_area() - result.auc) > 1e-12:
        raise ArithmeticError(
            f"threshold sweep area {result.curve_area()} disagrees with pair count {result.auc}"
        )
    return result


def roc_auc(records: Sequence[ScoreRecord], positive_label: Behavior) -> RocResult:
    """Binary ROC of one aggressive class against Normal; other classes are ignored."""
    if not positive_label.is_aggressive:
        raise ValidationError("the positive class must be an aggressive behavior")
    positives = [r.error for r in records if r.label is positive_label]
    negatives = [r.error for r in records if r.label is Behavior.NORMAL]
    return roc_from_errors(positives, negatives)


def pooled_roc_auc(records: Sequence[ScoreRecord]) -> RocResult:
    """All aggressive classes together as positives; reported next to the per-class grid."""
    positives = [r.error for r in records if r.label.is_aggressive]
    negatives = [r.error for r in records if r.label is Behavior.NORMAL]
    return roc_from_errors(positives, negatives)


def evaluate_label(
    model: LstmModel,
    normal_pairs: Sequence[WindowPair],
    aggressive_pairs: Sequence[WindowPair],
) -> RocResult:
    """Score both sets; the second set is the positive class whatever its labels say."""
    if not normal_pairs or not aggressive_pairs:
        raise ValidationError("degenerate ROC: both pair sets must be non-empty")
    if normal_pairs[0].window_size != aggressive_pairs[0].window_size:
        raise ValidationError("normal and aggressive pairs use different window sizes")
    negatives = [r.error for r in score_dataset(model, normal_pairs)]
    positives = [r.error for r in score_dataset(model, aggressive_pairs)]
    return roc_from_errors(positives, negatives)


@dataclass
class GridResult:
    window_sizes: List[int]
    labels: List[Behavior]
    cells: Dict[Tuple[int, Behavior], Optional[float]]
    pooled: Dict[int, Optional[float]] = field(default_factory=dict)
    provenance: Dict[int, str] = field(default_factory=dict)
    curves: Dict[Tuple[int, str], RocResult] = field(default_factory=dict, compare=False)
    trained: Dict[int, TrainResult] = field(default_factory=dict, compare=False)

    def cell(self, window: int, label: Behavior) -> Optional[float]:
        return self.cells.get((window, label))

    @staticmethod
    def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
        present = [v for v in values if v is not None]
        return float(np.mean(present)) if present else None

    def row_mean(self, label: Behavior) -> Optional[float]:
        return self._mean([self.cell(w, label) for w in self.window_sizes])

    def column_mean(self, window: int) -> Optional[float]:
        return self._mean([self.cell(window, label) for label in self.labels])

    @property
    def row_means(self) -> Dict[Behavior, Optional[float]]:
        return {label: self.row_mean(label) for label in self.labels}

    @property
    def column_means(self) -> Dict[int, Optional[float]]:
        return {w: self.column_mean(w) for w in self.window_sizes}

    @property
    def grand_mean(self) -> Optional[float]:
        return self._mean([self.cell(w, label) for w in self.window_sizes for label in self.labels])

    def best_window(self, label: Behavior) -> Optional[int]:
        scored = [(self.cell(w, label), w) for w in self.window_sizes]
        present = [(auc, w) for auc, w in scored if auc is not None]
        if not present:
            return None
        best = max(auc for auc, _ in present)
        return next(w for auc, w in present if auc == best)


def derive_seed(base_seed: int, window_size: int) -> int:
    """Per-window seed that does not depend on job scheduling order."""
    return int(np.random.SeedSequence([base_seed, window_size]).generate_state(1)[0])


def window_train_config(template: TrainConfig, window_size: int) -> TrainConfig:
    return replace(template, window_size=window_size, seed=derive_seed(template.seed, window_size))


@dataclass
class _CellJob:
    window_size: int
    train_frames: Sequence[FrameSeries]
    eval_frames: Sequence[FrameSeries]
    template: TrainConfig
    scaler: ScalerParams
    strict: bool
    carve_normal: bool
    labels: Sequence[Behavior]
    pooled: bool
    model: Optional[LstmModel] = None


@dataclass
class _CellOutcome:
    window_size: int
    cells: Dict[Behavior, Optional[float]]
    pooled: Optional[float]
    curves: Dict[str, RocResult]
    checkpoint_sha256: str
    trained: Optional[TrainResult]


def _run_cell(job: _CellJob) -> _CellOutcome:
    prepared = prepare_dataset(
        job.train_frames,
        job.eval_frames,
        job.window_size,
        job.template.train_fraction,
        job.strict,
        job.carve_normal,
        scaler=job.scaler,
    )
    trained: Optional[TrainResult] = None
    model = job.model
    if model is None:
        config = window_train_config(job.template, job.window_size)
        trained = train(config, prepared.train_pairs, job.scaler.provenance)
        model = trained.model

    records = score_dataset(model, prepared.normal_pairs)
    for label in job.labels:
        records.extend(score_dataset(model, prepared.aggressive_pairs.get(label, [])))

    cells: Dict[Behavior, Optional[float]] = {}
    curves: Dict[str, RocResult] = {}
    for label in job.labels:
        try:
            result = roc_auc(records, label)
        except ValidationError as exc:
            logger.warning("window=%d label=%s absent: %s", job.window_size, label.value, exc)
            cells[label] = None
            continue
        cells[label] = result.auc
        curves[label.value] = result
        logger.info("window=%d label=%s auc=%.4f", job.window_size, label.value, result.auc)

    pooled: Optional[float] = None
    if job.pooled:
        try:
            pooled_result = pooled_roc_auc(records)
            pooled = pooled_result.auc
            curves[POOLED_LABEL] = pooled_result
        except ValidationError as exc:
            logger.warning("window=%d pooled AUC absent: %s", job.window_size, exc)

    return _CellOutcome(
        window_size=job.window_size,
        cells=cells,
        pooled=pooled,
        curves=curves,
        checkpoint_sha256=hashlib.sha256(checkpoint_bytes(model)).hexdigest(),
        trained=trained,
    )


def run_grid(
    train_frames: Sequence[FrameSeries],
    eval_frames: Sequence[FrameSeries],
    window_sizes: Sequence[int],
    template: TrainConfig,
    *,
    labels: Sequence[Behavior] = TABLE_LABELS,
    strict: bool = False,
    carve_normal: bool = False,
    scaler: Optional[ScalerParams] = None,
    models: Optional[Mapping[int, LstmModel]] = None,
    workers: int = 1,
    pooled: bool = True,
) -> GridResult:
    """One model per window size (trained unless supplied in ``models``), every label scored."""
    check_training_sessions(train_frames, carve_normal)
    scaler = scaler or fit_training_scaler(train_frames, template.train_fraction)
    models = models or {}
    jobs = [
        _CellJob(
            window_size=w,
            train_frames=train_frames,
            eval_frames=eval_frames,
            template=template,
            scaler=scaler,
            strict=strict,
            carve_normal=carve_normal,
            labels=list(labels),
            pooled=pooled,
            model=models.get(w),
        )
        for w in window_sizes
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, jobs))
    else:
        outcomes = [_run_cell(job) for job in jobs]

    grid = GridResult(window_sizes=list(window_sizes), labels=list(labels), cells={})
    for outcome in outcomes:
        w = outcome.window_size
        for label, auc in outcome.cells.items():
            grid.cells[(w, label)] = auc
        if pooled:
            grid.pooled[w] = outcome.pooled
        grid.provenance[w] = outcome.checkpoint_sha256
        for name, curve in outcome.curves.items():
            grid.curves[(w, name)] = curve
        if outcome.trained is not None:
            grid.trained[w] = outcome.trained
    return grid


__all__ = [
    "GridResult",
    "RocResult",
    "derive_seed",
    "evaluate_label",
    "mann_whitney_auc",
    "pooled_roc_auc",
    "roc_auc",
    "roc_curve",
    "roc_from_errors",
    "run_grid",
    "window_train_config",
]
