import hashlib
import logging
from itertools import product

import numpy as np
import pytest
from sklearn.metrics import roc_auc_score

from driveprofile.config import TrainConfig
from driveprofile.errors import ValidationError
from driveprofile.evaluation import (
    GridResult,
    derive_seed,
    evaluate_label,
    mann_whitney_auc,
    pooled_roc_auc,
    roc_auc,
    roc_from_errors,
    run_grid,
    window_train_config,
)
from driveprofile.lstm import init_model
from driveprofile.models import NUM_FEATURES, Behavior, FrameSeries, ScoreRecord, WindowPair
from driveprofile.pipeline import prepare_dataset
from driveprofile.storage import checkpoint_bytes

RIGHT = Behavior.AGGR_RIGHT_TURN
LEFT = Behavior.AGGR_LEFT_TURN
BRAKE = Behavior.AGGR_BRAKE


def _pair_count_auc(positives, negatives) -> float:
    wins = 0.0
    for p, n in product(positives, negatives):
        wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(positives) * len(negatives))


def test_worked_example() -> None:
    result = roc_from_errors([0.8, 0.4], [0.5, 0.1])
    assert result.auc == pytest.approx(0.75)
    assert result.n_pos == 2 and result.n_neg == 2


def test_identical_errors_give_half() -> None:
    assert roc_from_errors([0.3, 0.3], [0.3]).auc == 0.5
    assert roc_from_errors([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]).auc == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(100))
def test_rank_auc_matches_pair_counting(seed: int) -> None:
    rng = np.random.default_rng(seed)
    n_pos, n_neg = rng.integers(1, 251, size=2)
    if seed % 3 == 0:
        # Few distinct values: lots of ties.
        positives = rng.integers(0, 4, n_pos).astype(float)
        negatives = rng.integers(0, 4, n_neg).astype(float)
    else:
        positives = rng.normal(0.5, 1.0, n_pos)
        negatives = rng.normal(0.0, 1.0, n_neg)
    result = roc_from_errors(positives, negatives)
    assert result.auc == pytest.approx(_pair_count_auc(positives, negatives), abs=1e-12)
    assert result.curve_area() == pytest.approx(result.auc, abs=1e-12)


def test_matches_sklearn() -> None:
    rng = np.random.default_rng(3)
    positives = rng.gamma(2.0, 1.0, 300)
    negatives = np.round(rng.gamma(1.5, 1.0, 500), 1)
    y_true = np.r_[np.ones(300), np.zeros(500)]
    expected = roc_auc_score(y_true, np.r_[positives, negatives])
    assert mann_whitney_auc(positives, negatives) == pytest.approx(expected, abs=1e-12)


def test_auc_is_invariant_under_monotone_transforms() -> None:
    rng = np.random.default_rng(8)
    positives, negatives = rng.uniform(size=25), rng.uniform(size=30)
    base = roc_from_errors(positives, negatives).auc
    assert roc_from_errors(np.exp(positives), np.exp(negatives)).auc == pytest.approx(base)
    assert roc_from_errors(3 * positives + 1, 3 * negatives + 1).auc == pytest.approx(base)
    swapped = roc_from_errors(negatives, positives).auc
    assert base + swapped == pytest.approx(1.0)


def test_curve_runs_from_origin_to_corner() -> None:
    rng = np.random.default_rng(2)
    result = roc_from_errors(rng.uniform(size=15), np.round(rng.uniform(size=20), 1))
    assert result.curve[0] == (0.0, 0.0)
    assert result.curve[-1] == (1.0, 1.0)
    assert np.all(np.diff(result.fpr) >= 0) and np.all(np.diff(result.tpr) >= 0)
    assert result.thresholds[0] == np.inf and result.thresholds[-1] == -np.inf
    # Consecutive duplicate points are removed.
    points = result.curve
    assert all(a != b for a, b in zip(points, points[1:]))


def test_degenerate_roc_is_an_error() -> None:
    with pytest.raises(ValidationError, match="degenerate ROC"):
        roc_from_errors([], [0.1, 0.2])
    with pytest.raises(ValidationError, match="degenerate ROC"):
        roc_from_errors([0.3], [])


def test_roc_auc_ignores_other_classes() -> None:
    records = [
        ScoreRecord(1, 0.9, RIGHT),
        ScoreRecord(2, 0.1, Behavior.NORMAL),
        ScoreRecord(3, 0.0, LEFT),
        ScoreRecord(4, 0.2, Behavior.NORMAL),
    ]
    assert roc_auc(records, RIGHT).auc == 1.0
    assert roc_auc(records, LEFT).auc == 0.0
    assert pooled_roc_auc(records).auc == 0.5
    with pytest.raises(ValidationError):
        roc_auc(records, Behavior.NORMAL)
    with pytest.raises(ValidationError):
        roc_auc(records, BRAKE)


def _wave(length: int, phase: float = 0.0) -> np.ndarray:
    t = np.arange(length)[:, None] / 10.0
    return np.sin(t + phase + np.arange(NUM_FEATURES)[None, :])


def _series(frames, labels=None, name: str = "s") -> FrameSeries:
    if labels is None:
        labels = np.zeros(len(frames), dtype=np.int64)
    return FrameSeries(start=0, rate=50.0, frames=frames, labels=np.asarray(labels), name=name)


def test_evaluate_label_on_copied_windows_is_half() -> None:
    model = init_model(3, 1, seed=0, window_size=4)
    pairs = prepare_dataset([_series(_wave(60))], [], 4).train_pairs
    copies = [
        WindowPair(pair.input.copy(), pair.target.copy(), BRAKE, pair.origin) for pair in pairs
    ]
    assert evaluate_label(model, pairs, copies).auc == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValidationError):
        evaluate_label(model, pairs, [])


def _grid() -> GridResult:
    return GridResult(
        window_sizes=[50, 25],
        labels=[RIGHT, LEFT],
        cells={(50, RIGHT): 0.9, (50, LEFT): 0.7, (25, RIGHT): 0.8, (25, LEFT): None},
    )


def test_grid_marginals_skip_absent_cells() -> None:
    grid = _grid()
    assert grid.row_mean(RIGHT) == pytest.approx(0.85)
    assert grid.row_mean(LEFT) == pytest.approx(0.7)
    assert grid.column_mean(50) == pytest.approx(0.8)
    assert grid.column_mean(25) == pytest.approx(0.8)
    assert grid.grand_mean == pytest.approx(0.8)
    assert grid.best_window(RIGHT) == 50
    assert grid.best_window(LEFT) == 50
    assert grid.best_window(BRAKE) is None


def test_best_window_takes_first_of_equal_cells() -> None:
    grid = GridResult(
        window_sizes=[200, 100], labels=[RIGHT], cells={(200, RIGHT): 0.9, (100, RIGHT): 0.9}
    )
    assert grid.best_window(RIGHT) == 200


def test_window_seeds_are_stable_and_distinct() -> None:
    assert derive_seed(7, 50) == derive_seed(7, 50)
    assert len({derive_seed(7, w) for w in (200, 100, 50, 25)}) == 4
    config = window_train_config(TrainConfig(seed=7), 25)
    assert config.window_size == 25
    assert config.seed == derive_seed(7, 25)


def _grid_inputs():
    train_frames = [_series(_wave(200))]
    labels = np.zeros(120, dtype=np.int64)
    labels[40:70] = BRAKE.code
    frames = _wave(120, 0.5)
    frames[40:70] += 3.0
    eval_frames = [_series(frames, labels, name="brakes")]
    template = TrainConfig(hidden_size=3, num_layers=1, epochs=2, batch_size=32, seed=1)
    return train_frames, eval_frames, template


def test_run_grid_marks_absent_classes(caplog: pytest.LogCaptureFixture) -> None:
    train_frames, eval_frames, template = _grid_inputs()
    with caplog.at_level(logging.WARNING, logger="driveprofile"):
        grid = run_grid(train_frames, eval_frames, [3, 5], template, labels=[BRAKE, LEFT])
    assert grid.cell(3, LEFT) is None and grid.cell(5, LEFT) is None
    assert grid.cell(3, BRAKE) > 0.9
    assert "label=aggressive_left_turn absent" in caplog.text
    assert set(grid.provenance) == {3, 5}
    assert set(grid.trained) == {3, 5}
    assert grid.trained[5].model.window_size == 5
    assert (3, BRAKE.value) in grid.curves and (3, "all_aggressive") in grid.curves
    assert grid.pooled[3] == pytest.approx(grid.cell(3, BRAKE))


def test_run_grid_is_deterministic_across_workers() -> None:
    train_frames, eval_frames, template = _grid_inputs()
    first = run_grid(train_frames, eval_frames, [3, 5], template, labels=[BRAKE])
    second = run_grid(train_frames, eval_frames, [3, 5], template, labels=[BRAKE])
    parallel = run_grid(train_frames, eval_frames, [3, 5], template, labels=[BRAKE], workers=2)
    assert first == second == parallel


def test_run_grid_uses_supplied_models() -> None:
    train_frames, eval_frames, template = _grid_inputs()
    model = init_model(3, 1, seed=9, window_size=4)
    grid = run_grid(
        train_frames, eval_frames, [4], template, labels=[BRAKE], models={4: model}, pooled=False
    )
    assert grid.trained == {}
    assert grid.pooled == {}
    assert grid.provenance[4] == hashlib.sha256(checkpoint_bytes(model)).hexdigest()
