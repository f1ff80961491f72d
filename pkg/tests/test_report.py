import json
from pathlib import Path

import pandas as pd
import pytest

from driveprofile.errors import ParseError
from driveprofile.evaluation import GridResult, roc_from_errors
from driveprofile.models import Behavior
from driveprofile.report import (
    emit_report,
    grid_from_csv,
    grid_to_csv,
    render_table,
    write_report,
)

RIGHT = Behavior.AGGR_RIGHT_TURN
LEFT = Behavior.AGGR_LEFT_TURN


def _grid() -> GridResult:
    return GridResult(
        window_sizes=[50, 25],
        labels=[RIGHT, LEFT],
        cells={(50, RIGHT): 0.9, (50, LEFT): 0.7, (25, RIGHT): 0.8125, (25, LEFT): None},
        pooled={50: 0.81, 25: None},
        provenance={50: "a" * 64, 25: "b" * 64},
        curves={(50, RIGHT.value): roc_from_errors([0.8, 0.4], [0.5, 0.1])},
    )


def test_csv_round_trip_preserves_grid() -> None:
    grid = _grid()
    text = grid_to_csv(grid)
    assert text.startswith("# provenance window=50 checkpoint_sha256=" + "a" * 64)
    assert "25,aggressive_left_turn,n/a" in text
    assert "50,all_aggressive,0.81" in text
    assert grid_from_csv(text) == grid


def test_csv_without_provenance_or_pooled() -> None:
    grid = GridResult(window_sizes=[10], labels=[LEFT], cells={(10, LEFT): 0.5})
    text = grid_to_csv(grid)
    assert text.splitlines() == ["window,label,auc", "10,aggressive_left_turn,0.5"]
    assert grid_from_csv(text) == grid


def test_bad_grid_files_raise_parse_errors() -> None:
    with pytest.raises(ParseError, match="window,label,auc"):
        grid_from_csv("a,b,c\n1,2,3\n")
    with pytest.raises(ParseError) as excinfo:
        grid_from_csv("window,label,auc\n50,aggressive_brake,0.5\n50,aggressive_brake,abc\n")
    assert excinfo.value.line == 3
    with pytest.raises(ParseError):
        grid_from_csv("window,label,auc\nfifty,aggressive_brake,0.5\n")


def test_table_shows_cells_marginals_and_best_window() -> None:
    text = render_table(_grid())
    assert "AUC by window size and behavior" in text
    assert "Aggressive Right Turn" in text
    assert "0.9000*" in text
    assert "0.8125*" not in text
    assert "n/a" in text
    assert "Avg of AUC by window" in text
    assert "Average of AUC" in text
    assert "All aggressive (pooled, extra)" in text
    assert f"checkpoint W=25 sha256={'b' * 64}" in text
    # Mean of 0.9, 0.7 and 0.8125.
    assert "0.8042" in text


def test_json_report_carries_marginals() -> None:
    payload = json.loads(emit_report(_grid(), "json"))
    assert payload["window_sizes"] == [50, 25]
    assert payload["best_window"] == {"aggressive_right_turn": 50, "aggressive_left_turn": 50}
    assert payload["row_means"]["aggressive_left_turn"] == pytest.approx(0.7)
    assert payload["column_means"]["25"] == pytest.approx(0.8125)
    assert payload["pooled"] == {"50": 0.81, "25": None}
    assert {"window": 25, "label": "aggressive_left_turn", "auc": None} in payload["cells"]


def test_unknown_format_is_rejected() -> None:
    with pytest.raises(ValueError, match="unknown report format"):
        emit_report(_grid(), "xml")


def test_write_report_writes_every_rendering(tmp_path: Path) -> None:
    paths = write_report(_grid(), tmp_path / "report")
    assert set(paths) == {"csv", "table", "json"}
    assert all(path.exists() for path in paths.values())
    assert grid_from_csv(paths["csv"].read_text()) == _grid()

    curve = pd.read_csv(tmp_path / "report" / "roc" / "w50_aggressive_right_turn.csv")
    assert list(curve.columns) == ["fpr", "tpr", "threshold"]
    assert curve["fpr"].iloc[0] == 0.0 and curve["tpr"].iloc[-1] == 1.0
    assert curve["threshold"].iloc[0] == float("inf")
