"""Grid report renderings: delimited text, an aligned table and per-cell ROC curves."""

from __future__ import annotations

import io
import json
import re
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from rich import box
from rich.console import Console
from rich.table import Table

from .errors import ParseError
from .evaluation import POOLED_LABEL, GridResult
from .models import Behavior

REPORT_FORMATS = ("csv", "table", "json")
MISSING = "n/a"
_PROVENANCE = re.compile(r"^#\s*provenance\s+window=(\d+)\s+checkpoint_sha256=(\S*)\s*$")


def _auc_text(value: Optional[float]) -> str:
    return MISSING if value is None else repr(float(value))


def _auc_value(text: str, line: int) -> Optional[float]:
    if text == MISSING:
        return None
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"bad auc value {text!r}", line=line) from None


def grid_to_csv(grid: GridResult) -> str:
    header = [
        f"# provenance window={w} checkpoint_sha256={grid.provenance[w]}"
        for w in grid.window_sizes
        if w in grid.provenance
    ]
    rows: List[Dict[str, Any]] = []
    for w in grid.window_sizes:
        for label in grid.labels:
            rows.append({"window": w, "label": label.value, "auc": _auc_text(grid.cell(w, label))})
        if w in grid.pooled:
            rows.append({"window": w, "label": POOLED_LABEL, "auc": _auc_text(grid.pooled[w])})
    frame = pd.DataFrame(rows, columns=["window", "label", "auc"])
    body = frame.to_csv(index=False, lineterminator="\n")
    return "\n".join(header + [body]) if header else body


def grid_from_csv(text: str) -> GridResult:
    """Inverse of :func:`grid_to_csv`."""
    provenance: Dict[int, str] = {}
    for line in text.splitlines():
        match = _PROVENANCE.match(line)
        if match:
            provenance[int(match.group(1))] = match.group(2)
    comment_lines = sum(1 for line in text.splitlines() if line.startswith("#"))
    try:
        frame = pd.read_csv(io.StringIO(text), comment="#", dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"unreadable grid file ({exc})") from exc
    if list(frame.columns) != ["window", "label", "auc"]:
        raise ParseError("grid header must be window,label,auc", line=comment_lines + 1)

    grid = GridResult(window_sizes=[], labels=[], cells={}, provenance=provenance)
    for offset, row in enumerate(frame.itertuples(index=False)):
        line = comment_lines + offset + 2
        try:
            window = int(row.window)
        except ValueError:
            raise ParseError(f"bad window {row.window!r}", line=line) from None
        if window not in grid.window_sizes:
            grid.window_sizes.append(window)
        auc = _auc_value(row.auc, line)
        if row.label == POOLED_LABEL:
            grid.pooled[window] = auc
            continue
        label = Behavior.parse(row.label)
        if label not in grid.labels:
            grid.labels.append(label)
        grid.cells[(window, label)] = auc
    return grid


def _fmt(value: Optional[float], best: bool = False) -> str:
    if value is None:
        return MISSING
    return f"{value:.4f}{'*' if best else ''}"


def render_table(grid: GridResult) -> str:
    """Plain-text table: labels by window size, marginal means, best window per row starred."""
    table = Table(title="AUC by window size and behavior", box=box.SIMPLE_HEAD)
    table.add_column("Behavior", no_wrap=True)
    for w in grid.window_sizes:
        table.add_column(f"W={w}", justify="right", no_wrap=True)
    table.add_column("Avg of AUC by label", justify="right", no_wrap=True)

    for index, label in enumerate(grid.labels):
        best = grid.best_window(label)
        table.add_row(
            label.display_name,
            *[_fmt(grid.cell(w, label), best=w == best) for w in grid.window_sizes],
            _fmt(grid.row_mean(label)),
            end_section=index == len(grid.labels) - 1,
        )
    table.add_row(
        "Avg of AUC by window",
        *[_fmt(grid.column_mean(w)) for w in grid.window_sizes],
        "",
    )
    table.add_row("Average of AUC", *["" for _ in grid.window_sizes], _fmt(grid.grand_mean))
    if grid.pooled:
        table.add_row(
            "All aggressive (pooled, extra)",
            *[_fmt(grid.pooled.get(w)) for w in grid.window_sizes],
            "",
        )

    buffer = io.StringIO()
    console = Console(file=buffer, width=132, color_system=None, highlight=False)
    console.print(table)
    for w in grid.window_sizes:
        if w in grid.provenance:
            console.print(f"checkpoint W={w} sha256={grid.provenance[w]}")
    return buffer.getvalue()


def grid_to_dict(grid: GridResult) -> Dict[str, Any]:
    return {
        "window_sizes": list(grid.window_sizes),
        "labels": [label.value for label in grid.labels],
        "cells": [
            {"window": w, "label": label.value, "auc": grid.cell(w, label)}
            for w in grid.window_sizes
            for label in grid.labels
        ],
        "row_means": {label.value: grid.row_mean(label) for label in grid.labels},
        "column_means": {str(w): grid.column_mean(w) for w in grid.window_sizes},
        "grand_mean": grid.grand_mean,
        "best_window": {label.value: grid.best_window(label) for label in grid.labels},
        "pooled": {str(w): auc for w, auc in grid.pooled.items()},
        "provenance": {str(w): sha for w, sha in grid.provenance.items()},
    }


def emit_report(grid: GridResult, format: str = "table") -> str:
    if format == "csv":
        return grid_to_csv(grid)
    if format == "table":
        return render_table(grid)
    if format == "json":
        return json.dumps(grid_to_dict(grid), indent=2, sort_keys=True) + "\n"
    raise ValueError(f"unknown report format {format!r}; choose from {', '.join(REPORT_FORMATS)}")


def write_roc_curves(grid: GridResult, directory: Path) -> List[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for (window, name), result in sorted(grid.curves.items()):
        path = directory / f"w{window}_{name}.csv"
        pd.DataFrame(
            {"fpr": result.fpr, "tpr": result.tpr, "threshold": result.thresholds}
        ).to_csv(path, index=False, lineterminator="\n")
        written.append(path)
    return written


def write_report(grid: GridResult, directory: Path) -> Dict[str, Path]:
    """grid.csv, grid.txt, grid.json and roc/ under ``directory``."""
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": directory / "grid.csv",
        "table": directory / "grid.txt",
        "json": directory / "grid.json",
    }
    for format, path in paths.items():
        path.write_text(emit_report(grid, format), encoding="utf-8")
    write_roc_curves(grid, directory / "roc")
    return paths
