"""Command-line entry point: ingest, synth, train, score, eval and report."""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import __version__
from .config import DEFAULT_CONFIG_PATH, RunConfig, load_config, write_starter_config
from .errors import ConfigError, DriveProfileError, ModelError
from .evaluation import run_grid, window_train_config
from .ingest import load_session
from .lstm import LstmModel
from .models import FrameSeries, Session
from .pipeline import (
    TrainResult,
    check_training_sessions,
    classify,
    fit_training_scaler,
    load_frames,
    prepare_dataset,
    score_dataset,
    train,
)
from .preprocess import apply_scaler, slide_windows
from .report import REPORT_FORMATS, emit_report, grid_from_csv, write_report
from .storage import (
    file_sha256,
    load_checkpoint,
    load_scaler,
    save_checkpoint,
    save_manifest,
    save_scaler,
    save_scores,
)
from .synth import null_spec, specs_from_toml, standard_suite, write_dataset

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace], None]


def _configure_logging(verbose: int, quiet: bool) -> None:
    level = logging.WARNING if quiet else (logging.DEBUG if verbose else logging.INFO)
    root = logging.getLogger("driveprofile")
    root.handlers.clear()
    root.addHandler(
        RichHandler(console=Console(stderr=True), show_time=False, show_path=False)
    )
    root.setLevel(level)
    root.propagate = False


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run config TOML (default: ~/.driveprofile)")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config key; repeatable, wins over the file",
    )
    common.add_argument("--seed", type=int, help="shorthand for --set train.seed=N")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driveprofile",
        description="Aggressive-driving detection from next-frame LSTM residuals",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    common = _common_options()

    ingest = subparsers.add_parser(
        "ingest", parents=[common], help="validate session folders and print a summary"
    )
    ingest.add_argument("sessions", nargs="+", type=Path)
    ingest.add_argument("--json", action="store_true", help="print the summary as JSON")
    ingest.set_defaults(handler=cmd_ingest)

    synth = subparsers.add_parser(
        "synth", parents=[common], help="write the synthetic standard suite"
    )
    synth.add_argument("out_dir", type=Path)
    synth.add_argument(
        "--spec", type=Path, help="TOML with [[session]] tables instead of the standard suite"
    )
    synth.add_argument("--null", action="store_true", help="also write the zero-amplitude suite")
    synth.add_argument("--normal-duration", type=float, default=300.0, metavar="SECONDS")
    synth.add_argument("--event-duration", type=float, default=60.0, metavar="SECONDS")
    synth.set_defaults(handler=cmd_synth)

    train_cmd = subparsers.add_parser(
        "train", parents=[common], help="train one model on normal windows"
    )
    train_cmd.set_defaults(handler=cmd_train)

    score = subparsers.add_parser(
        "score", parents=[common], help="score the eval sessions with a checkpoint"
    )
    score.add_argument("--checkpoint", type=Path, help="default: <run_dir>/w<W>/checkpoint.bin")
    score.add_argument("--scaler", type=Path, help="default: <run_dir>/scaler.toml")
    score.add_argument("--threshold", type=float, help="add an aggressive/normal decision column")
    score.add_argument("--out", type=Path, help="default: <run_dir>/w<W>/scores.csv")
    score.set_defaults(handler=cmd_score)

    eval_cmd = subparsers.add_parser(
        "eval", parents=[common], help="AUC grid over window sizes and behaviors"
    )
    eval_cmd.add_argument(
        "--train", action="store_true", help="train every window size instead of loading"
    )
    eval_cmd.set_defaults(handler=cmd_eval)

    report = subparsers.add_parser(
        "report", parents=[common], help="re-render a saved grid.csv"
    )
    report.add_argument("grid", type=Path)
    report.add_argument("--format", choices=REPORT_FORMATS, default="table")
    report.add_argument("--out", type=Path)
    report.set_defaults(handler=cmd_report)
    return parser


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    path: Optional[Path] = args.config
    if path is None and DEFAULT_CONFIG_PATH.exists():
        path = DEFAULT_CONFIG_PATH
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    config = load_config(path, overrides)
    logger.debug("config=%s run_dir=%s", path or "defaults", config.run_dir)
    return config


def _frames(paths: Sequence[Path], config: RunConfig, what: str) -> List[FrameSeries]:
    if not paths:
        raise ConfigError(f"data.{what} is empty")
    return load_frames(paths, config.data, config.preprocess.target_rate_hz)


def _input_hashes(paths: Sequence[Path]) -> Dict[str, Dict[str, str]]:
    return {
        Path(path).name: {f.name: file_sha256(f) for f in sorted(Path(path).glob("*.csv"))}
        for path in paths
    }


def _window_dir(config: RunConfig, window: int) -> Path:
    return config.run_dir / f"w{window}"


def _save_training(
    config: RunConfig, result: TrainResult, scaler_path: Path
) -> Dict[str, Any]:
    window = result.model.window_size
    directory = _window_dir(config, window)
    checkpoint = directory / "checkpoint.bin"
    manifest = {
        "command": "train",
        "config": config.to_dict(),
        "base_seed": config.seed,
        "inputs": _input_hashes(config.data.train_sessions),
        "scaler_path": scaler_path.as_posix(),
        "scaler_file_sha256": file_sha256(scaler_path),
        "checkpoint_path": checkpoint.as_posix(),
        "checkpoint_sha256": save_checkpoint(result.model, checkpoint),
        **result.manifest,
    }
    save_manifest(manifest, directory / "manifest.json")
    logger.info("window=%d checkpoint=%s", window, checkpoint)
    return manifest


def _summary_table(session: Session) -> Table:
    table = Table(title=f"{session.name}", show_edge=False)
    for column in ("channel", "samples", "rate_hz", "first_us", "last_us"):
        table.add_column(column, justify="left" if column == "channel" else "right")
    for item in session.summary.channels:
        table.add_row(
            f"{item.sensor_kind.value}.{item.axis.value}",
            str(item.samples),
            f"{item.rate_hz:.2f}",
            str(item.first_us),
            str(item.last_us),
        )
    return table


def cmd_ingest(args: argparse.Namespace) -> None:
    config = _load_run_config(args)
    data = config.data
    sessions = [
        load_session(path, data.timestamp_unit, data.label_unit, data.labels_relative)
        for path in args.sessions
    ]
    if args.json:
        payload = {session.name: session.summary.to_dict() for session in sessions}
        print(json.dumps(payload, indent=2, sort_keys=True))
        return
    console = Console(width=120, highlight=False)
    for session in sessions:
        console.print(_summary_table(session))
        counts = session.summary.label_counts
        events = ", ".join(f"{name}={count}" for name, count in counts.items()) or "none"
        console.print(
            f"duration_s={session.summary.duration_us / 1e6:.1f} events: {events}", markup=False
        )


def cmd_synth(args: argparse.Namespace) -> None:
    seed = 0 if args.seed is None else args.seed
    if args.spec is not None:
        if not args.spec.exists():
            raise ConfigError(f"synth spec not found: {args.spec}")
        specs = specs_from_toml(args.spec.read_text(encoding="utf-8"))
    else:
        specs = standard_suite(seed, args.normal_duration, args.event_duration)
    extra = [null_spec(seed)] if args.null else []
    out_dir: Path = args.out_dir
    hashes = write_dataset(specs + extra, out_dir)

    normal = [spec.name for spec in specs if not spec.events]
    events = [spec.name for spec in specs if spec.events]
    write_starter_config(out_dir / "run.toml", normal, events, "runs/default")
    if extra:
        write_starter_config(
            out_dir / "run_null.toml", normal, [s.name for s in extra], "runs/null"
        )
    save_manifest(
        {
            "command": "synth",
            "seed": seed,
            "spec": None if args.spec is None else args.spec.as_posix(),
            "spec_sha256": None if args.spec is None else file_sha256(args.spec),
            "normal_duration": args.normal_duration,
            "event_duration": args.event_duration,
            "null": args.null,
            "sessions": [spec.name for spec in specs + extra],
            "files": hashes,
        },
        out_dir / "suite.json",
    )
    logger.info("synth sessions=%d files=%d out=%s", len(specs + extra), len(hashes), out_dir)


def cmd_train(args: argparse.Namespace) -> None:
    config = _load_run_config(args)
    train_frames = _frames(config.data.train_sessions, config, "train_sessions")
    check_training_sessions(train_frames, config.data.carve_normal)
    scaler = fit_training_scaler(train_frames, config.train.train_fraction)
    scaler_path = config.run_dir / "scaler.toml"
    save_scaler(scaler, scaler_path)

    window = config.train.window_size
    prepared = prepare_dataset(
        train_frames,
        [],
        window,
        config.train.train_fraction,
        config.preprocess.strict_windows,
        config.data.carve_normal,
        scaler=scaler,
    )
    train_config = window_train_config(config.train, window)
    result = train(train_config, prepared.train_pairs, scaler.provenance)
    _save_training(config, result, scaler_path)


def _resolve_checkpoint(args: argparse.Namespace, config: RunConfig) -> Path:
    if args.checkpoint is not None:
        return args.checkpoint
    return _window_dir(config, config.train.window_size) / "checkpoint.bin"


def cmd_score(args: argparse.Namespace) -> None:
    config = _load_run_config(args)
    checkpoint = _resolve_checkpoint(args, config)
    scaler_path = args.scaler or config.run_dir / "scaler.toml"
    model = load_checkpoint(checkpoint)
    scaler = load_scaler(scaler_path)
    window = model.window_size or config.train.window_size

    records = []
    for series in _frames(config.data.eval_sessions, config, "eval_sessions"):
        scaled = apply_scaler(series, scaler)
        pairs = slide_windows(scaled, window, config.preprocess.strict_windows)
        records.extend(score_dataset(model, pairs))
    decisions = None
    if args.threshold is not None:
        decisions = [classify(record, args.threshold).value for record in records]

    out = args.out or _window_dir(config, window) / "scores.csv"
    save_scores(records, out, decisions)
    save_manifest(
        {
            "command": "score",
            "config": config.to_dict(),
            "inputs": _input_hashes(config.data.eval_sessions),
            "checkpoint_path": checkpoint.as_posix(),
            "checkpoint_sha256": file_sha256(checkpoint),
            "scaler_file_sha256": file_sha256(scaler_path),
            "threshold": args.threshold,
            "scores_sha256": file_sha256(out),
        },
        out.with_name(f"{out.stem}.manifest.json"),
    )
    logger.info("scored windows=%d out=%s", len(records), out)


def _load_models(config: RunConfig) -> Dict[int, LstmModel]:
    models = {}
    for window in config.eval.window_sizes:
        path = _window_dir(config, window) / "checkpoint.bin"
        if not path.exists():
            raise ModelError(
                f"no checkpoint for window {window} at {path} (train it or use --train)"
            )
        models[window] = load_checkpoint(path)
    return models


def cmd_eval(args: argparse.Namespace) -> None:
    config = _load_run_config(args)
    train_frames = _frames(config.data.train_sessions, config, "train_sessions")
    eval_frames = _frames(config.data.eval_sessions, config, "eval_sessions")
    scaler_path = config.run_dir / "scaler.toml"

    if args.train:
        check_training_sessions(train_frames, config.data.carve_normal)
        scaler = fit_training_scaler(train_frames, config.train.train_fraction)
        save_scaler(scaler, scaler_path)
        models: Dict[int, LstmModel] = {}
    else:
        if not scaler_path.exists():
            raise ModelError(f"no scaler at {scaler_path} (train first or use --train)")
        scaler = load_scaler(scaler_path)
        models = _load_models(config)

    grid = run_grid(
        train_frames,
        eval_frames,
        config.eval.window_sizes,
        config.train,
        strict=config.preprocess.strict_windows,
        carve_normal=config.data.carve_normal,
        scaler=scaler,
        models=models,
        workers=config.eval.workers,
        pooled=config.eval.pooled,
    )
    for result in grid.trained.values():
        _save_training(config, result, scaler_path)

    report_dir = config.run_dir / "report"
    paths = write_report(grid, report_dir)
    absent = [f"w{w}:{label.value}" for (w, label), auc in grid.cells.items() if auc is None]
    save_manifest(
        {
            "command": "eval",
            "config": config.to_dict(),
            "inputs": _input_hashes(config.data.train_sessions + config.data.eval_sessions),
            "scaler_file_sha256": file_sha256(scaler_path),
            "checkpoints": {str(w): sha for w, sha in grid.provenance.items()},
            "reports": {name: file_sha256(path) for name, path in paths.items()},
            "absent_cells": absent,
        },
        report_dir / "manifest.json",
    )
    print(emit_report(grid, "table"), end="")


def cmd_report(args: argparse.Namespace) -> None:
    grid = grid_from_csv(Path(args.grid).read_text(encoding="utf-8"))
    text = emit_report(grid, args.format)
    if args.out is None:
        print(text, end="")
        return
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(text, encoding="utf-8")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    handler: Optional[Handler] = getattr(args, "handler", None)
    if handler is None:
        parser.print_help()
        return 0

    _configure_logging(args.verbose, args.quiet)
    try:
        handler(args)
    except DriveProfileError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.message)
        return exc.exit_code
    except Exception:
        logger.exception("unexpected failure in %s", args.command)
        return 1
    return 0
