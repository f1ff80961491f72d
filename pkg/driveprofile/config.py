from __future__ import annotations

import os
import textwrap
import tomllib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

from .errors import ConfigError

TIME_UNITS = ("s", "ms", "us", "ns")
DEFAULT_WINDOW_SIZES = [200, 100, 50, 25]


def _home_dir() -> Path:
    env_dir = os.environ.get("DRIVEPROFILE_HOME")
    if env_dir:
        return Path(env_dir).expanduser()
    return Path.home() / ".driveprofile"


HOME_DIR = _home_dir()
DEFAULT_CONFIG_PATH = HOME_DIR / "run.toml"
DEFAULT_RUNS_DIR = HOME_DIR / "runs"


@dataclass
class DataConfig:
    train_sessions: List[Path] = field(default_factory=list)
    eval_sessions: List[Path] = field(default_factory=list)
    timestamp_unit: str = "us"
    label_unit: str = "us"
    labels_relative: bool = False
    # False: a training session that contains events is refused outright.
    carve_normal: bool = False


@dataclass
class PreprocessConfig:
    target_rate_hz: float = 50.0
    strict_windows: bool = False


@dataclass
class OptimConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    l1_coeff: float = 1e-5
    l2_coeff: float = 1e-5


@dataclass
class TrainConfig:
    window_size: int = 50
    hidden_size: int = 64
    num_layers: int = 2
    dense_size: int = 0
    epochs: int = 30
    batch_size: int = 64
    seed: int = 7
    shuffle: bool = True
    train_fraction: float = 0.7
    clip_norm: float = 0.0
    retain_best: bool = False
    optimizer: OptimConfig = field(default_factory=OptimConfig)


@dataclass
class EvalConfig:
    window_sizes: List[int] = field(default_factory=lambda: list(DEFAULT_WINDOW_SIZES))
    workers: int = 1
    pooled: bool = True


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run_dir: Path = DEFAULT_RUNS_DIR / "default"
    provenance: Dict[str, str] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.train.seed

    def sections(self) -> Dict[str, Any]:
        return {
            "data": self.data,
            "preprocess": self.preprocess,
            "train": self.train,
            "optim": self.train.optimizer,
            "eval": self.eval,
        }

    def to_dict(self) -> Dict[str, Any]:
        """Resolved config echo for manifests; every value is JSON-serialisable."""
        echo: Dict[str, Any] = {}
        for section, obj in self.sections().items():
            echo[section] = {
                f.name: _plain(getattr(obj, f.name))
                for f in fields(obj)
                if not isinstance(getattr(obj, f.name), OptimConfig)
            }
        echo["output"] = {"run_dir": self.run_dir.as_posix()}
        echo["provenance"] = dict(sorted(self.provenance.items()))
        return echo


def _plain(value: Any) -> Any:
    if isinstance(value, Path):
        return value.as_posix()
    if isinstance(value, list):
        return [_plain(item) for item in value]
    return value


# Fields whose element type cannot be read off their default value.
_PATH_LISTS = {"data.train_sessions", "data.eval_sessions"}
_INT_LISTS = {"eval.window_sizes"}


def _coerce(key: str, value: Any, default: Any, base: Path) -> Any:
    def fail(expected: str) -> ConfigError:
        return ConfigError(f"{key}: expected {expected}, got {value!r}")

    if key in _PATH_LISTS:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise fail("a list of paths")
        return [_resolve(base, v) for v in value]
    if key in _INT_LISTS:
        if not isinstance(value, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise fail("a list of integers")
        return list(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise fail("true or false")
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise fail("an integer")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise fail("a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise fail("a string")
        return value
    raise fail("a supported value")


def _resolve(base: Path, raw: str) -> Path:
    path = Path(raw).expanduser()
    return path if path.is_absolute() else (base / path)


def _apply(
    config: RunConfig, table: Mapping[str, Any], source: str, base: Path
) -> None:
    sections = config.sections()
    for section, values in table.items():
        if section == "output":
            if not isinstance(values, dict):
                raise ConfigError("[output] must be a table")
            for key, value in values.items():
                if key != "run_dir":
                    raise ConfigError(f"unknown key output.{key}")
                if not isinstance(value, str):
                    raise ConfigError(f"output.run_dir: expected a path, got {value!r}")
                config.run_dir = _resolve(base, value)
                config.provenance["output.run_dir"] = source
            continue
        if section not in sections:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        target = sections[section]
        known = {f.name for f in fields(target)} - {"optimizer"}
        for key, value in values.items():
            dotted = f"{section}.{key}"
            if key not in known:
                raise ConfigError(f"unknown key {dotted}")
            setattr(target, key, _coerce(dotted, value, getattr(target, key), base))
            config.provenance[dotted] = source


def _parse_override(item: str) -> Dict[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    dotted, raw = (part.strip() for part in item.split("=", 1))
    section, _, key = dotted.partition(".")
    if not section or not key:
        raise ConfigError(f"override {item!r} must name section.key")
    try:
        value = tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw
    return {section: {key: value}}


def _validate(config: RunConfig) -> None:
    data, train, opt = config.data, config.train, config.train.optimizer
    checks = [
        (data.timestamp_unit in TIME_UNITS, "data.timestamp_unit must be one of s, ms, us, ns"),
        (data.label_unit in TIME_UNITS, "data.label_unit must be one of s, ms, us, ns"),
        (config.preprocess.target_rate_hz > 0, "preprocess.target_rate_hz must be > 0"),
        (train.window_size >= 1, "train.window_size must be >= 1"),
        (train.hidden_size >= 1, "train.hidden_size must be >= 1"),
        (train.num_layers >= 1, "train.num_layers must be >= 1"),
        (train.dense_size >= 0, "train.dense_size must be >= 0"),
        (train.epochs >= 1, "train.epochs must be >= 1"),
        (train.batch_size >= 1, "train.batch_size must be >= 1"),
        (0.0 < train.train_fraction <= 1.0, "train.train_fraction must be in (0, 1]"),
        (train.clip_norm >= 0.0, "train.clip_norm must be >= 0"),
        (opt.learning_rate > 0.0, "optim.learning_rate must be > 0"),
        (0.0 < opt.beta1 < 1.0, "optim.beta1 must be in (0, 1)"),
        (0.0 < opt.beta2 < 1.0, "optim.beta2 must be in (0, 1)"),
        (opt.epsilon > 0.0, "optim.epsilon must be > 0"),
        (opt.l1_coeff >= 0.0 and opt.l2_coeff >= 0.0, "optim l1/l2 coefficients must be >= 0"),
        (bool(config.eval.window_sizes), "eval.window_sizes must not be empty"),
        (all(w >= 1 for w in config.eval.window_sizes), "eval.window_sizes must be >= 1"),
        (config.eval.workers >= 1, "eval.workers must be >= 1"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def _default_provenance(config: RunConfig) -> Dict[str, str]:
    keys = {"output.run_dir": "default"}
    for section, obj in config.sections().items():
        for f in fields(obj):
            if f.name != "optimizer":
                keys[f"{section}.{f.name}"] = "default"
    return keys


def load_config(
    path: Optional[Path] = None, overrides: Sequence[str] = ()
) -> RunConfig:
    """Defaults, then the TOML file, then ``section.key=value`` overrides (flags)."""
    config = RunConfig()
    config.provenance = _default_provenance(config)
    base = Path.cwd()
    if path is not None:
        path = Path(path).expanduser()
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            table = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = path.parent
        _apply(config, table, "file", base)
    for item in overrides:
        _apply(config, _parse_override(item), "flag", Path.cwd())
    _validate(config)
    return config


def _toml_list(values: Iterable[Any]) -> str:
    return "[" + ", ".join(f'"{v}"' if isinstance(v, str) else str(v) for v in values) + "]"


def write_starter_config(
    path: Path = DEFAULT_CONFIG_PATH,
    train_sessions: Sequence[str] = (),
    eval_sessions: Sequence[str] = (),
    run_dir: Optional[str] = None,
) -> Path:
    """Write a commented run config; relative session paths resolve against its folder."""
    path.parent.mkdir(parents=True, exist_ok=True)
    run_dir = run_dir or (DEFAULT_RUNS_DIR / "default").as_posix()
    starter = textwrap.dedent(
        f"""
        # driveprofile run configuration
        [data]
        train_sessions = {_toml_list(train_sessions)}  # normal driving only
        eval_sessions = {_toml_list(eval_sessions)}  # labelled aggressive events
        timestamp_unit = "us"  # s, ms, us or ns
        label_unit = "us"
        labels_relative = false
        carve_normal = false  # true: keep only event-free windows of train sessions

        [preprocess]
        target_rate_hz = 50.0
        strict_windows = false

        [train]
        window_size = 50
        hidden_size = 64
        num_layers = 2
        dense_size = 0
        epochs = 30
        batch_size = 64
        seed = 7
        shuffle = true
        train_fraction = 0.7
        clip_norm = 0.0  # 5.0 guards against divergence
        retain_best = false

        [optim]
        learning_rate = 1e-3
        beta1 = 0.9
        beta2 = 0.999
        epsilon = 1e-8
        l1_coeff = 1e-5
        l2_coeff = 1e-5

        [eval]
        window_sizes = {_toml_list(DEFAULT_WINDOW_SIZES)}
        workers = 1
        pooled = true

        [output]
        run_dir = "{run_dir}"
        """
    ).strip()
    path.write_text(starter + "\n", encoding="utf-8")
    return path
