from __future__ import annotations

import hashlib
import json
import struct
import textwrap
import tomllib
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, ModelError
from .lstm import LstmModel, parameter_shapes
from .models import Behavior, ScalerParams, ScoreRecord

CHECKPOINT_MAGIC = b"DPLSTM\x00\x00"
CHECKPOINT_VERSION = 1
# magic, version, reserved, hidden, layers, input, dense, window
_HEADER = struct.Struct("<8sHHIIIII")


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def checkpoint_bytes(model: LstmModel) -> bytes:
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        0,
        model.hidden_size,
        model.num_layers,
        model.input_size,
        model.dense_size,
        model.window_size,
    )
    body = b"".join(
        np.ascontiguousarray(tensor, dtype="<f8").tobytes() for tensor in model.params.values()
    )
    return header + body


def save_checkpoint(model: LstmModel, path: Path) -> str:
    """Write the model; returns the sha256 of the written bytes."""
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = checkpoint_bytes(model)
    path.write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def load_checkpoint(path: Path) -> LstmModel:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise ModelError(f"{path}: unreadable checkpoint ({exc.strerror})") from exc
    if len(payload) < _HEADER.size:
        raise ModelError(f"{path}: truncated checkpoint header")
    magic, version, _, hidden, layers, input_size, dense, window = _HEADER.unpack_from(payload)
    if magic != CHECKPOINT_MAGIC:
        raise ModelError(f"{path}: not a driveprofile checkpoint")
    if version != CHECKPOINT_VERSION:
        raise ModelError(f"{path}: unsupported checkpoint version {version}")

    shapes = parameter_shapes(hidden, layers, input_size, dense)
    expected = _HEADER.size + 8 * sum(int(np.prod(shape)) for shape in shapes.values())
    if len(payload) != expected:
        raise ModelError(f"{path}: expected {expected} bytes, found {len(payload)}")
    params: Dict[str, np.ndarray] = {}
    offset = _HEADER.size
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        tensor = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        params[name] = tensor.astype(np.float64).reshape(shape)
        offset += 8 * count
    return LstmModel(
        hidden_size=hidden,
        num_layers=layers,
        params=params,
        input_size=input_size,
        dense_size=dense,
        window_size=window,
    )


def _toml_floats(values: Iterable[float]) -> str:
    return "[" + ", ".join(repr(float(v)) for v in values) + "]"


def save_scaler(params: ScalerParams, path: Path) -> None:
    """Small TOML key-value artifact; floats use repr so they load back bit-exactly."""
    path.parent.mkdir(parents=True, exist_ok=True)
    channels = ", ".join(f'"{name}"' for name in params.channels)
    degenerate = ", ".join("true" if flag else "false" for flag in params.degenerate)
    text = textwrap.dedent(
        f"""
        # MinMax scaler fitted on normal frames only
        provenance = "{params.provenance}"
        channels = [{channels}]
        min = {_toml_floats(params.minimum)}
        max = {_toml_floats(params.maximum)}
        degenerate = [{degenerate}]
        """
    ).strip()
    path.write_text(text + "\n", encoding="utf-8")


def load_scaler(path: Path) -> ScalerParams:
    try:
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        return ScalerParams(
            minimum=np.array(data["min"], dtype=np.float64),
            maximum=np.array(data["max"], dtype=np.float64),
            channels=tuple(str(name) for name in data["channels"]),
            provenance=str(data.get("provenance", "")),
        )
    except (OSError, KeyError, tomllib.TOMLDecodeError) as exc:
        raise DataError(f"{path}: unreadable scaler artifact ({exc})") from exc


def save_manifest(manifest: Dict[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(path: Path) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        # Corrupt manifest; keep a copy for inspection.
        backup = Path(path).with_suffix(".bak")
        Path(path).rename(backup)
        raise DataError(f"{path}: corrupt manifest moved to {backup.name}") from exc


def save_scores(
    records: Sequence[ScoreRecord], path: Path, decisions: Optional[Sequence[str]] = None
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {
            "session": [r.session for r in records],
            "origin": [r.origin for r in records],
            "error": [r.error for r in records],
            "label": [r.label.value for r in records],
        }
    )
    if decisions is not None:
        frame["decision"] = list(decisions)
    frame.to_csv(path, index=False, lineterminator="\n")


def load_scores(path: Path) -> List[ScoreRecord]:
    frame = pd.read_csv(
        path, float_precision="round_trip", keep_default_na=False, dtype={"session": str}
    )
    return [
        ScoreRecord(
            origin=int(row.origin),
            error=float(row.error),
            label=Behavior.parse(str(row.label)),
            session=str(row.session),
        )
        for row in frame.itertuples(index=False)
    ]
