from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import ValidationError


class SensorKind(str, Enum):
    ACCELERATION = "Acceleration"
    LINEAR_ACCELERATION = "LinearAcceleration"
    MAGNETOMETER = "Magnetometer"
    GYROSCOPE = "Gyroscope"


class Axis(str, Enum):
    X = "x"
    Y = "y"
    Z = "z"


class Behavior(str, Enum):
    NORMAL = "normal"
    AGGR_BRAKE = "aggressive_brake"
    AGGR_ACCELERATION = "aggressive_acceleration"
    AGGR_LEFT_TURN = "aggressive_left_turn"
    AGGR_RIGHT_TURN = "aggressive_right_turn"
    AGGR_LANE_CHANGE_RIGHT = "aggressive_right_lane_change"
    AGGR_LANE_CHANGE_LEFT = "aggressive_left_lane_change"

    @property
    def is_aggressive(self) -> bool:
        return self is not Behavior.NORMAL

    @property
    def code(self) -> int:
        return BEHAVIORS.index(self)

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self]

    @classmethod
    def from_code(cls, code: int) -> "Behavior":
        return BEHAVIORS[int(code)]

    @classmethod
    def parse(cls, raw: str) -> "Behavior":
        """Resolve canonical, CamelCase and public-dataset spellings."""
        key = raw.strip().lower().replace(" ", "_").replace("-", "_")
        try:
            return BEHAVIOR_ALIASES[key]
        except KeyError:
            raise ValidationError(f"unknown behavior {raw.strip()!r}") from None


BEHAVIORS: Tuple[Behavior, ...] = tuple(Behavior)
AGGRESSIVE_BEHAVIORS: Tuple[Behavior, ...] = tuple(b for b in BEHAVIORS if b.is_aggressive)

DISPLAY_NAMES: Dict[Behavior, str] = {
    Behavior.NORMAL: "Normal",
    Behavior.AGGR_BRAKE: "Aggressive Brake",
    Behavior.AGGR_ACCELERATION: "Aggressive Acceleration",
    Behavior.AGGR_LEFT_TURN: "Aggressive Left Turn",
    Behavior.AGGR_RIGHT_TURN: "Aggressive Right Turn",
    Behavior.AGGR_LANE_CHANGE_RIGHT: "Aggressive Right Lane Change",
    Behavior.AGGR_LANE_CHANGE_LEFT: "Aggressive Left Lane Change",
}

BEHAVIOR_ALIASES: Dict[str, Behavior] = {
    **{b.value: b for b in BEHAVIORS},
    **{b.display_name.lower().replace(" ", "_"): b for b in BEHAVIORS},
    "aggrbrake": Behavior.AGGR_BRAKE,
    "aggracceleration": Behavior.AGGR_ACCELERATION,
    "aggrleftturn": Behavior.AGGR_LEFT_TURN,
    "aggrrightturn": Behavior.AGGR_RIGHT_TURN,
    "aggrlanechangeright": Behavior.AGGR_LANE_CHANGE_RIGHT,
    "aggrlanechangeleft": Behavior.AGGR_LANE_CHANGE_LEFT,
    # Labels used by the public smartphone driving dataset.
    "evento_nao_agressivo": Behavior.NORMAL,
    "freada_agressiva": Behavior.AGGR_BRAKE,
    "aceleracao_agressiva": Behavior.AGGR_ACCELERATION,
    "curva_esquerda_agressiva": Behavior.AGGR_LEFT_TURN,
    "curva_direita_agressiva": Behavior.AGGR_RIGHT_TURN,
    "troca_faixa_direita_agressiva": Behavior.AGGR_LANE_CHANGE_RIGHT,
    "troca_faixa_esquerda_agressiva": Behavior.AGGR_LANE_CHANGE_LEFT,
}

Channel = Tuple[SensorKind, Axis]

# Column order of every frame matrix.
CHANNELS: Tuple[Channel, ...] = tuple(
    (kind, axis) for kind in SensorKind for axis in Axis
)
NUM_FEATURES = len(CHANNELS)


def channel_name(channel: Channel) -> str:
    kind, axis = channel
    return f"{kind.value}.{axis.value}"


def first_non_increasing(timestamps: np.ndarray) -> Optional[int]:
    """Index of the first sample whose timestamp does not exceed its predecessor."""
    if len(timestamps) < 2:
        return None
    bad = np.flatnonzero(np.diff(timestamps) <= 0)
    return int(bad[0]) + 1 if bad.size else None


@dataclass(frozen=True)
class SensorTrace:
    """Samples of one sensor axis at its native rate; timestamps in microseconds."""

    sensor_kind: SensorKind
    axis: Axis
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.timestamps) == 0:
            raise ValidationError(f"{channel_name(self.channel)}: no samples")
        if len(self.timestamps) != len(self.values):
            raise ValidationError(
                f"{channel_name(self.channel)}: {len(self.timestamps)} timestamps "
                f"for {len(self.values)} values"
            )
        index = first_non_increasing(self.timestamps)
        if index is not None:
            raise ValidationError(
                f"{channel_name(self.channel)}: non-monotonic timestamp at sample {index}",
                index=index,
            )

    @property
    def channel(self) -> Channel:
        return (self.sensor_kind, self.axis)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def median_interval_us(self) -> float:
        if len(self.timestamps) < 2:
            return float("nan")
        return float(np.median(np.diff(self.timestamps)))

    @property
    def native_rate_hz(self) -> float:
        return 1e6 / self.median_interval_us


@dataclass(frozen=True)
class EventLabel:
    behavior: Behavior
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ValidationError(
                f"{self.behavior.value}: start {self.start} is not before end {self.end}"
            )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EventLabel":
        return cls(
            behavior=Behavior.parse(str(data.get("behavior", ""))),
            start=int(data.get("start", 0)),
            end=int(data.get("end", 0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"behavior": self.behavior.value, "start": self.start, "end": self.end}


@dataclass(frozen=True)
class ChannelSummary:
    sensor_kind: SensorKind
    axis: Axis
    samples: int
    first_us: int
    last_us: int
    median_interval_us: float
    rate_hz: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "channel": channel_name((self.sensor_kind, self.axis)),
            "samples": self.samples,
            "first_us": self.first_us,
            "last_us": self.last_us,
            "median_interval_us": self.median_interval_us,
            "rate_hz": self.rate_hz,
        }


@dataclass(frozen=True)
class SessionSummary:
    channels: List[ChannelSummary]
    duration_us: int
    label_count: int
    label_counts: Dict[str, int] = field(default_factory=dict)

    @property
    def channel_count(self) -> int:
        return len(self.channels)

    def rate_of(self, kind: SensorKind, axis: Axis = Axis.X) -> float:
        for item in self.channels:
            if item.sensor_kind is kind and item.axis is axis:
                return item.rate_hz
        raise KeyError(channel_name((kind, axis)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "channel_count": self.channel_count,
            "duration_us": self.duration_us,
            "label_count": self.label_count,
            "label_counts": dict(self.label_counts),
            "channels": [item.to_dict() for item in self.channels],
        }


@dataclass(frozen=True)
class Session:
    name: str
    traces: List[SensorTrace]
    labels: List[EventLabel]
    summary: SessionSummary

    @property
    def has_events(self) -> bool:
        return any(label.behavior.is_aggressive for label in self.labels)


@dataclass(frozen=True)
class FrameSeries:
    """Uniform frame matrix; ``labels`` holds one behavior code per frame."""

    start: int
    rate: float
    frames: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        if self.frames.ndim != 2 or self.frames.shape[1] != NUM_FEATURES:
            raise ValidationError(
                f"frames must be N x {NUM_FEATURES}, got {self.frames.shape}"
            )
        if len(self.labels) != len(self.frames):
            raise ValidationError(
                f"{len(self.labels)} frame labels for {len(self.frames)} frames"
            )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def period_us(self) -> int:
        return int(round(1e6 / self.rate))

    def timestamps(self) -> np.ndarray:
        return self.start + np.arange(len(self.frames), dtype=np.int64) * self.period_us

    def label_at(self, index: int) -> Behavior:
        return Behavior.from_code(self.labels[index])

    def normal_mask(self) -> np.ndarray:
        return self.labels == Behavior.NORMAL.code

    def label_counts(self) -> Dict[Behavior, int]:
        counts = np.bincount(self.labels, minlength=len(BEHAVIORS))
        return {b: int(counts[b.code]) for b in BEHAVIORS}

    def with_frames(self, frames: np.ndarray) -> "FrameSeries":
        return FrameSeries(
            start=self.start, rate=self.rate, frames=frames, labels=self.labels, name=self.name
        )


@dataclass(frozen=True)
class ScalerParams:
    minimum: np.ndarray
    maximum: np.ndarray
    channels: Tuple[str, ...] = tuple(channel_name(c) for c in CHANNELS)
    provenance: str = ""

    def __post_init__(self) -> None:
        if np.any(self.minimum > self.maximum):
            raise ValidationError("scaler minimum exceeds maximum")

    @property
    def degenerate(self) -> np.ndarray:
        return self.minimum == self.maximum


@dataclass(frozen=True)
class WindowPair:
    input: np.ndarray
    target: np.ndarray
    label: Behavior
    origin: int
    session: str = ""

    @property
    def window_size(self) -> int:
        return int(self.input.shape[0])


@dataclass(frozen=True)
class ScoreRecord:
    origin: int
    error: float
    label: Behavior
    session: str = ""

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScoreRecord":
        return cls(
            origin=int(data.get("origin", 0)),
            error=float(data.get("error", 0.0)),
            label=Behavior.parse(str(data.get("label", "normal"))),
            session=str(data.get("session", "")),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "session": self.session,
            "origin": self.origin,
            "error": self.error,
            "label": self.label.value,
        }
