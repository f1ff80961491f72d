"""Deterministic synthetic drives: sum-of-sinusoid baselines, Gaussian noise, injected events.

Every sensor kind is sampled at its own native rate so that resampling exercises
both downsampling (100 Hz) and zero-order-hold upsampling (25 Hz, 10 Hz).
"""

from __future__ import annotations

import hashlib
import logging
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ValidationError
from .ingest import EVENT_FILES, SENSOR_FILES, format_event_file, format_sensor_file
from .models import (
    AGGRESSIVE_BEHAVIORS,
    CHANNELS,
    Axis,
    Behavior,
    Channel,
    EventLabel,
    SensorKind,
    SensorTrace,
)
from .preprocess import period_us

logger = logging.getLogger(__name__)

NATIVE_RATES: Dict[SensorKind, float] = {
    SensorKind.ACCELERATION: 100.0,
    SensorKind.LINEAR_ACCELERATION: 25.0,
    SensorKind.MAGNETOMETER: 10.0,
    SensorKind.GYROSCOPE: 50.0,
}

# Typical magnitude of each sensor kind; baseline, noise and events are scaled by it.
KIND_SCALE: Dict[SensorKind, float] = {
    SensorKind.ACCELERATION: 1.0,
    SensorKind.LINEAR_ACCELERATION: 1.0,
    SensorKind.MAGNETOMETER: 5.0,
    SensorKind.GYROSCOPE: 0.2,
}

_OFFSETS: Dict[Channel, float] = {
    (SensorKind.ACCELERATION, Axis.Z): 9.81,
    (SensorKind.MAGNETOMETER, Axis.X): 20.0,
    (SensorKind.MAGNETOMETER, Axis.Y): -5.0,
    (SensorKind.MAGNETOMETER, Axis.Z): -40.0,
}

Shape = Callable[[np.ndarray], np.ndarray]


def pulse(u: np.ndarray) -> np.ndarray:
    """Trapezoid over [0, 1) with 10% ramps."""
    return np.clip(np.minimum(u, 1.0 - u) / 0.1, 0.0, 1.0)


def swerve(u: np.ndarray) -> np.ndarray:
    """One full sine period: out to one side, then back."""
    return np.sin(2.0 * np.pi * u)


@dataclass(frozen=True)
class Perturbation:
    channel: Channel
    gain: float
    shape: Shape


def _both_accels(axis: Axis, gain: float, shape: Shape = pulse) -> Tuple[Perturbation, ...]:
    return (
        Perturbation((SensorKind.ACCELERATION, axis), gain, shape),
        Perturbation((SensorKind.LINEAR_ACCELERATION, axis), gain, shape),
    )


_GYRO_Z = (SensorKind.GYROSCOPE, Axis.Z)

# Signature of each aggressive class, in units of the channel's KIND_SCALE.
EVENT_SIGNATURES: Dict[Behavior, Tuple[Perturbation, ...]] = {
    Behavior.AGGR_BRAKE: _both_accels(Axis.Y, -3.0),
    Behavior.AGGR_ACCELERATION: _both_accels(Axis.Y, 1.0),
    Behavior.AGGR_LEFT_TURN: (Perturbation(_GYRO_Z, 4.0, pulse),) + _both_accels(Axis.X, -2.5),
    Behavior.AGGR_RIGHT_TURN: (Perturbation(_GYRO_Z, -4.0, pulse),) + _both_accels(Axis.X, 2.5),
    Behavior.AGGR_LANE_CHANGE_LEFT: (Perturbation(_GYRO_Z, 2.5, swerve),)
    + _both_accels(Axis.X, -1.5, swerve),
    Behavior.AGGR_LANE_CHANGE_RIGHT: (Perturbation(_GYRO_Z, -2.5, swerve),)
    + _both_accels(Axis.X, 1.5, swerve),
}


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    frequency_hz: float
    phase: float = 0.0


@dataclass(frozen=True)
class ChannelBaseline:
    offset: float = 0.0
    components: Tuple[Sinusoid, ...] = ()

    def __call__(self, seconds: np.ndarray) -> np.ndarray:
        signal = np.full(seconds.shape, self.offset, dtype=np.float64)
        for wave in self.components:
            angle = 2.0 * np.pi * wave.frequency_hz * seconds + wave.phase
            signal += wave.amplitude * np.sin(angle)
        return signal


def default_baseline() -> Dict[Channel, ChannelBaseline]:
    """Two slow sinusoids per channel; the same for every session."""
    baseline = {}
    for index, channel in enumerate(CHANNELS):
        scale = KIND_SCALE[channel[0]]
        baseline[channel] = ChannelBaseline(
            offset=_OFFSETS.get(channel, 0.0),
            components=(
                Sinusoid(0.30 * scale, 0.11 + 0.037 * index, 0.5 * index),
                Sinusoid(0.15 * scale, 0.53 + 0.041 * index, 1.3 * index),
            ),
        )
    return baseline


@dataclass(frozen=True)
class EventSpec:
    behavior: Behavior
    start_s: float
    duration_s: float
    amplitude: float = 1.0

    @property
    def start_us(self) -> int:
        return int(round(self.start_s * 1e6))

    @property
    def end_us(self) -> int:
        return int(round((self.start_s + self.duration_s) * 1e6))

    def label(self) -> EventLabel:
        return EventLabel(behavior=self.behavior, start=self.start_us, end=self.end_us)


@dataclass(frozen=True)
class SynthSpec:
    name: str
    duration_s: float
    events: Tuple[EventSpec, ...] = ()
    noise: float = 0.05
    seed: int = 0
    rates: Mapping[SensorKind, float] = field(default_factory=lambda: dict(NATIVE_RATES))
    baseline: Mapping[Channel, ChannelBaseline] = field(default_factory=default_baseline)

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("synth spec needs a name")
        if self.duration_s <= 0:
            raise ValidationError(f"{self.name}: duration must be positive")
        if self.noise < 0:
            raise ValidationError(f"{self.name}: noise must be >= 0")
        missing = [kind.value for kind in SensorKind if kind not in self.rates]
        if missing:
            raise ValidationError(f"{self.name}: no rate for {', '.join(missing)}")
        for kind in SensorKind:
            period_us(self.rates[kind])
        for event in self.events:
            if not event.behavior.is_aggressive:
                raise ValidationError(f"{self.name}: injected events must be aggressive")
            if event.duration_s <= 0 or event.amplitude < 0:
                raise ValidationError(
                    f"{self.name}: events need a positive duration and amplitude >= 0"
                )
            if event.start_s < 0 or event.start_s + event.duration_s > self.duration_s:
                raise ValidationError(
                    f"{self.name}: event at {event.start_s}s lies outside [0, {self.duration_s}]"
                )

    def labels(self) -> List[EventLabel]:
        return sorted((event.label() for event in self.events), key=lambda label: label.start)


def _perturbation(spec: SynthSpec, channel: Channel, timestamps: np.ndarray) -> np.ndarray:
    offset = np.zeros(len(timestamps), dtype=np.float64)
    scale = KIND_SCALE[channel[0]]
    for event in spec.events:
        inside = (timestamps >= event.start_us) & (timestamps < event.end_us)
        if not inside.any():
            continue
        u = (timestamps[inside] - event.start_us) / (event.end_us - event.start_us)
        for item in EVENT_SIGNATURES[event.behavior]:
            if item.channel == channel:
                offset[inside] += event.amplitude * scale * item.gain * item.shape(u)
    return offset


def generate(spec: SynthSpec) -> Tuple[List[SensorTrace], List[EventLabel]]:
    """Twelve traces in canonical channel order plus the injected labels.

    Noise draws do not depend on the events, so the same seed with and without
    events differs exactly by the perturbation.
    """
    rng = np.random.default_rng(spec.seed)
    traces: List[SensorTrace] = []
    for kind in SensorKind:
        rate = spec.rates[kind]
        count = int(np.floor(spec.duration_s * rate + 1e-9))
        timestamps = np.arange(count, dtype=np.int64) * period_us(rate)
        seconds = timestamps / 1e6
        for axis in Axis:
            channel = (kind, axis)
            values = spec.baseline[channel](seconds)
            values += rng.normal(0.0, spec.noise * KIND_SCALE[kind], count)
            values += _perturbation(spec, channel, timestamps)
            traces.append(
                SensorTrace(sensor_kind=kind, axis=axis, timestamps=timestamps, values=values)
            )
    return traces, spec.labels()


def _event_train(
    behavior: Behavior, duration_s: float, amplitude: float, spacing_s: float
) -> Tuple[EventSpec, ...]:
    lengths = (2.0, 2.5, 3.0)
    events = []
    start = spacing_s / 2
    index = 0
    while start + lengths[index % 3] <= duration_s - 2.0:
        events.append(EventSpec(behavior, round(start, 2), lengths[index % 3], amplitude))
        start += spacing_s
        index += 1
    return tuple(events)


def standard_suite(
    seed: int = 0, normal_duration_s: float = 300.0, event_duration_s: float = 60.0
) -> List[SynthSpec]:
    """One event-free session, then one session per aggressive class."""
    suite = [SynthSpec(name="normal", duration_s=normal_duration_s, seed=seed)]
    for index, behavior in enumerate(AGGRESSIVE_BEHAVIORS, start=1):
        suite.append(
            SynthSpec(
                name=behavior.value,
                duration_s=event_duration_s,
                events=_event_train(behavior, event_duration_s, 1.0, spacing_s=10.0),
                seed=seed + index,
            )
        )
    return suite


def null_spec(seed: int = 0, duration_s: float = 120.0) -> SynthSpec:
    """About 20 labelled brake events with zero amplitude: indistinguishable from baseline."""
    return SynthSpec(
        name="null_aggressive_brake",
        duration_s=duration_s,
        events=_event_train(Behavior.AGGR_BRAKE, duration_s, 0.0, spacing_s=6.0),
        seed=seed + 100,
    )


_SPEC_KEYS = {"name", "duration_s", "noise", "seed", "event"}
_EVENT_KEYS = {"behavior", "start_s", "duration_s", "amplitude"}


def _event_from_table(table: Mapping[str, Any], where: str) -> EventSpec:
    unknown = set(table) - _EVENT_KEYS
    if unknown:
        raise ConfigError(f"{where}: unknown keys {', '.join(sorted(unknown))}")
    try:
        return EventSpec(
            behavior=Behavior.parse(str(table["behavior"])),
            start_s=float(table["start_s"]),
            duration_s=float(table["duration_s"]),
            amplitude=float(table.get("amplitude", 1.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"{where}: missing key {exc.args[0]}") from None


def specs_from_toml(text: str) -> List[SynthSpec]:
    """Parse ``[[session]]`` tables, each with optional ``[[session.event]]`` entries."""
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"synth spec: {exc}") from exc
    sessions = document.get("session")
    if not isinstance(sessions, list) or not sessions:
        raise ConfigError("synth spec needs at least one [[session]] table")
    specs = []
    for index, table in enumerate(sessions):
        where = f"session {index}"
        unknown = set(table) - _SPEC_KEYS
        if unknown:
            raise ConfigError(f"{where}: unknown keys {', '.join(sorted(unknown))}")
        if "name" not in table or "duration_s" not in table:
            raise ConfigError(f"{where}: name and duration_s are required")
        events = tuple(
            _event_from_table(event, f"{where} event {k}")
            for k, event in enumerate(table.get("event", []))
        )
        specs.append(
            SynthSpec(
                name=str(table["name"]),
                duration_s=float(table["duration_s"]),
                events=events,
                noise=float(table.get("noise", 0.05)),
                seed=int(table.get("seed", index)),
            )
        )
    return specs


def write_session(spec: SynthSpec, directory: Path) -> List[Path]:
    traces, labels = generate(spec)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in SensorKind:
        path = directory / SENSOR_FILES[kind][0]
        text = format_sensor_file([t for t in traces if t.sensor_kind is kind])
        path.write_text(text, encoding="utf-8")
        written.append(path)
    path = directory / EVENT_FILES[0]
    path.write_text(format_event_file(labels), encoding="utf-8")
    written.append(path)
    logger.info("synth=%s duration_s=%g events=%d", spec.name, spec.duration_s, len(labels))
    return written


def write_dataset(specs: Sequence[SynthSpec], out_dir: Path) -> Dict[str, str]:
    """Write each spec as ``out_dir/<name>/``; returns sha256 per relative file path."""
    names = [spec.name for spec in specs]
    if len(set(names)) != len(names):
        raise ValidationError("synth spec names must be unique")
    hashes: Dict[str, str] = {}
    for spec in specs:
        for path in write_session(spec, out_dir / spec.name):
            relative = path.relative_to(out_dir).as_posix()
            hashes[relative] = hashlib.sha256(path.read_bytes()).hexdigest()
    return hashes
