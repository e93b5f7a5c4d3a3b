"""Scenario files: TOML, versioned with ``schema_version``.

Minimal example::

    schema_version = 1
    duration = 600

    [uplink]
    [[uplink.segments]]
    start = 0
    cap = 3000

Every omitted field takes its documented default; ``ScenarioConfig.as_dict``
echoes the fully-resolved configuration so reports are reproducible.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .controller import ControllerConfig
from .errors import ConfigError
from .netsim import BurstLoss, ImpairmentProfile, Segment, UniformLoss
from .session.detectors import FreezeDetectorConfig, SynthPipelineModel
from .session.traffic import TrafficSettings
from .telemetry import EstimatorConfig

SCHEMA_VERSION = 1
TOPOLOGIES = ("p2p", "sfu")


@dataclass(frozen=True)
class SessionSettings:
    # stability window a new mode's frames must survive for a switch to count as complete
    handover_window: float = 1.0
    handover_max_gap: float = 0.5
    synthetic_fps: float = 25.0
    # a synthetic frame needs fresh audio or control input within this span
    synth_starvation: float = 0.2
    audio_gap_threshold: float = 0.1
    traffic: TrafficSettings = field(default_factory=TrafficSettings)

    def __post_init__(self):
        for name in ("handover_window", "handover_max_gap", "synthetic_fps", "synth_starvation"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"session.{name}", "must be > 0")
        if self.audio_gap_threshold < 0:
            raise ConfigError("session.audio_gap_threshold", "must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float
    uplink: ImpairmentProfile
    downlink: Optional[ImpairmentProfile] = None  # None: mirror the uplink
    sfu: Optional[ImpairmentProfile] = None  # peer-side legs; None: mirror the uplink
    warm_up: float = 10.0
    topology: str = "p2p"
    seed: int = 0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    peer_controller: Optional[ControllerConfig] = None  # None: same as controller
    synth: SynthPipelineModel = field(default_factory=SynthPipelineModel)
    freeze: FreezeDetectorConfig = field(default_factory=FreezeDetectorConfig)
    session: SessionSettings = field(default_factory=SessionSettings)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.warm_up >= 0:
            raise ConfigError("warm_up", "must be >= 0")
        if not self.duration > self.warm_up:
            raise ConfigError("duration", "must be > warm_up")
        if self.topology not in TOPOLOGIES:
            raise ConfigError("topology", f"must be one of {', '.join(TOPOLOGIES)}")
        if self.estimator.delta_t != self.controller.delta_t:
            raise ConfigError("controller.delta_t", "must equal estimator.delta_t")

    @property
    def evaluation_window(self) -> float:
        return self.duration - self.warm_up

    @property
    def downlink_profile(self) -> ImpairmentProfile:
        return self.downlink or self.uplink

    @property
    def sfu_profile(self) -> ImpairmentProfile:
        return self.sfu or self.uplink

    @property
    def peer_controller_config(self) -> ControllerConfig:
        return self.peer_controller or self.controller

    def with_seed(self, seed: int) -> "ScenarioConfig":
        """Same scenario under another seed; profile seeds shift by the same offset."""
        shift = seed - self.seed

        def move(p):
            return None if p is None else replace(p, seed=p.seed + shift)

        return replace(self, seed=seed, uplink=move(self.uplink), downlink=move(self.downlink), sfu=move(self.sfu))

    def as_dict(self) -> dict:
        return _plain(self)

    def control_hash(self) -> str:
        return control_hash(self.estimator, self.controller)


def control_hash(estimator: EstimatorConfig, controller: ControllerConfig) -> str:
    """Short digest of the settings that determine the mode timeline."""
    blob = json.dumps({"estimator": _plain(estimator), "controller": _plain(controller)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        out = {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
        if isinstance(obj, UniformLoss):
            out["kind"] = "uniform"
        elif isinstance(obj, BurstLoss):
            out["kind"] = "burst"
        return out
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "value"):
        return obj.value
    return obj


def _take(table: dict, cls, prefix: str, rename: Optional[dict] = None, **extra):
    """Build dataclass ``cls`` from ``table``, rejecting unknown keys."""
    rename = rename or {}
    names = {f.name for f in fields(cls)}
    kwargs = dict(extra)
    for key, value in table.items():
        attr = rename.get(key, key)
        if attr not in names or attr in extra:
            raise ConfigError(f"{prefix}.{key}", "unknown field")
        kwargs[attr] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(prefix, str(exc)) from None


def _loss(table: dict, prefix: str):
    table = dict(table)
    kind = table.pop("kind", "uniform")
    if kind == "uniform":
        return _take(table, UniformLoss, prefix)
    if kind == "burst":
        return _take(table, BurstLoss, prefix)
    raise ConfigError(f"{prefix}.kind", "must be 'uniform' or 'burst'")


def _profile(table: dict, prefix: str, seed: int) -> ImpairmentProfile:
    table = dict(table)
    raw = table.pop("segments", None)
    if not raw:
        raise ConfigError(f"{prefix}.segments", "at least one segment required")
    segments = []
    for i, seg in enumerate(raw):
        seg = dict(seg)
        where = f"{prefix}.segments[{i}]"
        if "cap" not in seg:
            raise ConfigError(f"{where}.cap", "required")
        loss = _loss(seg.pop("loss", {}), f"{where}.loss")
        segments.append(_take(seg, Segment, where, rename={"start": "start_t"}, loss=loss))
    table.setdefault("seed", seed)
    return _take(table, ImpairmentProfile, prefix, segments=tuple(segments))


def scenario_from_dict(data: dict) -> ScenarioConfig:
    data = dict(data)
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported (expected {SCHEMA_VERSION})")
    if "duration" not in data:
        raise ConfigError("duration", "required")
    if "uplink" not in data:
        raise ConfigError("uplink", "required")
    seed = data.pop("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a non-negative integer")
    kw: dict[str, Any] = {"seed": seed}
    kw["uplink"] = _profile(data.pop("uplink"), "uplink", seed)
    for name in ("downlink", "sfu"):
        if name in data:
            kw[name] = _profile(data.pop(name), name, seed)
    est = _take(data.pop("estimator", {}), EstimatorConfig, "estimator", rename={"lambda": "lam"})
    kw["estimator"] = est
    ctrl = data.pop("controller", {})
    kw["controller"] = _take(ctrl, ControllerConfig, "controller", **({} if "delta_t" in ctrl else {"delta_t": est.delta_t}))
    if "peer_controller" in data:
        peer = data.pop("peer_controller")
        kw["peer_controller"] = _take(peer, ControllerConfig, "peer_controller",
                                      **({} if "delta_t" in peer else {"delta_t": est.delta_t}))
    kw["synth"] = _take(data.pop("synth", {}), SynthPipelineModel, "synth")
    kw["freeze"] = _take(data.pop("freeze", {}), FreezeDetectorConfig, "freeze")
    sess = dict(data.pop("session", {}))
    traffic = _take(sess.pop("traffic", {}), TrafficSettings, "session.traffic")
    kw["session"] = _take(sess, SessionSettings, "session", traffic=traffic)
    for key in ("duration", "warm_up", "topology"):
        if key in data:
            kw[key] = data.pop(key)
    if data:
        raise ConfigError(sorted(data)[0], "unknown field")
    return ScenarioConfig(**kw)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML ({exc})") from None
    return scenario_from_dict(data)


def load_control_config(path) -> tuple[EstimatorConfig, ControllerConfig]:
    """Estimator and controller settings for replay.

    Accepts a full scenario file or one holding just ``[estimator]`` and
    ``[controller]`` tables.
    """
    data = tomllib.loads(Path(path).read_text())
    est = _take(data.get("estimator", {}), EstimatorConfig, "estimator", rename={"lambda": "lam"})
    ctrl = dict(data.get("controller", {}))
    if "delta_t" not in ctrl:
        ctrl["delta_t"] = est.delta_t
    return est, _take(ctrl, ControllerConfig, "controller")
