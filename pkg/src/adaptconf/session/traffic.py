"""Mode-dependent packet sources for a simulated endpoint."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from ..controller import ControllerConfig, Mode, RateDemand, demand_for
from ..netsim import Kind, Packet

VIDEO_MODES = (Mode.NORMAL, Mode.LOW_BITRATE)


@dataclass(frozen=True)
class TrafficSettings:
    mtu: int = 1200
    audio_interval: float = 0.02
    video_fps: float = 30.0
    # delay before the first video frame when pixel video (re)starts
    ramp_up: float = 0.1


@dataclass(frozen=True)
class TrafficSource:
    kind: Kind
    target_rate: float  # kbps
    packet_size: int  # bytes, nominal
    pattern: str  # "cbr" or "frame_burst"
    fps: float = 0.0  # frame_burst only

    @property
    def period(self) -> float:
        if self.pattern == "frame_burst":
            return 1.0 / self.fps
        return self.packet_size * 8.0 / (self.target_rate * 1000.0)


class _Cadence:
    """Emission times ``anchor + n * period``; computed, never accumulated."""

    __slots__ = ("anchor", "period", "n")

    def __init__(self, anchor: float, period: float):
        self.anchor = anchor
        self.period = period
        self.n = 0

    @property
    def next_t(self) -> float:
        return self.anchor + self.n * self.period

    def retime(self, period: float) -> None:
        if period != self.period:
            self.anchor = self.next_t
            self.period = period
            self.n = 0


def _split(nbytes: int, mtu: int) -> list[int]:
    full, rest = divmod(nbytes, mtu)
    return [mtu] * full + ([rest] if rest else [])


class TrafficGenerator:
    """Stateful packet source for one endpoint.

    Audio runs continuously on a fixed cadence whatever the mode. Pixel video
    is a frame burst per frame; AI mode sends control updates at ``f_ctrl``
    per second and a reference burst every ``t_ref`` seconds starting at AI
    entry. Fractional bytes are carried between packets so long-run rates
    match their targets exactly.
    """

    def __init__(self, flow: str, settings: TrafficSettings = TrafficSettings(), start_t: float = 0.0):
        self.flow = flow
        self.settings = settings
        self.mode: Optional[Mode] = None
        self.demand = RateDemand(0.0, 0.0, 0.0, 0.0)
        self.knobs = ControllerConfig()
        self._next_id = 0
        self._next_frame = 0
        self.frame_modes: dict[int, Mode] = {}
        self._audio = _Cadence(start_t, settings.audio_interval)
        self._video: Optional[_Cadence] = None
        self._ctrl: Optional[_Cadence] = None
        self._ref: Optional[_Cadence] = None
        self._carry = {kind: 0.0 for kind in Kind}

    def configure(self, t: float, mode: Mode, demand: RateDemand, knobs: ControllerConfig) -> None:
        """Apply a mode/knob decision taken at time ``t``."""
        s = self.settings
        prev = self.mode
        if mode in VIDEO_MODES:
            fps = s.video_fps * (knobs.gamma if mode is Mode.LOW_BITRATE else 1.0)
            if self._video is None:
                anchor = t if prev is None else t + s.ramp_up
                self._video = _Cadence(anchor, 1.0 / fps)
            else:
                self._video.retime(1.0 / fps)
        else:
            self._video = None
        if mode is Mode.AI:
            ctrl_period = 1.0 / knobs.f_ctrl if knobs.f_ctrl > 0 else math.inf
            if self._ctrl is None:
                self._ctrl = _Cadence(t, ctrl_period)
                self._ref = _Cadence(t, knobs.t_ref)
            else:
                self._ctrl.retime(ctrl_period)
                self._ref.retime(knobs.t_ref)
        else:
            self._ctrl = self._ref = None
        self.mode, self.demand, self.knobs = mode, demand, knobs

    def _bytes(self, kind: Kind, rate_kbps: float, period: float) -> int:
        acc = self._carry[kind] + rate_kbps * 125.0 * period
        whole = int(acc)
        self._carry[kind] = acc - whole
        return whole

    def emit(self, t0: float, t1: float) -> list[Packet]:
        """Packets with send times in ``[t0, t1)``, in send order."""
        raw: list[tuple[float, int, Kind, int, int]] = []
        mtu = self.settings.mtu
        d = self.demand

        cad = self._audio
        while cad.next_t < t1:
            t = cad.next_t
            cad.n += 1
            if t >= t0 and d.audio > 0:
                size = self._bytes(Kind.AUDIO, d.audio, cad.period)
                if size:
                    raw.append((t, 0, Kind.AUDIO, size, -1))

        cad = self._video
        if cad is not None:
            while cad.next_t < t1:
                t = cad.next_t
                cad.n += 1
                if t < t0 or d.video <= 0:
                    continue
                parts = _split(self._bytes(Kind.VIDEO, d.video, cad.period), mtu)
                if not parts:
                    continue
                frame = self._next_frame
                self._next_frame += 1
                self.frame_modes[frame] = self.mode
                for size in parts:
                    raw.append((t, 1, Kind.VIDEO, size, frame))

        cad = self._ctrl
        if cad is not None and d.control > 0:
            while cad.next_t < t1:
                t = cad.next_t
                cad.n += 1
                if t >= t0:
                    size = self._bytes(Kind.CONTROL, d.control, cad.period)
                    if size:
                        raw.append((t, 2, Kind.CONTROL, size, -1))

        cad = self._ref
        if cad is not None and d.reference > 0:
            while cad.next_t < t1:
                t = cad.next_t
                cad.n += 1
                if t >= t0:
                    for size in _split(self._bytes(Kind.REFERENCE, d.reference, cad.period), mtu):
                        raw.append((t, 3, Kind.REFERENCE, size, -1))

        raw.sort(key=lambda r: (r[0], r[1]))
        out = []
        frame_sizes: dict[int, int] = {}
        for _, _, kind, _, frame in raw:
            if frame >= 0:
                frame_sizes[frame] = frame_sizes.get(frame, 0) + 1
        pid = self._next_id
        flow = self.flow
        for t, _, kind, size, frame in raw:
            out.append(Packet(pid, size, t, kind, flow, frame, frame_sizes.get(frame, 0)))
            pid += 1
        self._next_id = pid
        return out


def sources_for(mode: Mode, demand: RateDemand, knobs: ControllerConfig,
                settings: TrafficSettings = TrafficSettings()) -> list[TrafficSource]:
    """Describe the sources active in ``mode`` (for reporting and checks)."""
    out = []
    if demand.audio > 0:
        size = round(demand.audio * 125.0 * settings.audio_interval)
        out.append(TrafficSource(Kind.AUDIO, demand.audio, size, "cbr"))
    if mode in VIDEO_MODES and demand.video > 0:
        fps = settings.video_fps * (knobs.gamma if mode is Mode.LOW_BITRATE else 1.0)
        out.append(TrafficSource(Kind.VIDEO, demand.video, settings.mtu, "frame_burst", fps))
    if mode is Mode.AI:
        if demand.control > 0 and knobs.f_ctrl > 0:
            out.append(TrafficSource(Kind.CONTROL, demand.control,
                                     round(demand.control * 125.0 / knobs.f_ctrl), "cbr"))
        if demand.reference > 0:
            out.append(TrafficSource(Kind.REFERENCE, demand.reference,
                                     round(demand.reference * 125.0 * knobs.t_ref), "cbr"))
    return out


def generate_traffic(demand: RateDemand, mode: Mode, duration: float,
                     knobs: Optional[ControllerConfig] = None,
                     settings: TrafficSettings = TrafficSettings(),
                     flow: str = "local") -> list[Packet]:
    """All packets a fixed-mode sender emits over ``[0, duration)``."""
    knobs = knobs or ControllerConfig()
    gen = TrafficGenerator(flow, settings)
    gen.configure(0.0, mode, demand, knobs)
    return gen.emit(0.0, duration)


def fixed_mode_traffic(mode: Mode, cfg: ControllerConfig, duration: float,
                       settings: TrafficSettings = TrafficSettings()) -> list[Packet]:
    return generate_traffic(demand_for(mode, cfg), mode, duration, cfg, settings)
