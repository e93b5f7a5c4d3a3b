"""Closed-loop simulation of a two-party call.

Endpoint A is the local client under study and B its peer. Each endpoint
runs its own traffic generator, estimator and controller. Media flows A->B
and B->A either directly (p2p) or via a store-and-forward hop (sfu), and
every ``delta_t`` each endpoint samples its counters, steps its controller
and reconfigures its traffic sources. A's samples are exported as the
telemetry trace.
"""
from __future__ import annotations

import bisect
import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from ..config import ScenarioConfig
from ..controller import ControllerConfig, Mode, demand_for
from ..csvio import TelemetryCsvRow
from ..loop import ControlLoop, TimelineEntry
from ..netsim import RNG_ALGORITHM, ImpairmentProfile, Kind, Link, Outcome, Packet
from .detectors import (
    FreezeStats,
    RenderedFrame,
    SwitchEvent,
    SwitchRecord,
    SynthesisReport,
    audio_gaps,
    detect_freezes,
    freeze_gaps,
    measure_handover,
    measure_recovery,
    measure_synthesis_latency,
)
from .traffic import TrafficGenerator

logger = logging.getLogger(__name__)


class _Jitter:
    """RFC 3550 interarrival jitter estimate, in seconds."""

    __slots__ = ("value", "_arr", "_send")

    def __init__(self):
        self.value = 0.0
        self._arr = None
        self._send = 0.0

    def update(self, arrive: float, send: float) -> None:
        if self._arr is not None:
            d = abs((arrive - self._arr) - (send - self._send))
            self.value += (d - self.value) / 16.0
        self._arr, self._send = arrive, send


class _Direction:
    """Everything between one sender and the opposite receiver."""

    def __init__(self, name: str, legs: list[Link], sender: TrafficGenerator, synth_fps: float,
                 starvation: float):
        self.name = name
        self.legs = legs
        self.sender = sender
        self._hop: list = []  # (arrive at relay, id, packet)
        self._pending: list = []  # (arrive at receiver, id, packet)
        self.sent_packets = 0
        self.sent_bytes = 0
        self.lost = 0
        self.dropped = 0
        self.recv_packets = 0
        self.recv_bytes = 0
        self.audio_jitter = _Jitter()
        self.visual_jitter = _Jitter()
        self.visual_seen = False  # a video/control packet arrived this interval
        self._transit_sum = 0.0
        self._transit_n = 0
        self.transit = 0.0  # mean over the last interval that saw arrivals
        self.audio_arrivals: list[float] = []
        self._inputs: list[float] = []  # audio/control arrivals feeding synthesis
        self._parts: dict[int, int] = {}
        self._last_frame = -1
        self.frames: list[RenderedFrame] = []
        self.synth_chunks: list[float] = []  # capture times of synthesised frames
        self._synth_fps = synth_fps
        self._starvation = starvation
        self._synth_start: Optional[float] = None
        self._synth_stop = math.inf
        self._synth_j = 0

    def _offer(self, leg: int, packet: Packet, at: Optional[float]) -> None:
        ev = self.legs[leg].send(packet, at)
        if ev.outcome is Outcome.DELIVERED:
            target = self._hop if leg + 1 < len(self.legs) else self._pending
            heapq.heappush(target, (ev.arrive_t, packet.id, packet))
        elif ev.outcome is Outcome.LOST:
            self.lost += 1
        else:
            self.dropped += 1

    def send(self, packets: list[Packet]) -> None:
        for p in packets:
            self.sent_packets += 1
            self.sent_bytes += p.size
            self._offer(0, p, None)

    def advance(self, t1: float, synthesise: bool = True) -> None:
        """Relay and deliver everything that arrives by ``t1``."""
        hop = self._hop
        while hop and hop[0][0] <= t1:
            arrive, _, p = heapq.heappop(hop)
            self._offer(1, p, arrive)
        pending = self._pending
        modes = self.sender.frame_modes
        while pending and pending[0][0] <= t1:
            arrive, _, p = heapq.heappop(pending)
            self.recv_packets += 1
            self.recv_bytes += p.size
            self._transit_sum += arrive - p.send_t
            self._transit_n += 1
            kind = p.kind
            if kind is Kind.AUDIO:
                self.audio_jitter.update(arrive, p.send_t)
                self.audio_arrivals.append(arrive)
                self._inputs.append(arrive)
            elif kind is Kind.VIDEO:
                self.visual_jitter.update(arrive, p.send_t)
                self.visual_seen = True
                n = self._parts.get(p.frame, 0) + 1
                if n == p.frame_packets:
                    self._parts.pop(p.frame, None)
                    # a frame overtaken by a newer rendered frame is useless
                    if p.frame > self._last_frame:
                        self._last_frame = p.frame
                        self.frames.append(RenderedFrame(arrive, modes[p.frame]))
                else:
                    self._parts[p.frame] = n
            elif kind is Kind.CONTROL:
                self.visual_jitter.update(arrive, p.send_t)
                self.visual_seen = True
                self._inputs.append(arrive)
        if synthesise:
            self._synthesise(t1)

    def start_synthesis(self, first_frame_t: float) -> None:
        self._synth_start = first_frame_t
        self._synth_stop = math.inf
        self._synth_j = 0

    def stop_synthesis(self, t: float) -> None:
        self._synth_stop = t

    def _synthesise(self, t1: float) -> None:
        start = self._synth_start
        if start is None:
            return
        period = 1.0 / self._synth_fps
        inputs = self._inputs
        while True:
            # the first synthetic frame needs one frame interval of its own
            g = start + (self._synth_j + 1) * period
            if g > t1:
                return
            if g >= self._synth_stop:
                self._synth_start = None
                return
            self._synth_j += 1
            i = bisect.bisect_right(inputs, g)
            if i and inputs[i - 1] > g - self._starvation:
                self.frames.append(RenderedFrame(g, Mode.AI))
                self.synth_chunks.append(g)

    def interval_transit(self) -> tuple[float, bool]:
        """Mean one-way transit this interval; held from earlier if nothing arrived."""
        fresh = self._transit_n > 0
        if fresh:
            self.transit = self._transit_sum / self._transit_n
        self._transit_sum, self._transit_n = 0.0, 0
        return self.transit, fresh

    def drain(self) -> None:
        self.advance(math.inf, synthesise=False)

    @property
    def accounting(self) -> dict:
        in_flight = len(self._hop) + len(self._pending)
        return {
            "sent": self.sent_packets,
            "delivered": self.recv_packets,
            "lost": self.lost,
            "queue_dropped": self.dropped,
            "in_flight": in_flight,
        }


@dataclass
class Endpoint:
    name: str
    generator: TrafficGenerator
    loop: ControlLoop
    timeline: list[TimelineEntry] = field(default_factory=list)
    telemetry: list[TelemetryCsvRow] = field(default_factory=list)

    @property
    def controller_config(self) -> ControllerConfig:
        return self.loop.controller.cfg


@dataclass(frozen=True)
class QualityRow:
    t: float
    mode: Mode
    audio_jitter_ms: float
    video_jitter_ms: Optional[float]
    rtt_ms: float
    frames: int
    freezes: int = 0


@dataclass
class SessionReport:
    scenario: ScenarioConfig
    timeline: list[TimelineEntry]
    peer_timeline: list[TimelineEntry]
    telemetry: list[TelemetryCsvRow]
    quality: list[QualityRow]
    switches: list[SwitchRecord]
    switch_dropouts: list[float]  # audio dropout seconds attributable to each switch
    audio_dropout_total: float
    freezes: FreezeStats
    frames: list[RenderedFrame]
    synthesis: SynthesisReport
    recovery: list[Optional[float]]
    accounting: dict[str, dict]
    rng: dict

    @property
    def evaluation(self) -> list[TimelineEntry]:
        """Timeline samples whose interval lies after the warm-up."""
        return [e for e in self.timeline if in_window(e.sample.t, self.scenario)]

    def rate_series(self) -> dict[Mode, dict[str, list[float]]]:
        """Per-mode uplink/downlink/total instantaneous rates over the evaluation window."""
        out: dict[Mode, dict[str, list[float]]] = {}
        for e in self.evaluation:
            s = out.setdefault(e.decision.previous, {"uplink": [], "downlink": [], "total": []})
            s["uplink"].append(e.estimate.rate_tx)
            s["downlink"].append(e.estimate.rate_rx)
            s["total"].append(e.estimate.rate_tx + e.estimate.rate_rx)
        return out


def in_window(t: float, scenario: ScenarioConfig) -> bool:
    return t - scenario.estimator.delta_t >= scenario.warm_up - 1e-9


def _legs(scenario: ScenarioConfig, forward: bool) -> list[Link]:
    up, down, peer = scenario.uplink, scenario.downlink_profile, scenario.sfu_profile
    if scenario.topology == "p2p":
        return [Link(up, "a->b")] if forward else [Link(down, "b->a")]
    if forward:
        return [Link(up, "a->sfu"), Link(peer, "sfu->b")]
    return [Link(peer, "b->sfu"), Link(down, "sfu->a")]


def _configure(ep: Endpoint, t: float, entry_mode: Mode, knobs: ControllerConfig) -> None:
    ep.generator.configure(t, entry_mode, demand_for(entry_mode, knobs), knobs)


def run_session(scenario: ScenarioConfig) -> SessionReport:
    """Simulate ``scenario`` and run every detector over the result."""
    dt = scenario.estimator.delta_t
    sess = scenario.session
    steps = int(round(scenario.duration / dt))
    a = Endpoint("a", TrafficGenerator("a", sess.traffic), ControlLoop(scenario.estimator, scenario.controller))
    b = Endpoint("b", TrafficGenerator("b", sess.traffic),
                 ControlLoop(scenario.estimator, scenario.peer_controller_config))
    for ep in (a, b):
        _configure(ep, 0.0, Mode.NORMAL, ep.controller_config)
    ab = _Direction("a->b", _legs(scenario, True), a.generator, sess.synthetic_fps, sess.synth_starvation)
    ba = _Direction("b->a", _legs(scenario, False), b.generator, sess.synthetic_fps, sess.synth_starvation)
    synth_delay = scenario.synth.total

    quality: list[QualityRow] = []
    for k in range(1, steps + 1):
        t0, t1 = (k - 1) * dt, k * dt
        ab.send(a.generator.emit(t0, t1))
        ba.send(b.generator.emit(t0, t1))
        ab.advance(t1)
        ba.advance(t1)
        fwd, _ = ab.interval_transit()
        back, _ = ba.interval_transit()
        rtt = fwd + back
        for ep, out, inc in ((a, ab, ba), (b, ba, ab)):
            row = TelemetryCsvRow.from_measurement(
                t1, out.sent_bytes, inc.recv_bytes, out.lost + out.dropped, out.recv_packets,
                rtt, out.audio_jitter.value, len(inc.frames), ep.loop.mode.value,
            )
            entry = ep.loop.step(row.to_sample())
            ep.timeline.append(entry)
            ep.telemetry.append(row)
            dec = entry.decision
            if dec.switched or dec.knobs != ep.generator.knobs:
                _configure(ep, t1, dec.mode, dec.knobs)
            if dec.switched:
                if dec.mode is Mode.AI:
                    out.start_synthesis(t1 + synth_delay)
                elif dec.previous is Mode.AI:
                    out.stop_synthesis(t1)
        quality.append(QualityRow(
            t1, a.timeline[-1].decision.previous,
            round(ab.audio_jitter.value * 1000, 3),
            round(ab.visual_jitter.value * 1000, 3) if ab.visual_seen else None,
            round(rtt * 1000, 3), 0,
        ))
        ab.visual_seen = ba.visual_seen = False
    end = steps * dt
    frames_by_interval = _count_per_interval([f.t for f in ab.frames], dt, steps)
    ab.drain()
    ba.drain()

    # detectors, all over A's outgoing media as seen at B
    ab.frames.sort()
    frame_times = [f.t for f in ab.frames]
    switch_events = [SwitchEvent(e.sample.t, e.decision.previous, e.decision.mode)
                     for e in a.timeline if e.decision.switched]
    switches = measure_handover(switch_events, [f for f in ab.frames if f.t <= end],
                                sess.handover_window, sess.handover_max_gap, trace_end=end)
    gaps = audio_gaps([x for x in sorted(ab.audio_arrivals) if x <= end],
                      sess.traffic.audio_interval, sess.audio_gap_threshold)
    dropouts = []
    for rec in switches:
        until = rec.complete_t if rec.complete_t is not None else rec.decide_t + sess.handover_window
        dropouts.append(sum(h for start, h in gaps if rec.decide_t <= start <= until))
    window_gaps = [(s, h) for s, h in gaps if s >= scenario.warm_up]
    freezes = detect_freezes(frame_times, scenario.freeze, scenario.evaluation_window, start=scenario.warm_up)
    freeze_starts = [s for s, _ in freeze_gaps(frame_times, scenario.freeze.t_freeze, scenario.warm_up, end)]
    freeze_per_interval = _count_per_interval(freeze_starts, dt, steps, closed_left=True)
    quality = [
        QualityRow(q.t, q.mode, q.audio_jitter_ms, q.video_jitter_ms, q.rtt_ms, frames_by_interval[i],
                   freeze_per_interval[i])
        for i, q in enumerate(quality) if in_window(q.t, scenario)
    ]
    synthesis = measure_synthesis_latency(
        [scenario.synth.chunk_events(g - synth_delay) for g in ab.synth_chunks], scenario.synth)
    recovery = _recovery(a.timeline, scenario.controller, scenario.uplink)

    rng = {
        "algorithm": RNG_ALGORITHM,
        "seed": scenario.seed,
        "profiles": {name: p.seed for name, p in (
            ("uplink", scenario.uplink), ("downlink", scenario.downlink_profile), ("sfu", scenario.sfu_profile))},
    }
    return SessionReport(
        scenario=scenario,
        timeline=a.timeline,
        peer_timeline=b.timeline,
        telemetry=a.telemetry,
        quality=quality,
        switches=switches,
        switch_dropouts=dropouts,
        audio_dropout_total=sum(h for _, h in window_gaps),
        freezes=freezes,
        frames=ab.frames,
        synthesis=synthesis,
        recovery=recovery,
        accounting={"a->b": ab.accounting, "b->a": ba.accounting},
        rng=rng,
    )


def _count_per_interval(times: list[float], dt: float, steps: int, closed_left: bool = False) -> list[int]:
    """Bucket event times into the sampling intervals ``(t-dt, t]``."""
    counts = [0] * steps
    for x in times:
        k = math.floor(x / dt) if closed_left else math.ceil(x / dt) - 1
        if 0 <= k < steps:
            counts[k] += 1
    return counts


def _recovery(timeline: list[TimelineEntry], cfg: ControllerConfig, profile: ImpairmentProfile) -> list[Optional[float]]:
    times = [e.sample.t for e in timeline]
    budget = [e.estimate.capacity * cfg.headroom for e in timeline]
    demand = [e.decision.demand.total for e in timeline]
    return measure_recovery(times, budget, demand, profile.drop_times(), cfg.n_stable)
