"""Post-processors over a logged call timeline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from ..controller import Mode


@dataclass(frozen=True)
class FreezeDetectorConfig:
    t_freeze: float = 0.5

    def __post_init__(self):
        if not self.t_freeze > 0:
            from ..errors import ConfigError

            raise ConfigError("freeze.t_freeze", "must be > 0")


class FreezeStats(NamedTuple):
    count: int
    total: float
    ratio: float


def freeze_gaps(timestamps: Sequence[float], t_freeze: float, start: float, end: float) -> list[tuple[float, float]]:
    """(gap start, gap length) for every render stall longer than ``t_freeze``.

    The window edges act as render events so a stall at either end of the
    window (or a window with no frames at all) is counted.
    """
    gaps = []
    last = start
    for ts in timestamps:
        if ts < start:
            continue
        if ts > end:
            break
        if ts - last > t_freeze:
            gaps.append((last, ts - last))
        last = ts
    if end - last > t_freeze:
        gaps.append((last, end - last))
    return gaps


def detect_freezes(timestamps: Sequence[float], cfg: FreezeDetectorConfig, window: float,
                   start: float = 0.0) -> FreezeStats:
    """Count stalls in the render timeline over ``[start, start + window]``.

    A stall longer than the threshold counts as frozen for its whole length.
    """
    gaps = freeze_gaps(timestamps, cfg.t_freeze, start, start + window)
    total = sum(g for _, g in gaps)
    return FreezeStats(len(gaps), total, total / window if window > 0 else 0.0)


def audio_gaps(arrivals: Sequence[float], cadence: float, gap_threshold: float) -> list[tuple[float, float]]:
    """(last arrival before the hole, hole length) for holes above ``gap_threshold``.

    A hole is the inter-arrival gap minus the nominal packet cadence.
    """
    out = []
    for a, b in zip(arrivals, arrivals[1:]):
        hole = (b - a) - cadence
        if hole > gap_threshold + 1e-12:
            out.append((a, hole))
    return out


def detect_audio_dropouts(arrivals: Sequence[float], cadence: float = 0.02, gap_threshold: float = 0.1) -> float:
    return sum(h for _, h in audio_gaps(arrivals, cadence, gap_threshold))


@dataclass(frozen=True)
class SwitchRecord:
    decide_t: float
    complete_t: Optional[float]
    from_mode: Mode
    to_mode: Mode

    @property
    def complete(self) -> bool:
        return self.complete_t is not None

    @property
    def latency(self) -> Optional[float]:
        return None if self.complete_t is None else self.complete_t - self.decide_t


class SwitchEvent(NamedTuple):
    t: float
    from_mode: Mode
    to_mode: Mode


class RenderedFrame(NamedTuple):
    t: float
    mode: Mode


def measure_handover(switches: Sequence[SwitchEvent], frames: Sequence[RenderedFrame],
                     window: float = 1.0, max_gap: float = 0.5,
                     trace_end: Optional[float] = None) -> list[SwitchRecord]:
    """Completion time of every mode switch.

    A switch completes at the first frame of the new mode after which frames
    of that mode keep coming, with no gap above ``max_gap``, for ``window``
    seconds. Switches into audio-only complete immediately since no video
    track remains to stabilise. A switch overtaken by the next switch or by
    the end of the trace before that happens is recorded as incomplete.
    """
    frames = sorted(frames)
    if trace_end is None:
        trace_end = frames[-1].t if frames else 0.0
    out = []
    for i, sw in enumerate(switches):
        if sw.to_mode is Mode.AUDIO_ONLY:
            out.append(SwitchRecord(sw.t, sw.t, sw.from_mode, sw.to_mode))
            continue
        horizon = switches[i + 1].t if i + 1 < len(switches) else trace_end
        # frames of the old mode still draining from the network are ignored
        cand = [f.t for f in frames if f.mode is sw.to_mode and sw.t <= f.t <= horizon]
        complete = None
        for j, t in enumerate(cand):
            if t + window > horizon:
                break
            last = t
            for k in range(j + 1, len(cand)):
                if cand[k] > t + window or cand[k] - last > max_gap:
                    break
                last = cand[k]
            if t + window - last <= max_gap:
                complete = t
                break
        out.append(SwitchRecord(sw.t, complete, sw.from_mode, sw.to_mode))
    return out


@dataclass(frozen=True)
class SynthPipelineModel:
    capture_delay: float = 0.02
    request_response_delay: float = 0.1
    inference_delay: float = 0.35
    render_delay: float = 0.05

    def __post_init__(self):
        for name in ("capture_delay", "request_response_delay", "inference_delay", "render_delay"):
            if getattr(self, name) < 0:
                from ..errors import ConfigError

                raise ConfigError(f"synth.{name}", "must be >= 0")

    @property
    def total(self) -> float:
        return self.capture_delay + self.request_response_delay + self.inference_delay + self.render_delay

    def chunk_events(self, t_cap: float) -> tuple[float, float, float, float]:
        t_req = t_cap + self.capture_delay
        t_resp = t_req + self.request_response_delay + self.inference_delay
        return t_cap, t_req, t_resp, t_resp + self.render_delay


@dataclass(frozen=True)
class SynthLatency:
    total: float
    capture: float
    transport: float
    inference: float
    render: float


class SynthesisReport(NamedTuple):
    chunks: list[SynthLatency]
    rejected: list[int]


def measure_synthesis_latency(events: Sequence[tuple[float, float, float, float]],
                              model: Optional[SynthPipelineModel] = None) -> SynthesisReport:
    """Per-chunk end-to-end synthesis delay with its breakdown.

    The request/response span is split into inference (the model's
    inference time, capped at the span) and transport (the remainder).
    Chunks whose timestamps are not ordered are rejected by index.
    """
    model = model or SynthPipelineModel()
    chunks, rejected = [], []
    for i, (cap, req, resp, play) in enumerate(events):
        if not cap <= req <= resp <= play:
            rejected.append(i)
            continue
        span = resp - req
        inference = min(model.inference_delay, span)
        chunks.append(SynthLatency(play - cap, req - cap, span - inference, inference, play - resp))
    return SynthesisReport(chunks, rejected)


def measure_recovery(times: Sequence[float], capacity: Sequence[float], demand: Sequence[float],
                     drop_times: Sequence[float], n_stable: int) -> list[Optional[float]]:
    """Recovery time after each capacity drop.

    Recovery is the time from the drop to the start of the first run of
    ``n_stable`` consecutive samples in which demand fits capacity; None when
    no such run starts before the trace (or the next drop) ends.
    """
    out: list[Optional[float]] = []
    drops = sorted(drop_times)
    for i, drop in enumerate(drops):
        limit = drops[i + 1] if i + 1 < len(drops) else math.inf
        run_start = None
        run = 0
        result = None
        for t, c, d in zip(times, capacity, demand):
            if t < drop:
                continue
            if t >= limit:
                break
            if d <= c:
                if run == 0:
                    run_start = t
                run += 1
                if run >= n_stable:
                    result = run_start - drop
                    break
            else:
                run = 0
        out.append(result)
    return out
