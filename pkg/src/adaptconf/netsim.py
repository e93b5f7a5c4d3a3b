"""Deterministic model of a constrained, impaired link.

Packets pass three stages in order: a token-bucket shaper with a bounded
FIFO queue (rate cap), a per-packet loss model (uniform or two-state burst),
and a delay stage (fixed one-way delay plus uniform jitter). Impairments
follow a time-scheduled profile keyed by send time.

Randomness comes from numpy's PCG64 generator. Each link derives one
independent substream per purpose ("loss", "jitter") from the profile seed
and the link label, so changing the jitter settings never perturbs the loss
pattern.
"""
from __future__ import annotations

import bisect
import enum
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from .errors import ConfigError

RNG_ALGORITHM = f"numpy-{np.__version__}/PCG64/SeedSequence"
DEFAULT_BURST_WINDOW = 0.1
DEFAULT_QUEUE_BOUND = 0.25


@dataclass(frozen=True)
class UniformLoss:
    p: float = 0.0

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ConfigError("loss.p", "must lie in [0, 1]")

    @property
    def stationary_loss(self) -> float:
        return self.p


@dataclass(frozen=True)
class BurstLoss:
    """Gilbert-Elliott chain; the state advances once per packet."""

    p_good_to_bad: float
    p_bad_to_good: float
    loss_in_bad: float = 1.0
    loss_in_good: float = 0.0

    def __post_init__(self):
        for name in ("p_good_to_bad", "p_bad_to_good", "loss_in_bad", "loss_in_good"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"loss.{name}", "must lie in [0, 1]")

    @property
    def stationary_loss(self) -> float:
        denom = self.p_good_to_bad + self.p_bad_to_good
        if denom == 0:
            return self.loss_in_good
        pi_bad = self.p_good_to_bad / denom
        return pi_bad * self.loss_in_bad + (1 - pi_bad) * self.loss_in_good


LossModel = Union[UniformLoss, BurstLoss]


@dataclass(frozen=True)
class Segment:
    start_t: float
    cap: float  # kbps
    delay: float = 0.0
    jitter_max: float = 0.0
    loss: LossModel = field(default_factory=UniformLoss)

    def __post_init__(self):
        if not self.cap > 0:
            raise ConfigError("segment.cap", "must be > 0")
        if self.delay < 0:
            raise ConfigError("segment.delay", "must be >= 0")
        if self.jitter_max < 0:
            raise ConfigError("segment.jitter_max", "must be >= 0")


@dataclass(frozen=True)
class ImpairmentProfile:
    segments: tuple[Segment, ...]
    seed: int = 0
    burst_window: float = DEFAULT_BURST_WINDOW
    queue_bound: float = DEFAULT_QUEUE_BOUND

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ConfigError("profile.segments", "at least one segment required")
        if self.segments[0].start_t != 0:
            raise ConfigError("profile.segments", "first segment must start at 0")
        starts = [s.start_t for s in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("profile.segments", "start times must be strictly increasing")
        if not self.burst_window > 0:
            raise ConfigError("profile.burst_window", "must be > 0")
        if self.queue_bound < 0:
            raise ConfigError("profile.queue_bound", "must be >= 0")

    @classmethod
    def constant(cls, cap: float, delay: float = 0.0, jitter_max: float = 0.0,
                 loss: Optional[LossModel] = None, seed: int = 0, **kw) -> "ImpairmentProfile":
        seg = Segment(0.0, cap, delay, jitter_max, loss or UniformLoss())
        return cls((seg,), seed=seed, **kw)

    def segment_at(self, t: float) -> Segment:
        idx = bisect.bisect_right(self._starts, t) - 1
        return self.segments[max(idx, 0)]

    @property
    def _starts(self) -> list[float]:
        return [s.start_t for s in self.segments]

    def drop_times(self) -> list[float]:
        """Segment boundaries where the cap decreases."""
        return [b.start_t for a, b in zip(self.segments, self.segments[1:]) if b.cap < a.cap]


class Kind(str, enum.Enum):
    AUDIO = "audio"
    VIDEO = "video"
    CONTROL = "control"
    REFERENCE = "reference"


@dataclass(slots=True)
class Packet:
    id: int
    size: int  # bytes
    send_t: float
    kind: Kind
    flow: str
    frame: int = -1  # video frame index, -1 when not part of a frame
    frame_packets: int = 0  # packets making up that frame

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("packet size must be > 0")


class Outcome(str, enum.Enum):
    DELIVERED = "delivered"
    LOST = "lost"
    QUEUE_DROPPED = "queued_dropped"


@dataclass(slots=True)
class DeliveryEvent:
    packet: Packet
    outcome: Outcome
    arrive_t: Optional[float] = None
    depart_t: Optional[float] = None  # when the shaper released it

    @property
    def packet_id(self) -> int:
        return self.packet.id

    @property
    def event_t(self) -> float:
        return self.arrive_t if self.arrive_t is not None else self.packet.send_t


def substream(seed: int, *labels: str) -> np.random.Generator:
    """Independent generator for ``labels`` under ``seed``."""
    key = tuple(zlib.crc32(label.encode()) for label in labels)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


class UniformStream:
    """Buffered uniform draws; the sequence is independent of buffer size."""

    __slots__ = ("_rng", "_buf", "_pos", "_block")

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self._rng = rng
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._rng.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


class TokenBucket:
    """Shaper state: a token bucket draining a byte-bounded FIFO queue.

    Departure times are computed analytically, so the shaper never needs a
    clock of its own: a packet leaves once every earlier packet has left
    and the bucket holds enough tokens for it.
    """

    def __init__(self, cap_kbps: float, burst_window: float = DEFAULT_BURST_WINDOW,
                 queue_bound: float = DEFAULT_QUEUE_BOUND):
        self.burst_window = burst_window
        self.queue_bound = queue_bound
        self._queue: deque[tuple[float, int]] = deque()  # (depart_t, size)
        self._queued_bytes = 0
        self._last_depart = 0.0
        self.set_rate(cap_kbps)
        self._tokens = self.depth  # bits, as of _last_depart

    def set_rate(self, cap_kbps: float) -> None:
        self.rate = cap_kbps * 1000.0  # bits/s
        self.depth = self.rate * self.burst_window  # bits
        self.queue_limit = self.rate * self.queue_bound / 8.0  # bytes
        if hasattr(self, "_tokens"):
            self._tokens = min(self._tokens, self.depth)

    def offer(self, send_t: float, size: int) -> Optional[float]:
        """Departure time for a packet, or None if the queue cannot take it."""
        queue = self._queue
        while queue and queue[0][0] <= send_t:
            self._queued_bytes -= queue.popleft()[1]
        bits = size * 8.0
        start = send_t if send_t > self._last_depart else self._last_depart
        tokens = self._tokens + self.rate * (start - self._last_depart)
        if tokens > self.depth:
            tokens = self.depth
        if tokens >= bits:
            depart = start
            tokens -= bits
        else:
            depart = start + (bits - tokens) / self.rate
            tokens = 0.0
        if depart > send_t and self._queued_bytes + size > self.queue_limit:
            return None
        self._tokens = tokens
        self._last_depart = depart
        if depart > send_t:
            queue.append((depart, size))
            self._queued_bytes += size
        return depart


class LossProcess:
    def __init__(self, stream: UniformStream):
        self._u = stream
        self._bad = False

    def lost(self, model: LossModel) -> bool:
        u = self._u.next
        if isinstance(model, UniformLoss):
            return model.p > 0 and u() < model.p
        p = model.loss_in_bad if self._bad else model.loss_in_good
        dropped = u() < p
        if self._bad:
            if u() < model.p_bad_to_good:
                self._bad = False
        elif u() < model.p_good_to_bad:
            self._bad = True
        return dropped


def apply_loss(packet: Packet, process: LossProcess, model: LossModel) -> bool:
    """True if ``packet`` is lost on the wire."""
    return process.lost(model)


def apply_delay(depart_t: float, segment: Segment, jitter: UniformStream) -> float:
    """Arrival time for a packet released by the shaper at ``depart_t``."""
    extra = segment.jitter_max * jitter.next() if segment.jitter_max > 0 else 0.0
    return depart_t + segment.delay + extra


class Link:
    """One direction of one hop. Packets must be offered in send-time order."""

    def __init__(self, profile: ImpairmentProfile, label: str = "link"):
        self.profile = profile
        self.label = label
        self._seg_idx = 0
        seg = profile.segments[0]
        self.bucket = TokenBucket(seg.cap, profile.burst_window, profile.queue_bound)
        self._loss = LossProcess(UniformStream(substream(profile.seed, label, "loss")))
        self._jitter = UniformStream(substream(profile.seed, label, "jitter"))
        self._last_send = -np.inf

    def _segment_for(self, t: float) -> Segment:
        segs = self.profile.segments
        idx = self._seg_idx
        moved = False
        while idx + 1 < len(segs) and segs[idx + 1].start_t <= t:
            idx += 1
            moved = True
        if moved:
            self._seg_idx = idx
            self.bucket.set_rate(segs[idx].cap)
        return segs[idx]

    def send(self, packet: Packet, at: Optional[float] = None) -> DeliveryEvent:
        """Offer ``packet`` at its send time, or at ``at`` when relayed by a hop."""
        t = packet.send_t if at is None else at
        if t < self._last_send:
            raise ValueError(f"{self.label}: packets must be offered in send order")
        self._last_send = t
        seg = self._segment_for(t)
        depart = self.bucket.offer(t, packet.size)
        if depart is None:
            return DeliveryEvent(packet, Outcome.QUEUE_DROPPED)
        if self._loss.lost(seg.loss):
            return DeliveryEvent(packet, Outcome.LOST, depart_t=depart)
        arrive = depart + seg.delay
        if seg.jitter_max > 0:
            arrive += seg.jitter_max * self._jitter.next()
        return DeliveryEvent(packet, Outcome.DELIVERED, arrive, depart)


def shape(packet: Packet, bucket: TokenBucket) -> Optional[float]:
    """Admit ``packet`` to the shaper; returns its departure time or None if dropped."""
    return bucket.offer(packet.send_t, packet.size)


def run_link(packets: Iterable[Packet], profile: ImpairmentProfile, label: str = "link") -> list[DeliveryEvent]:
    """Push a send-ordered packet stream through a fresh link.

    Events come back ordered by event time (arrival for delivered packets,
    send time for losses and drops), ties broken by packet id.
    """
    link = Link(profile, label)
    events = [link.send(p) for p in packets]
    events.sort(key=lambda e: (e.event_t, e.packet.id))
    return events


def iter_delivered(events: Iterable[DeliveryEvent]) -> Iterator[DeliveryEvent]:
    return (e for e in events if e.outcome is Outcome.DELIVERED)
