"""Per-interval link estimates from cumulative endpoint counters.

Every estimate is derived from two consecutive counter snapshots: byte
deltas give instantaneous rates, an EWMA smooths them, the interval loss
ratio discounts the smoothed uplink rate into goodput, and RTT/jitter
penalise goodput into the capacity proxy the controller acts on.

Rates are in kbps, times in seconds.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import ConfigError, RejectedSampleError

logger = logging.getLogger(__name__)

CUMULATIVE_FIELDS = ("bytes_tx_cum", "bytes_rx_cum", "packets_lost_cum", "packets_recv_cum")


@dataclass(frozen=True)
class CounterSample:
    """One timestamped snapshot of cumulative transport counters."""

    t: float
    bytes_tx_cum: int = 0
    bytes_rx_cum: int = 0
    packets_lost_cum: int = 0
    packets_recv_cum: int = 0
    rtt: float = 0.0
    jitter: float = 0.0

    def __post_init__(self):
        for name in CUMULATIVE_FIELDS + ("rtt", "jitter"):
            if getattr(self, name) < 0:
                raise RejectedSampleError(name, f"negative value {getattr(self, name)!r}")


ORIGIN = CounterSample(t=0.0)


@dataclass(frozen=True)
class LinkEstimate:
    t: float
    rate_tx: float
    rate_rx: float
    rate_tx_smooth: float
    rate_rx_smooth: float
    loss_ratio: float
    goodput: float
    capacity: float


@dataclass(frozen=True)
class EstimatorConfig:
    delta_t: float = 1.0
    alpha: float = 0.8
    kappa: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ConfigError("estimator.delta_t", "must be > 0")
        if not 0 < self.alpha < 1:
            raise ConfigError("estimator.alpha", "must lie in (0, 1)")
        if self.kappa < 0:
            raise ConfigError("estimator.kappa", "must be >= 0")
        if self.lam < 0:
            raise ConfigError("estimator.lambda", "must be >= 0")


def _check_monotone(prev: CounterSample, curr: CounterSample) -> None:
    if not curr.t > prev.t:
        raise RejectedSampleError("t", f"time did not advance ({prev.t!r} -> {curr.t!r})")
    for name in CUMULATIVE_FIELDS:
        before, after = getattr(prev, name), getattr(curr, name)
        if after < before:
            raise RejectedSampleError(name, f"counter went backwards ({before} -> {after})")


def estimate_rates(
    prev: CounterSample, curr: CounterSample, cfg: EstimatorConfig | None = None
) -> tuple[float, float]:
    """Instantaneous (tx, rx) rates in kbps over ``(prev.t, curr.t]``.

    The denominator is the measured elapsed time rather than the nominal
    sampling interval, so jittery sampling does not bias the rate.
    """
    _check_monotone(prev, curr)
    elapsed = curr.t - prev.t
    rate_tx = 8.0 * (curr.bytes_tx_cum - prev.bytes_tx_cum) / (1000.0 * elapsed)
    rate_rx = 8.0 * (curr.bytes_rx_cum - prev.bytes_rx_cum) / (1000.0 * elapsed)
    return rate_tx, rate_rx


def smooth_rate(prev_smooth: float, instantaneous: float, alpha: float) -> float:
    """EWMA step: ``alpha * prev_smooth + (1 - alpha) * instantaneous``."""
    if not 0 < alpha < 1:
        raise ConfigError("estimator.alpha", "must lie in (0, 1)")
    value = prev_smooth + (1.0 - alpha) * (instantaneous - prev_smooth)
    # keep the convex combination inside its endpoints despite rounding
    lo, hi = (prev_smooth, instantaneous) if prev_smooth <= instantaneous else (instantaneous, prev_smooth)
    return min(max(value, lo), hi)


def loss_ratio(prev: CounterSample, curr: CounterSample) -> float:
    lost = curr.packets_lost_cum - prev.packets_lost_cum
    recv = curr.packets_recv_cum - prev.packets_recv_cum
    if lost < 0 or recv < 0:
        raise RejectedSampleError(
            "packets_lost_cum" if lost < 0 else "packets_recv_cum", "counter went backwards"
        )
    total = lost + recv
    if total == 0:
        return 0.0
    return lost / total


def goodput(rate_tx_smooth: float, loss: float) -> float:
    return rate_tx_smooth * (1.0 - loss)


def capacity_proxy(goodput_kbps: float, rtt: float, jitter: float, kappa: float, lam: float) -> float:
    """Goodput penalised by delay and delay variation (rtt, jitter in seconds)."""
    return goodput_kbps / (1.0 + kappa * rtt + lam * jitter)


@dataclass(frozen=True)
class EstimatorMemory:
    """What the estimator carries between samples."""

    prev: CounterSample = ORIGIN
    smooth_tx: Optional[float] = None
    smooth_rx: Optional[float] = None

    @property
    def seeded(self) -> bool:
        return self.smooth_tx is not None


def _same_counters(a: CounterSample, b: CounterSample) -> bool:
    return all(getattr(a, n) == getattr(b, n) for n in CUMULATIVE_FIELDS)


def process_sample(
    memory: EstimatorMemory, curr: CounterSample, cfg: EstimatorConfig
) -> tuple[LinkEstimate, EstimatorMemory]:
    """Advance the streaming estimator by one sample.

    The first interval seeds both EWMAs with its instantaneous rates. A
    sample that coincides with the baseline (a trace starting at t=0 with
    zeroed counters) yields an idle estimate and leaves the EWMAs unseeded.
    """
    prev = memory.prev
    if not memory.seeded and curr.t == prev.t and _same_counters(prev, curr):
        idle = LinkEstimate(curr.t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        return idle, replace(memory, prev=curr)

    rate_tx, rate_rx = estimate_rates(prev, curr, cfg)
    loss = loss_ratio(prev, curr)
    if memory.seeded:
        tx_s = smooth_rate(memory.smooth_tx, rate_tx, cfg.alpha)
        rx_s = smooth_rate(memory.smooth_rx, rate_rx, cfg.alpha)
    else:
        tx_s, rx_s = rate_tx, rate_rx
    good = goodput(tx_s, loss)
    cap = capacity_proxy(good, curr.rtt, curr.jitter, cfg.kappa, cfg.lam)
    est = LinkEstimate(curr.t, rate_tx, rate_rx, tx_s, rx_s, loss, good, cap)
    return est, EstimatorMemory(prev=curr, smooth_tx=tx_s, smooth_rx=rx_s)


@dataclass
class Estimator:
    """Mutable convenience wrapper around :func:`process_sample`."""

    cfg: EstimatorConfig = field(default_factory=EstimatorConfig)
    memory: EstimatorMemory = field(default_factory=EstimatorMemory)

    def process(self, sample: CounterSample) -> LinkEstimate:
        est, self.memory = process_sample(self.memory, sample, self.cfg)
        return est

    def reseed(self) -> None:
        """Forget smoothing history; the next interval seeds the EWMAs again."""
        self.memory = replace(self.memory, smooth_tx=None, smooth_rx=None)

    def reset(self, origin: CounterSample) -> None:
        """Start a new counter epoch at ``origin`` (e.g. after a client restart)."""
        logger.info("estimator re-initialised at t=%.3f", origin.t)
        self.memory = EstimatorMemory(prev=origin)
