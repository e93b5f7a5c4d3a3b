"""Offline replay of a recorded telemetry trace through the control loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .controller import ControllerConfig, Mode
from .csvio import TelemetryTrace, read_telemetry
from .errors import RejectedSampleError
from .loop import ControlLoop, TimelineEntry
from .telemetry import EstimatorConfig

logger = logging.getLogger(__name__)


@dataclass
class ReplayResult:
    timeline: list[TimelineEntry]
    provenance: dict[str, str]
    malformed: list[tuple[int, str]] = field(default_factory=list)
    rejected: list[tuple[float, str]] = field(default_factory=list)  # (t, reason)
    warm_up: float = 0.0

    @property
    def empty(self) -> bool:
        return not self.timeline

    @property
    def modes(self) -> list[Mode]:
        return [e.decision.mode for e in self.timeline]

    def rate_series(self) -> dict[Mode, dict[str, list[float]]]:
        out: dict[Mode, dict[str, list[float]]] = {}
        prev_t = 0.0
        for e in self.timeline:
            t = e.sample.t
            if prev_t >= self.warm_up - 1e-9:
                s = out.setdefault(e.decision.previous, {"uplink": [], "downlink": [], "total": []})
                s["uplink"].append(e.estimate.rate_tx)
                s["downlink"].append(e.estimate.rate_rx)
                s["total"].append(e.estimate.rate_tx + e.estimate.rate_rx)
            prev_t = t
        return out


def replay_trace(source: Union[str, Path, TelemetryTrace], estimator: Optional[EstimatorConfig] = None,
                 controller: Optional[ControllerConfig] = None) -> ReplayResult:
    """Run the estimator and controller over recorded counters.

    Rows are processed exactly as the live loop processes its own samples.
    A row whose counters or timestamp go backwards is rejected and logged,
    and the estimator restarts its counter epoch from that row.
    """
    trace = source if isinstance(source, TelemetryTrace) else read_telemetry(source)
    loop = ControlLoop(estimator, controller)
    timeline, rejected = [], []
    for row in trace.rows:
        sample = row.to_sample()
        try:
            timeline.append(loop.step(sample))
        except RejectedSampleError as exc:
            logger.warning("t=%.3f: %s; estimator restarts from this sample", sample.t, exc)
            rejected.append((sample.t, str(exc)))
            loop.estimator.reset(sample)
    warm_up = float(trace.provenance.get("warm_up", 0.0))
    return ReplayResult(timeline, dict(trace.provenance), list(trace.malformed), rejected, warm_up)
