"""Estimator plus controller, stepped once per telemetry sample.

Simulation and replay both drive this loop from the same counter samples,
which is what makes a replayed trace reproduce the simulated mode timeline.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .controller import Controller, ControllerConfig, Decision
from .telemetry import CounterSample, Estimator, EstimatorConfig, LinkEstimate


@dataclass(frozen=True)
class TimelineEntry:
    sample: CounterSample
    estimate: LinkEstimate
    decision: Decision
    event: str = ""


class ControlLoop:
    def __init__(self, estimator: Optional[EstimatorConfig] = None, controller: Optional[ControllerConfig] = None):
        self.estimator = Estimator(estimator or EstimatorConfig())
        self.controller = Controller(controller or ControllerConfig())

    @property
    def mode(self):
        return self.controller.mode

    def step(self, sample: CounterSample) -> TimelineEntry:
        """Raises RejectedSampleError for a sample that breaks monotonicity."""
        est = self.estimator.process(sample)
        dec = self.controller.step(sample.t, est.capacity)
        event = ""
        if dec.switched:
            # the old mode's rate would otherwise linger in the EWMA for
            # several samples and could trigger a spurious counter run
            self.estimator.reseed()
            event = f"switch:{dec.previous.value}->{dec.mode.value}"
        return TimelineEntry(sample, est, dec, event)
