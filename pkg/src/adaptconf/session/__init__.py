"""Simulated call endpoints, traffic sources and quality detectors."""
from .detectors import (
    FreezeDetectorConfig,
    FreezeStats,
    RenderedFrame,
    SwitchEvent,
    SwitchRecord,
    SynthPipelineModel,
    detect_audio_dropouts,
    detect_freezes,
    measure_handover,
    measure_recovery,
    measure_synthesis_latency,
)
from .traffic import TrafficGenerator, TrafficSettings, TrafficSource, generate_traffic

__all__ = [
    "FreezeDetectorConfig", "FreezeStats", "RenderedFrame", "SwitchEvent", "SwitchRecord",
    "SynthPipelineModel", "TrafficGenerator", "TrafficSettings", "TrafficSource",
    "detect_audio_dropouts", "detect_freezes", "generate_traffic", "measure_handover",
    "measure_recovery", "measure_synthesis_latency",
]
