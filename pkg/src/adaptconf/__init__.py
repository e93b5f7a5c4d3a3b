"""Telemetry-driven mode controller and call simulator for adaptive video conferencing."""
__version__ = "0.1.0"

from .controller import Controller, ControllerConfig, Mode, RateDemand  # noqa: E402
from .errors import AdaptConfError, ConfigError, RejectedSampleError, ReplayError  # noqa: E402
from .telemetry import CounterSample, Estimator, EstimatorConfig, LinkEstimate  # noqa: E402

__all__ = [
    "AdaptConfError", "ConfigError", "Controller", "ControllerConfig", "CounterSample",
    "Estimator", "EstimatorConfig", "LinkEstimate", "Mode", "RateDemand",
    "RejectedSampleError", "ReplayError", "__version__",
]
