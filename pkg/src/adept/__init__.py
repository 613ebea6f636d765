"""Detection-event driven calibration for a repetition-code qubit chain."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .chain import ChainLayout, GateLocation, Kind, Parameter, ParameterRegistry, Role, build_chain, default_registry
from .detect import DetectionStats, compute_zeta, extract_events, group_metric
from .sim import ErrorModelConfig, analytic_zeta, run_batch, simulate_experiment, uniform_model

__all__ = [
    "ChainLayout", "GateLocation", "Kind", "Parameter", "ParameterRegistry", "Role", "build_chain",
    "default_registry", "DetectionStats", "compute_zeta", "extract_events", "group_metric",
    "ErrorModelConfig", "analytic_zeta", "run_batch", "simulate_experiment", "uniform_model",
]
