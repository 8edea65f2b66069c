"""Coverage of uncoordinated mmWave spectrum sharing with carrier sensing: simulator and analytic evaluator."""

from .analysis import AnalysisContext, AnalysisResult, QuadratureSettings, coverage_curve, coverage_probability
from .deployment import Deployment, SharingModel, decompose_densities, sample_deployment
from .protocols import Protocol, SensingParams
from .radio import AntennaParams, LinkType, NoiseParams, PathLossParams
from .simulator import SimConfig, SimResult, run_simulation

__all__ = [
    "AnalysisContext",
    "AnalysisResult",
    "AntennaParams",
    "Deployment",
    "LinkType",
    "NoiseParams",
    "PathLossParams",
    "Protocol",
    "QuadratureSettings",
    "SensingParams",
    "SharingModel",
    "SimConfig",
    "SimResult",
    "coverage_curve",
    "coverage_probability",
    "decompose_densities",
    "run_simulation",
    "sample_deployment",
]
__version__ = "0.1.0"
