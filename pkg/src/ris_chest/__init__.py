"""Channel estimation for semi-passive RIS-aided broadband mmWave MIMO.

Pipeline: 1-bit sampled RIS measurements -> ADMM nuclear-norm matrix
completion -> EM-GAMP sparse recovery in the angular-delay domain.
"""

from .config import AdmmParams, BaselineParams, EmGampParams, RunConfig, SystemConfig
from .harness import ExperimentSpec, nmse, run_trial, sweep

__all__ = [
    "AdmmParams",
    "BaselineParams",
    "EmGampParams",
    "RunConfig",
    "SystemConfig",
    "ExperimentSpec",
    "nmse",
    "run_trial",
    "sweep",
]
__version__ = "0.1.0"
