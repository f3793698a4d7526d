"""Hyperbolic kinetic chemotaxis with internal signal transduction.

Modules
-------
model
    Model ingredients (internal dynamics, turning rate and kernel, signal
    reactions) and validation of the growth hypotheses.
characteristics
    Characteristic curves of the transport operator, Jacobian determinants
    and the a priori internal-state box.
signal
    Elliptic and parabolic signal solvers and explicit signal bounds.
kinetic
    Conservative split-step solver for the phase-space density.
agents
    Exact event-driven agent simulation by thinning.
monitor
    Bound ledger, Gronwall envelopes and concentration metrics.
config, runner, cli
    Scenario files, the run loop and the command-line interface.
"""

from .config import ScenarioConfig, load_config, parse_config
from .errors import ConfigurationError, KinchemoError
from .model import ModelConfig, validate_growth_conditions
from .runner import RunSummary, run_scenario

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "KinchemoError", "ModelConfig", "RunSummary", "ScenarioConfig", "load_config",
           "parse_config", "run_scenario", "validate_growth_conditions", "__version__"]
