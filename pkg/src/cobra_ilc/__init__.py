"""Altitude learning control for a tail-sitter pitch-up (Cobra) maneuver, in simulation."""

from .config import ConfigError, RunConfig, load
from .controllers import AltitudeGains, ManeuverProfile, PositionController
from .flight import ControllerConfig, SimSetup, Trajectory, run_flight
from .ilc import IlcConfig, build_lifted, run_campaign, solve_box_qp, update_input
from .loopshape import TransferFunction, altitude_loop, derive_gains, margins
from .plant import DisturbanceProfile, PlantConfig, Pulse, SimulationFault

__version__ = "0.1.0"

__all__ = [
    "AltitudeGains", "ConfigError", "ControllerConfig", "DisturbanceProfile", "IlcConfig",
    "ManeuverProfile", "PlantConfig", "PositionController", "Pulse", "RunConfig", "SimSetup",
    "SimulationFault", "TransferFunction", "Trajectory", "altitude_loop", "build_lifted",
    "derive_gains", "load", "margins", "run_campaign", "run_flight", "solve_box_qp",
    "update_input",
]
