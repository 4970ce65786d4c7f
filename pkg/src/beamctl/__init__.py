"""beamctl: intranet beamline control with simulated hardware.

Layers, bottom up: kinematics (monochromator solve and cubic fits),
hardware (simulated units), server (the singleton device instance),
protocol (line-JSON over TCP), scan (energy-scan engine), gateway
(HTTP/WebSocket bridge), cli (operator client).
"""

from .config import BeamlineConfig, load_config
from .kinematics import MonoConfig, OpticsSolution, CubicFit
from .server import BeamlineInstance, init_once

__all__ = [
    "BeamlineConfig", "load_config",
    "MonoConfig", "OpticsSolution", "CubicFit",
    "BeamlineInstance", "init_once",
]

__version__ = "0.1.0"
