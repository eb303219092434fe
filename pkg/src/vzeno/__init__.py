"""Driven three-level V system under repeated probe-pulse measurement.

Three independent routes to the same physics -- closed-form first-order
expressions (``analytic``), exact piecewise-constant propagation of the
ensemble master equation (``bloch``), and Monte-Carlo quantum trajectories
of single atoms (``trajectories``) -- built on a shared physical model
(``vsystem``, ``pulses``) and small dense linear algebra (``linalg3``).
"""

from .pulses import PulseSchedule, Segment, segments
from .vsystem import Epsilons, Preset, VParams, epsilons, preset, validate_regime

__all__ = [
    "PulseSchedule", "Segment", "segments",
    "Epsilons", "Preset", "VParams", "epsilons", "preset", "validate_regime",
]

__version__ = "0.1.0"
