from .engine import SimulationError, run_simulation
from .stats import StatsReport
from .trace import Trace, TraceEvent, parse_trace, write_trace

__all__ = ["SimulationError", "run_simulation", "StatsReport", "Trace",
           "TraceEvent", "parse_trace", "write_trace"]
