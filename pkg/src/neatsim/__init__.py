"""Cache coherence laboratory: Neat-style self-invalidation protocols, directory
MESI, and write-through (VIPS) coherence, exercised by an explicit-state model
checker and a trace-driven timing simulator."""

__version__ = "0.1.0"
