from .explore import CheckerConfig, ExplorationReport, MUTATIONS, explore

__all__ = ["CheckerConfig", "ExplorationReport", "MUTATIONS", "explore"]
