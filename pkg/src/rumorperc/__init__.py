"""Rumor percolation on the line and on trees."""
from .dist import Law, TailDescriptor, parse_law, annealed_radius
from .line import SurvivalReport

__all__ = ["Law", "TailDescriptor", "parse_law", "annealed_radius", "SurvivalReport"]
__version__ = "0.1.0"
