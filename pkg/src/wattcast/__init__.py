"""Speed-scaled broadcast scheduling: simulation, rounding and competitive-bound checks."""

__version__ = "0.1.0"
