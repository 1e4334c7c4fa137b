"""Finite-injury construction workbench.

Builds two membership sets stage by stage under a priority discipline,
derives the diagonal sets and joint description table from the run, and
machine-checks every structural invariant of the construction at finite
horizons.
"""

__version__ = "0.1.0"
