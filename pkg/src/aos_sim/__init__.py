"""Airborne optical sectioning over procedural forests: simulation and analysis."""

__version__ = "0.1.0"
