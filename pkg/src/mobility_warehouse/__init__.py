"""Mobility-analytics warehouse for weekly-pattern foot-traffic data."""

__version__ = "0.1.0"
