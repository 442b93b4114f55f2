"""Desk-scale teleoperation testbed with reproducible network benchmarks."""

__version__ = "0.1.0"
