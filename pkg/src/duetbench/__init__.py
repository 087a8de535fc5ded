"""Duet benchmarking: paired, barrier-synchronized measurement of two workloads."""

__version__ = "0.1.0"
