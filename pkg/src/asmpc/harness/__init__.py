"""Closed-loop simulation, benchmarks, persistence, plots, and the CLI."""

from .problems import build_ocp_spec, lqr_gain, terminal_region

__all__ = ["build_ocp_spec", "lqr_gain", "terminal_region"]
