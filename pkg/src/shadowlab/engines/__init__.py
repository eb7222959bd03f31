"""Simulation engines: a brute-force joint statevector and a kickback sampler."""

from shadowlab.engines import full, kickback

__all__ = ["full", "kickback"]
