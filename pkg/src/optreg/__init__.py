"""Distributed optimal steady-state regulation for heterogeneous linear
multi-agent systems with exosystem disturbances."""

__version__ = "0.1.0"
