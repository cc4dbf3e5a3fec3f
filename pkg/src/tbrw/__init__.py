"""Tree builder random walk: simulation engines, observables and exact oracles."""
__version__ = "0.1.0"
