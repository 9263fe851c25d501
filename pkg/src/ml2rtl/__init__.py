"""Fixed-point compiler and emulator for tree ensembles and dense networks."""

__version__ = "0.1.0"
