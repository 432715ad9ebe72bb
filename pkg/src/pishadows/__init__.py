"""Permutation-invariant classical shadows for qubit ensembles."""

from . import channel, estimate, oracle, pibasis, repcomb, sim  # noqa: F401

__version__ = "0.1.0"
