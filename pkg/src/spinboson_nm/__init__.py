"""Zero-temperature spin-boson qubit: TCL2 dynamics, complete positivity and non-Markovianity."""

__version__ = "0.1.0"
