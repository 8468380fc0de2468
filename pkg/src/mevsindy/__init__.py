"""Sparse identification of weakly nonlinear forced oscillators in the
harmonic-envelope domain, with frequency-response continuation."""

__version__ = "0.1.0"
