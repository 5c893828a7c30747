"""Finite-volume, finite-cutoff P(phi)_2 on the round sphere: spectral
samplers, Wick calculus, Langevin dynamics, stereographic projection,
weighted norms and a verification harness."""

__version__ = "0.1.0"
