"""Numerical laboratory for damped waves on the flat 2-torus."""
from . import averaging, damping, fitting, harness, oned, pseudodiff, spectral2d, timedomain

__version__ = "0.1.0"
