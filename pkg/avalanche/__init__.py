"""Toolkit for the one-dimensional avalanche particle system.

Forward simulation, contour processes, an exact backward sampler of the
invariant law, the mean-field steady state, and the experiment harness
that compares them.
"""
__version__ = '0.1.0'
