"""Decay-rate laboratory for semilinear waves on perturbed backgrounds."""

__version__ = "0.1.0"
