"""Numerical laboratory for the heat equation with quadratic nonlinearity driven by
fractional space-time noise: heat-kernel integrals, spectral noise synthesis,
renormalization constants, Sobolev norms and a Picard solver."""

__version__ = "0.1.0"
