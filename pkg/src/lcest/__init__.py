"""Learning-coefficient estimation via tempered-posterior MCMC and quadrature."""

__version__ = "0.1.0"
