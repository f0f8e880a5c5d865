"""Monte Carlo toolkit for random-norm inference after two-stage adaptive designs."""

__version__ = "0.1.0"
