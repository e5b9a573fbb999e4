"""quadnls: quadratic-interaction NLS system toolkit."""
__version__ = "0.1.0"
