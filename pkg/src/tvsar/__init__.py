"""Bayesian time-varying multi-seasonal autoregression with dynamic shrinkage."""
from tvsar.model import SarStructure

__version__ = "0.1.0"
__all__ = ["SarStructure", "__version__"]
