"""fairgate: fairness-gated governance for tabular risk models."""

__version__ = "0.1.0"
