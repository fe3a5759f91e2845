"""prunekit: dependency-aware structured channel pruning with data-aware retraining."""

__version__ = "0.1.0"
