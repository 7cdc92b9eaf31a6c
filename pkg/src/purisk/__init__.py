"""purisk: positive-unlabeled risk scoring and ranking for procurement data."""

__version__ = "0.1.0"
