"""Semi-supervised entity-relationship sentiment analysis."""

__version__ = "0.1.0"
