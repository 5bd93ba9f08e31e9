"""Driver-attention caption curation and evaluation toolkit."""

__version__ = "0.1.0"
