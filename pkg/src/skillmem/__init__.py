"""Student learning-and-forgetting models over timestamped multi-skill logs."""

__version__ = "0.1.0"
