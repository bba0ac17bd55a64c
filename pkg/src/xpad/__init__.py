"""Cross-provider audit-log anomaly detection toolkit."""

__version__ = "0.1.0"
