"""Blockchain-coordinated federated learning simulator with CKKS-encrypted aggregation."""

__version__ = "0.1.0"
