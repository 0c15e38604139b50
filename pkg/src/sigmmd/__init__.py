"""Signature-kernel MMD generative models for financial time series."""

__version__ = "0.1.0"
