"""Subdomain-conservative projection-based reduced order models."""

__version__ = "1.0.0"
