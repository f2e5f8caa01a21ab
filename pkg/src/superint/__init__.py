"""Superintegrable metrics (dx² + dy²)/h_x² with one linear and one cubic integral."""

__version__ = "0.1.0"
