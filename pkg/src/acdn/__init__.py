"""Anycast CDN detection and passive traffic characterization toolkit."""

__version__ = "0.1.0"
