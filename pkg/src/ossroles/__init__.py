"""Contributor role mining: action metrics, factor analysis, Ward roles and role dynamics."""

__version__ = "0.1.0"
