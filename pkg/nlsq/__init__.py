"""Classical and quantum correspondence for the periodic cubic NLS."""

__version__ = "0.3.0"
