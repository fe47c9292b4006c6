"""Level-set topology optimization with density-informed hole nucleation."""

__version__ = "0.1.0"
