"""Flight trajectory reconstruction from irregular ADS-B point streams."""

__version__ = "0.1.0"
