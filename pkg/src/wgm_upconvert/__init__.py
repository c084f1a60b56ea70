"""Design and analysis of resonant microwave-to-optical up-converters."""

__version__ = "0.1.0"
