"""Random Lindblad generators with Student's-t system-environment interactions."""

__version__ = "0.1.0"
