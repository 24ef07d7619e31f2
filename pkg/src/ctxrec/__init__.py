"""Context-aware mobile app recommendation workbench."""

__version__ = "0.1.0"
