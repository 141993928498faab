"""Feature-based source debloating driven by comment mappings."""

__version__ = "0.1.0"
