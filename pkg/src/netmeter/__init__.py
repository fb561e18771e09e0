"""Net-metering false-reading attack simulation and detection."""

__version__ = "0.1.0"
