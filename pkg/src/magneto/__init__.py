"""Neural emulation toolkit for magnetic tape recorders."""

__version__ = "0.1.0"
