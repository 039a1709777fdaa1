"""Laser-dressed (Kramers-Henneberger) operators for a charge on a curved surface."""

__version__ = "0.1.0"
