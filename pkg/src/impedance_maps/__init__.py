"""Helmholtz impedance-to-impedance maps, a ray oracle and a Schwarz simulator."""

__version__ = "0.1.0"
