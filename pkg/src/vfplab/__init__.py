"""Numerical laboratory for the kinetic Vlasov-Fokker-Planck equation."""

__version__ = "0.1.0"
