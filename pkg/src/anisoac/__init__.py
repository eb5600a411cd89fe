"""Anisotropic Allen-Cahn energies on periodic tori: mountain-pass saddles and
geometric diagnostics of their diffuse interfaces."""

__version__ = "0.1.0"
