"""Pseudospectral simulator and verification harness for long-time scattering
of the Hartree, screened-Hartree (Bopp-Podolsky), and scattering-critical
power NLS equations in 2 and 3 dimensions."""

__version__ = "0.1.0"
