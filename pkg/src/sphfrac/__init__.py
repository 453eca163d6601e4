"""Weakly compressible SPH with pseudo-spring brittle fracture and FSI."""

__version__ = "0.1.0"
