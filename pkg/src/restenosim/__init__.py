"""Finite element simulation of in-stent restenosis.

PDGF, extracellular matrix and smooth muscle cell transport in the arterial
wall, coupled to volumetric growth of an anisotropic hyperelastic wall.
"""
__version__ = "0.1.0"
