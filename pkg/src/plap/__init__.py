"""Anisotropic p-Laplacian eigenvalues on stretched cylinders."""

__version__ = "0.1.0"
