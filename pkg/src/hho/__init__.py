"""Hybrid High-Order discretization of Leray-Lions problems on polytopal meshes."""

__version__ = "0.1.0"
