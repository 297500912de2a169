"""Doublon formation in a two-component extended Hubbard chain: exact and circuit pipelines."""

from .model import ModelParams, ParameterError, SectorBasis, build_fock_hamiltonian, build_sector_basis, jordan_wigner

__all__ = [
    "ModelParams",
    "ParameterError",
    "SectorBasis",
    "build_fock_hamiltonian",
    "build_sector_basis",
    "jordan_wigner",
]
__version__ = "0.1.0"
